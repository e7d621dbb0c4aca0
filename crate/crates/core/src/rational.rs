//! Exact rational values for thresholds, scores and feature coordinates.
//!
//! Everything that crosses a split test is kept exact: a witness sitting on a
//! threshold must take the same branch the model file says it takes.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RationalError {
    #[error("malformed number `{0}`")]
    Malformed(String),
    #[error("number `{0}` exceeds the supported precision")]
    Overflow(String),
    #[error("arithmetic overflow")]
    ArithmeticOverflow,
}

/// An exact rational number backed by `Ratio<i128>`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Rational(Ratio<i128>);

impl Rational {
    pub const ZERO: Rational = Rational(Ratio::new_raw(0, 1));
    pub const ONE: Rational = Rational(Ratio::new_raw(1, 1));

    pub fn from_integer(n: i128) -> Self {
        Rational(Ratio::from_integer(n))
    }

    pub fn new(numer: i128, denom: i128) -> Result<Self, RationalError> {
        if denom == 0 {
            return Err(RationalError::Malformed(format!("{numer}/{denom}")));
        }
        Ok(Rational(Ratio::new(numer, denom)))
    }

    pub fn numer(&self) -> i128 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i128 {
        *self.0.denom()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn floor(&self) -> Self {
        Rational(self.0.floor())
    }

    pub fn ceil(&self) -> Self {
        Rational(self.0.ceil())
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, RationalError> {
        self.0
            .checked_add(&other.0)
            .map(Rational)
            .ok_or(RationalError::ArithmeticOverflow)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self, RationalError> {
        self.0
            .checked_sub(&other.0)
            .map(Rational)
            .ok_or(RationalError::ArithmeticOverflow)
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self, RationalError> {
        self.0
            .checked_mul(&other.0)
            .map(Rational)
            .ok_or(RationalError::ArithmeticOverflow)
    }

    pub fn checked_div(&self, other: &Self) -> Result<Self, RationalError> {
        if other.0.is_zero() {
            return Err(RationalError::ArithmeticOverflow);
        }
        self.0
            .checked_div(&other.0)
            .map(Rational)
            .ok_or(RationalError::ArithmeticOverflow)
    }

    /// Midpoint of `self` and `other`, exact.
    pub fn midpoint(&self, other: &Self) -> Result<Self, RationalError> {
        self.checked_add(other)?
            .checked_div(&Rational::from_integer(2))
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Finite decimal expansion when the denominator only has factors 2 and 5.
    pub fn to_decimal_string(&self) -> Option<String> {
        let mut denom = self.denom();
        let (mut twos, mut fives) = (0u32, 0u32);
        while denom % 2 == 0 {
            denom /= 2;
            twos += 1;
        }
        while denom % 5 == 0 {
            denom /= 5;
            fives += 1;
        }
        if denom != 1 {
            return None;
        }
        let scale = twos.max(fives);
        let factor = 10i128.checked_pow(scale)?;
        let scaled = self.numer().checked_mul(factor / self.denom())?;
        let negative = scaled < 0;
        let digits = scaled.unsigned_abs().to_string();
        let scale = scale as usize;
        let mut out = String::new();
        if negative {
            out.push('-');
        }
        if scale == 0 {
            out.push_str(&digits);
        } else if digits.len() > scale {
            let (int, frac) = digits.split_at(digits.len() - scale);
            out.push_str(int);
            out.push('.');
            out.push_str(frac);
        } else {
            out.push_str("0.");
            out.push_str(&"0".repeat(scale - digits.len()));
            out.push_str(&digits);
        }
        Some(out)
    }
}

impl FromStr for Rational {
    type Err = RationalError;

    /// Accepts `123`, `-1.5`, `2.5e-3` and `7/3`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let text = s.trim();
        let malformed = || RationalError::Malformed(s.to_string());
        let overflow = || RationalError::Overflow(s.to_string());
        if text.is_empty() {
            return Err(malformed());
        }
        if let Some((n, d)) = text.split_once('/') {
            let n: i128 = n.trim().parse().map_err(|_| malformed())?;
            let d: i128 = d.trim().parse().map_err(|_| malformed())?;
            return Rational::new(n, d).map_err(|_| malformed());
        }
        let (mantissa, exponent) = match text.find(['e', 'E']) {
            Some(pos) => {
                let exp: i32 = text[pos + 1..].parse().map_err(|_| malformed())?;
                (&text[..pos], exp)
            }
            None => (text, 0),
        };
        let (negative, body) = match mantissa.as_bytes().first() {
            Some(b'-') => (true, &mantissa[1..]),
            Some(b'+') => (false, &mantissa[1..]),
            _ => (false, mantissa),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(malformed());
        }
        if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        let digits = format!("{int_part}{frac_part}");
        let digits = digits.trim_start_matches('0');
        let mut numer: i128 = if digits.is_empty() {
            0
        } else {
            digits.parse().map_err(|_| overflow())?
        };
        if negative {
            numer = -numer;
        }
        let scale = exponent - frac_part.len() as i32;
        if numer == 0 {
            return Ok(Rational::ZERO);
        }
        let pow = |e: i32| 10i128.checked_pow(e.unsigned_abs()).ok_or_else(overflow);
        if scale >= 0 {
            let n = numer.checked_mul(pow(scale)?).ok_or_else(overflow)?;
            Ok(Rational::from_integer(n))
        } else {
            Ok(Rational(Ratio::new(numer, pow(scale)?)))
        }
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_decimal_string() {
            Some(s) => f.write_str(&s),
            None => write!(f, "{}/{}", self.numer(), self.denom()),
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl From<i64> for Rational {
    fn from(n: i64) -> Self {
        Rational::from_integer(n as i128)
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

// Unchecked operators are only used on values known to be small (tests,
// generator output). Model arithmetic goes through the checked methods.
impl Add for Rational {
    type Output = Rational;
    fn add(self, rhs: Rational) -> Rational {
        self.checked_add(&rhs).expect("rational overflow")
    }
}

impl Sub for Rational {
    type Output = Rational;
    fn sub(self, rhs: Rational) -> Rational {
        self.checked_sub(&rhs).expect("rational overflow")
    }
}

impl Zero for Rational {
    fn zero() -> Self {
        Rational::ZERO
    }
    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl One for Rational {
    fn one() -> Self {
        Rational::ONE
    }
}

impl Mul for Rational {
    type Output = Rational;
    fn mul(self, rhs: Rational) -> Rational {
        self.checked_mul(&rhs).expect("rational overflow")
    }
}

impl serde::Serialize for Rational {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for Rational {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        rational_from_json(&value).map_err(serde::de::Error::custom)
    }
}

/// Reads a JSON string (`"0.25"`) or number (`0.25`) exactly.
pub fn rational_from_json(value: &serde_json::Value) -> Result<Rational, RationalError> {
    match value {
        serde_json::Value::String(s) => s.parse(),
        serde_json::Value::Number(n) => n.to_string().parse(),
        other => Err(RationalError::Malformed(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    #[test]
    fn parses_decimal_forms() {
        assert_eq!(r("1.5"), Rational::new(3, 2).unwrap());
        assert_eq!(r("-0.25"), Rational::new(-1, 4).unwrap());
        assert_eq!(r("2.5e-3"), Rational::new(1, 400).unwrap());
        assert_eq!(r("1e3"), Rational::from_integer(1000));
        assert_eq!(r(".5"), Rational::new(1, 2).unwrap());
        assert_eq!(r("7/3"), Rational::new(7, 3).unwrap());
        assert_eq!(r("-0"), Rational::ZERO);
        assert!("1.2.3".parse::<Rational>().is_err());
        assert!("abc".parse::<Rational>().is_err());
        assert!("".parse::<Rational>().is_err());
        assert!("1/0".parse::<Rational>().is_err());
    }

    #[test]
    fn score_sum_is_exact() {
        let sum = r("-0.564179122").checked_add(&r("-0.456195921")).unwrap();
        assert_eq!(sum, r("-1.020375043"));
        assert_eq!(sum.to_string(), "-1.020375043");
    }

    #[test]
    fn decimal_display() {
        assert_eq!(r("0.0100278556").to_string(), "0.0100278556");
        assert_eq!(r("12").to_string(), "12");
        assert_eq!(r("-0.05").to_string(), "-0.05");
        assert_eq!(Rational::new(1, 3).unwrap().to_string(), "1/3");
        assert_eq!(r("6.50").to_string(), "6.5");
    }

    #[test]
    fn midpoint_is_exact() {
        assert_eq!(r("2").midpoint(&r("6")).unwrap(), r("4"));
        assert_eq!(r("0.1725").midpoint(&r("0.2775")).unwrap(), r("0.225"));
    }

    #[test]
    fn too_many_digits_is_overflow() {
        let long = "1".repeat(60);
        assert!(matches!(long.parse::<Rational>(), Err(RationalError::Overflow(_))));
    }

    proptest::proptest! {
        #[test]
        fn display_parse_roundtrip(n in -1_000_000_000i64..1_000_000_000, scale in 0u32..9) {
            let x = Rational::new(n as i128, 10i128.pow(scale)).unwrap();
            let back: Rational = x.to_string().parse().unwrap();
            proptest::prop_assert_eq!(back, x);
        }
    }
}
