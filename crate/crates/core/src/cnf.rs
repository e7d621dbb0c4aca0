//! Literals, clauses and CNF formulas, with DIMACS text I/O.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A propositional variable, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Var(u32);

impl Var {
    pub fn new(index: u32) -> Self {
        assert!(index >= 1, "variables are 1-based");
        Var(index)
    }

    pub fn index(self) -> u32 {
        self.0
    }

    pub fn positive(self) -> Lit {
        Lit(self.0 as i32)
    }

    pub fn negative(self) -> Lit {
        Lit(-(self.0 as i32))
    }

    pub fn lit(self, polarity: bool) -> Lit {
        if polarity {
            self.positive()
        } else {
            self.negative()
        }
    }
}

/// A signed DIMACS literal.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Lit(i32);

impl Lit {
    pub fn from_dimacs(value: i32) -> Self {
        assert!(value != 0, "0 is not a literal");
        Lit(value)
    }

    pub fn to_dimacs(self) -> i32 {
        self.0
    }

    pub fn var(self) -> Var {
        Var(self.0.unsigned_abs())
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    /// Dense index `2 * (var - 1) + sign`, handy for watch lists.
    pub fn code(self) -> usize {
        ((self.0.unsigned_abs() as usize - 1) << 1) | usize::from(self.0 < 0)
    }
}

impl std::ops::Not for Lit {
    type Output = Lit;
    fn not(self) -> Lit {
        Lit(-self.0)
    }
}

impl fmt::Debug for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub type Clause = Vec<Lit>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DimacsError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing `p cnf` header")]
    MissingHeader,
    #[error("header declares {declared} clauses, found {found}")]
    ClauseCount { declared: usize, found: usize },
}

/// A CNF formula with a dense variable range `1..=num_vars`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CnfFormula {
    num_vars: u32,
    clauses: Vec<Clause>,
    comments: Vec<String>,
}

impl CnfFormula {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_vars(num_vars: u32) -> Self {
        CnfFormula {
            num_vars,
            ..Self::default()
        }
    }

    pub fn fresh_var(&mut self) -> Var {
        self.num_vars += 1;
        Var(self.num_vars)
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    /// Adds a clause, growing the variable range if needed.
    pub fn add_clause(&mut self, clause: impl Into<Clause>) {
        let clause = clause.into();
        for lit in &clause {
            self.num_vars = self.num_vars.max(lit.var().index());
        }
        self.clauses.push(clause);
    }

    pub fn add_comment(&mut self, comment: impl Into<String>) {
        self.comments.push(comment.into());
    }

    pub fn comments(&self) -> &[String] {
        &self.comments
    }

    /// Evaluates every clause under `assignment` (indexed by variable, slot 0 unused).
    pub fn satisfied_by(&self, assignment: &[bool]) -> bool {
        self.clauses
            .iter()
            .all(|clause| clause.iter().any(|&lit| lit_value(assignment, lit)))
    }

    pub fn write_dimacs<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for comment in &self.comments {
            writeln!(out, "c {comment}")?;
        }
        writeln!(out, "p cnf {} {}", self.num_vars, self.clauses.len())?;
        for clause in &self.clauses {
            for lit in clause {
                write!(out, "{lit} ")?;
            }
            writeln!(out, "0")?;
        }
        Ok(())
    }

    pub fn to_dimacs_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_dimacs(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("DIMACS output is ASCII")
    }

    pub fn parse_dimacs(text: &str) -> Result<Self, DimacsError> {
        let mut formula = CnfFormula::new();
        let mut declared: Option<(u32, usize)> = None;
        let mut current: Clause = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('c') {
                if rest.is_empty() || rest.starts_with(' ') {
                    formula.comments.push(rest.trim_start().to_string());
                    continue;
                }
            }
            if line.starts_with('%') {
                break;
            }
            if let Some(rest) = line.strip_prefix("p ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                let bad = || DimacsError::Syntax {
                    line: line_no,
                    message: format!("malformed header `{line}`"),
                };
                if parts.len() != 3 || parts[0] != "cnf" || declared.is_some() {
                    return Err(bad());
                }
                let vars = parts[1].parse().map_err(|_| bad())?;
                let clauses = parts[2].parse().map_err(|_| bad())?;
                declared = Some((vars, clauses));
                formula.num_vars = vars;
                continue;
            }
            let Some((max_var, _)) = declared else {
                return Err(DimacsError::MissingHeader);
            };
            for token in line.split_whitespace() {
                let value: i32 = token.parse().map_err(|_| DimacsError::Syntax {
                    line: line_no,
                    message: format!("invalid literal `{token}`"),
                })?;
                if value == 0 {
                    formula.clauses.push(std::mem::take(&mut current));
                } else {
                    if value.unsigned_abs() > max_var {
                        return Err(DimacsError::Syntax {
                            line: line_no,
                            message: format!("literal {value} exceeds declared variable count {max_var}"),
                        });
                    }
                    current.push(Lit(value));
                }
            }
        }
        let Some((_, count)) = declared else {
            return Err(DimacsError::MissingHeader);
        };
        if !current.is_empty() {
            formula.clauses.push(current);
        }
        if formula.clauses.len() != count {
            return Err(DimacsError::ClauseCount {
                declared: count,
                found: formula.clauses.len(),
            });
        }
        Ok(formula)
    }
}

/// Truth value of `lit` under a variable-indexed assignment.
pub fn lit_value(assignment: &[bool], lit: Lit) -> bool {
    let value = assignment
        .get(lit.var().index() as usize)
        .copied()
        .unwrap_or(false);
    value == lit.is_positive()
}

/// Pigeonhole principle: `pigeons` pigeons into `holes` holes, one per hole.
/// Unsatisfiable whenever `pigeons > holes`.
pub fn pigeonhole(pigeons: u32, holes: u32) -> CnfFormula {
    let var = |p: u32, h: u32| Var::new(p * holes + h + 1);
    let mut formula = CnfFormula::with_vars(pigeons * holes);
    for p in 0..pigeons {
        formula.add_clause((0..holes).map(|h| var(p, h).positive()).collect::<Clause>());
    }
    for h in 0..holes {
        for p in 0..pigeons {
            for q in p + 1..pigeons {
                formula.add_clause(vec![var(p, h).negative(), var(q, h).negative()]);
            }
        }
    }
    formula
}
