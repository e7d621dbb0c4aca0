//! The second explainer: exact WAXp/WCXp decisions by enumerating the cell
//! decomposition of feature space.
//!
//! Each feature's domain is cut at every threshold any tree tests on it.
//! Every tree takes the same path for all points of a cell product, so
//! checking one representative per cell combination decides the predicate
//! exactly. This module deliberately shares nothing with the CNF encoding
//! or the SAT solver.

use std::fmt;

use thiserror::Error;

use crate::model::{Domain, FeatureSet, Instance, ModelError, SplitOp, TreeEnsembleModel};
use crate::par::{self, Execution};
use crate::rational::{Rational, RationalError};

pub const DEFAULT_ENUMERATION_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("enumeration of {combinations} cell combinations exceeds the budget of {budget}")]
    BudgetExceeded { combinations: u128, budget: u64 },
    #[error("feature set {0} is not a subset of the model's features")]
    InvalidFeatureSet(FeatureSet),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numeric(#[from] RationalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Endpoint {
    pub value: Rational,
    pub closed: bool,
}

/// One interval of a feature's partition, with the point used to stand for it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub lower: Endpoint,
    pub upper: Endpoint,
    pub representative: Rational,
}

impl Cell {
    pub fn contains(&self, x: &Rational) -> bool {
        let above = if self.lower.closed {
            *x >= self.lower.value
        } else {
            *x > self.lower.value
        };
        let below = if self.upper.closed {
            *x <= self.upper.value
        } else {
            *x < self.upper.value
        };
        above && below
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}, {}{}",
            if self.lower.closed { '[' } else { '(' },
            self.lower.value,
            self.upper.value,
            if self.upper.closed { ']' } else { ')' }
        )
    }
}

/// Per feature (index `id - 1`), its ordered cells.
pub fn cells_of(model: &TreeEnsembleModel) -> Result<Vec<Vec<Cell>>, RationalError> {
    model
        .features()
        .iter()
        .map(|spec| {
            let tests: Vec<(SplitOp, Rational)> = model
                .trees()
                .iter()
                .flat_map(|t| t.splits())
                .filter(|(feature, _, _)| *feature == spec.id)
                .map(|(_, op, thr)| (op, thr))
                .collect();
            feature_cells(spec.domain, &tests)
        })
        .collect()
}

/// Finest pieces first (open gaps and threshold points), then adjacent pieces
/// that answer every split test the same way are merged.
fn feature_cells(domain: Domain, tests: &[(SplitOp, Rational)]) -> Result<Vec<Cell>, RationalError> {
    if domain == Domain::Bool {
        return Ok([Rational::ZERO, Rational::ONE]
            .into_iter()
            .map(|v| Cell {
                lower: Endpoint { value: v, closed: true },
                upper: Endpoint { value: v, closed: true },
                representative: v,
            })
            .collect());
    }
    let (lo, hi) = (domain.lo(), domain.hi());
    let mut points: Vec<Rational> = tests.iter().map(|(_, t)| *t).filter(|t| lo < *t && *t < hi).collect();
    points.sort();
    points.dedup();

    // pieces as (lower, upper) endpoint pairs, in increasing order
    let mut pieces: Vec<(Endpoint, Endpoint)> = Vec::new();
    let closed = |value| Endpoint { value, closed: true };
    let open = |value| Endpoint { value, closed: false };
    pieces.push((closed(lo), closed(lo)));
    let mut previous = lo;
    for &p in &points {
        pieces.push((open(previous), open(p)));
        pieces.push((closed(p), closed(p)));
        previous = p;
    }
    if lo < hi {
        pieces.push((open(previous), open(hi)));
        pieces.push((closed(hi), closed(hi)));
    }
    let integral = matches!(domain, Domain::Int { .. });
    let pieces: Vec<(Endpoint, Endpoint, Rational)> = pieces
        .into_iter()
        .filter_map(|(a, b)| piece_sample(a, b, integral).map(|s| (a, b, s)))
        .collect();

    let signature = |x: &Rational| -> Vec<bool> { tests.iter().map(|(op, t)| op.holds(x, t)).collect() };
    let mut cells: Vec<Cell> = Vec::new();
    let mut current: Option<(Endpoint, Endpoint, Vec<bool>)> = None;
    for (a, b, sample) in pieces {
        let sig = signature(&sample);
        match &mut current {
            Some((_, upper, s)) if *s == sig => *upper = b,
            _ => {
                if let Some((l, u, _)) = current.take() {
                    cells.push(finish_cell(l, u, integral)?);
                }
                current = Some((a, b, sig));
            }
        }
    }
    if let Some((l, u, _)) = current {
        cells.push(finish_cell(l, u, integral)?);
    }
    Ok(cells)
}

/// Some point of the piece, or `None` if it is empty (or has no integer).
fn piece_sample(a: Endpoint, b: Endpoint, integral: bool) -> Option<Rational> {
    if a.value > b.value || (a.value == b.value && !(a.closed && b.closed)) {
        return None;
    }
    if integral {
        let first = if a.closed && a.value.is_integer() {
            a.value
        } else {
            a.value.floor() + Rational::ONE
        };
        let fits = if b.closed { first <= b.value } else { first < b.value };
        return fits.then_some(first);
    }
    if a.value == b.value {
        Some(a.value)
    } else {
        a.value.midpoint(&b.value).ok()
    }
}

fn finish_cell(lower: Endpoint, upper: Endpoint, integral: bool) -> Result<Cell, RationalError> {
    let representative = if integral {
        piece_sample(lower, upper, true).expect("merged cells contain an integer")
    } else if lower.value == upper.value {
        lower.value
    } else {
        lower.value.midpoint(&upper.value)?
    };
    Ok(Cell {
        lower,
        upper,
        representative,
    })
}

/// Answer of the enumeration oracle. `point` is the counterexample for a
/// failed WAXp check, or the witness for a successful WCXp check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SAnswer {
    pub holds: bool,
    pub point: Option<Vec<Rational>>,
}

/// Cell-enumeration oracle over one model.
pub struct CellOracle<'m> {
    model: &'m TreeEnsembleModel,
    cells: Vec<Vec<Cell>>,
    budget: u64,
    execution: Execution,
}

impl<'m> CellOracle<'m> {
    pub fn new(model: &'m TreeEnsembleModel) -> Result<Self, OracleError> {
        Ok(CellOracle {
            model,
            cells: cells_of(model)?,
            budget: DEFAULT_ENUMERATION_BUDGET,
            execution: Execution::default(),
        })
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn model(&self) -> &TreeEnsembleModel {
        self.model
    }

    pub fn cells(&self) -> &[Vec<Cell>] {
        &self.cells
    }

    /// Is fixing `fixed` to the instance's values enough to force its class?
    pub fn is_waxp(&self, fixed: &FeatureSet, instance: &Instance) -> Result<SAnswer, OracleError> {
        let free = self.checked(fixed)?.complement(self.model.num_features());
        let flip = self.find_flip(&free, instance)?;
        Ok(SAnswer {
            holds: flip.is_none(),
            point: flip,
        })
    }

    /// Can the class change when only `released` may vary?
    pub fn is_wcxp(&self, released: &FeatureSet, instance: &Instance) -> Result<SAnswer, OracleError> {
        let released = self.checked(released)?;
        let flip = self.find_flip(released, instance)?;
        Ok(SAnswer {
            holds: flip.is_some(),
            point: flip,
        })
    }

    fn checked<'a>(&self, set: &'a FeatureSet) -> Result<&'a FeatureSet, OracleError> {
        if set.within(self.model.num_features()) {
            Ok(set)
        } else {
            Err(OracleError::InvalidFeatureSet(set.clone()))
        }
    }

    /// Number of cell combinations over `free`.
    pub fn combinations(&self, free: &FeatureSet) -> u128 {
        free.iter()
            .map(|i| self.cells[i - 1].len() as u128)
            .fold(1u128, |acc, n| acc.saturating_mul(n))
    }

    /// First point (in odometer order) that agrees with the instance off
    /// `free` and is classified differently.
    fn find_flip(&self, free: &FeatureSet, instance: &Instance) -> Result<Option<Vec<Rational>>, OracleError> {
        self.model.check_point(&instance.point)?;
        let combinations = self.combinations(free);
        if combinations > self.budget as u128 {
            return Err(OracleError::BudgetExceeded {
                combinations,
                budget: self.budget,
            });
        }
        let free: Vec<usize> = free.iter().collect();
        let Some((&outer, inner)) = free.split_first() else {
            let class = self.model.predict(&instance.point)?;
            return Ok((class != instance.klass).then(|| instance.point.clone()));
        };
        let outer_cells: Vec<&Cell> = self.cells[outer - 1].iter().collect();
        let result = par::find_map_first(&outer_cells, self.execution, |cell| {
            let mut point = instance.point.clone();
            point[outer - 1] = cell.representative;
            self.scan(inner, &mut point, instance.klass).transpose()
        });
        result.transpose()
    }

    fn scan(&self, free: &[usize], point: &mut [Rational], class: u32) -> Result<Option<Vec<Rational>>, OracleError> {
        let mut digits = vec![0usize; free.len()];
        for (slot, &feature) in free.iter().enumerate() {
            point[feature - 1] = self.cells[feature - 1][digits[slot]].representative;
        }
        loop {
            if self.model.predict(point)? != class {
                return Ok(Some(point.to_vec()));
            }
            // odometer step, last feature fastest
            let mut slot = free.len();
            loop {
                if slot == 0 {
                    return Ok(None);
                }
                slot -= 1;
                let feature = free[slot];
                digits[slot] += 1;
                if digits[slot] < self.cells[feature - 1].len() {
                    point[feature - 1] = self.cells[feature - 1][digits[slot]].representative;
                    break;
                }
                digits[slot] = 0;
                point[feature - 1] = self.cells[feature - 1][0].representative;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FeatureSpec, Leaf, ModelKind, Tree};

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    fn real(lo: &str, hi: &str) -> Domain {
        Domain::Real { lo: r(lo), hi: r(hi) }
    }

    fn render(cells: &[Cell]) -> Vec<String> {
        cells.iter().map(|c| c.to_string()).collect()
    }

    #[test]
    fn single_le_threshold() {
        let cells = feature_cells(real("0", "10"), &[(SplitOp::Le, r("2"))]).unwrap();
        assert_eq!(render(&cells), vec!["[0, 2]", "(2, 10]"]);
        assert_eq!(cells[0].representative, r("1"));
        assert_eq!(cells[1].representative, r("6"));
    }

    #[test]
    fn single_lt_threshold() {
        let cells = feature_cells(real("0", "10"), &[(SplitOp::Lt, r("2"))]).unwrap();
        assert_eq!(render(&cells), vec!["[0, 2)", "[2, 10]"]);
    }

    #[test]
    fn mixed_ops_on_one_threshold_isolate_the_point() {
        let cells = feature_cells(real("0", "10"), &[(SplitOp::Lt, r("2")), (SplitOp::Le, r("2"))]).unwrap();
        assert_eq!(render(&cells), vec!["[0, 2)", "[2, 2]", "(2, 10]"]);
        assert_eq!(cells[1].representative, r("2"));
    }

    #[test]
    fn unused_feature_is_one_cell() {
        let cells = feature_cells(real("-1", "1"), &[]).unwrap();
        assert_eq!(render(&cells), vec!["[-1, 1]"]);
        assert_eq!(cells[0].representative, r("0"));
    }

    #[test]
    fn middle_cell_midpoint() {
        let cells = feature_cells(real("0", "10"), &[(SplitOp::Le, r("2")), (SplitOp::Le, r("6"))]).unwrap();
        assert_eq!(cells[1].representative, r("4"));
    }

    #[test]
    fn threshold_on_domain_edge() {
        let cells = feature_cells(real("0", "10"), &[(SplitOp::Lt, r("0")), (SplitOp::Le, r("10"))]).unwrap();
        assert_eq!(render(&cells), vec!["[0, 10]"]);
        let cells = feature_cells(real("0", "10"), &[(SplitOp::Le, r("0"))]).unwrap();
        assert_eq!(render(&cells), vec!["[0, 0]", "(0, 10]"]);
    }

    #[test]
    fn integer_cells_skip_integer_free_gaps() {
        let domain = Domain::Int { lo: r("0"), hi: r("8") };
        let cells = feature_cells(domain, &[(SplitOp::Le, r("2.3")), (SplitOp::Le, r("2.7"))]).unwrap();
        // (2.3, 2.7] has no integer
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0].representative, r("0"));
        assert_eq!(cells[1].representative, r("3"));
        let cells = feature_cells(domain, &[(SplitOp::Lt, r("3"))]).unwrap();
        assert_eq!(cells[1].representative, r("3"));
    }

    #[test]
    fn boolean_features_have_two_cells() {
        assert_eq!(feature_cells(Domain::Bool, &[]).unwrap().len(), 2);
        assert_eq!(feature_cells(Domain::Bool, &[(SplitOp::Le, r("0.5"))]).unwrap().len(), 2);
    }

    #[test]
    fn representatives_lie_in_their_cells() {
        let tests = [(SplitOp::Le, r("2")), (SplitOp::Lt, r("2")), (SplitOp::Lt, r("7.5")), (SplitOp::Le, r("9"))];
        for cell in feature_cells(real("0", "10"), &tests).unwrap() {
            assert!(cell.contains(&cell.representative), "{cell}");
        }
    }

    fn stump_model() -> TreeEnsembleModel {
        let features = (1..=3)
            .map(|id| FeatureSpec {
                id,
                name: format!("x{id}"),
                domain: real("0", "10"),
            })
            .collect();
        let tree = Tree::split(3, SplitOp::Le, r("5"), Tree::leaf(Leaf::Class(0)), Tree::leaf(Leaf::Class(1)));
        TreeEnsembleModel::new(ModelKind::RfMajority, features, vec![tree], 2, Rational::ZERO).unwrap()
    }

    #[test]
    fn stump_predicates() {
        let model = stump_model();
        let oracle = CellOracle::new(&model).unwrap();
        let inst = Instance::predicted(&model, vec![r("1"), r("1"), r("7")]).unwrap();
        assert!(oracle.is_waxp(&FeatureSet::from([3]), &inst).unwrap().holds);
        assert!(oracle.is_waxp(&FeatureSet::full(3), &inst).unwrap().holds);
        let answer = oracle.is_waxp(&FeatureSet::from([1, 2]), &inst).unwrap();
        assert!(!answer.holds);
        assert_eq!(model.predict(&answer.point.unwrap()).unwrap(), 0);
        assert!(!oracle.is_wcxp(&FeatureSet::empty(), &inst).unwrap().holds);
        assert!(oracle.is_wcxp(&FeatureSet::from([3]), &inst).unwrap().holds);
        assert!(!oracle.is_wcxp(&FeatureSet::from([1, 2]), &inst).unwrap().holds);
    }

    #[test]
    fn budget_is_enforced() {
        let model = stump_model();
        let oracle = CellOracle::new(&model).unwrap().with_budget(1);
        let inst = Instance::predicted(&model, vec![r("1"), r("1"), r("7")]).unwrap();
        assert!(matches!(
            oracle.is_wcxp(&FeatureSet::from([3]), &inst),
            Err(OracleError::BudgetExceeded { combinations: 2, budget: 1 })
        ));
        assert!(oracle.is_wcxp(&FeatureSet::from([1]), &inst).is_ok());
    }

    #[test]
    fn invalid_sets_are_rejected() {
        let model = stump_model();
        let oracle = CellOracle::new(&model).unwrap();
        let inst = Instance::predicted(&model, vec![r("1"), r("1"), r("7")]).unwrap();
        assert!(matches!(
            oracle.is_waxp(&FeatureSet::from([4]), &inst),
            Err(OracleError::InvalidFeatureSet(_))
        ));
    }
}
