//! Propositional encoding of "the ensemble does not predict `c`" for binary
//! majority-vote forests.
//!
//! Layout of the formula:
//! * one indicator per (feature, cell) with an exactly-one constraint per feature;
//! * one output variable per tree, true iff that tree votes class 1;
//! * a sequential counter over the tree outputs;
//! * a unit on the counter output that rules out class `c`.
//!
//! Fixing a set of features to an instance's values is done with assumptions
//! on the cell indicators, so one formula serves every query about an instance.

use std::fmt;

use thiserror::Error;

use crate::cnf::{lit_value, Clause, CnfFormula, Lit, Var};
use crate::model::{Domain, FeatureSet, Instance, Leaf, ModelKind, Node, SplitOp, Tree, TreeEnsembleModel};
use crate::rational::{Rational, RationalError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodingError {
    #[error("only rf-majority models can be encoded")]
    UnsupportedKind,
    #[error("only binary classifiers can be encoded (model has {0} classes)")]
    NotBinary(u32),
    #[error("target class {0} is not a class of the model")]
    UnknownClass(u32),
    #[error("value {value} of feature {feature} lies in no cell")]
    NoCell { feature: usize, value: Rational },
    #[error("assignment selects {selected} cells of feature {feature}")]
    NotExactlyOne { feature: usize, selected: usize },
    #[error("feature {0} is not a feature of the model")]
    UnknownFeature(usize),
    #[error(transparent)]
    Numeric(#[from] RationalError),
}

/// What a variable of the formula stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRole {
    Cell { feature: usize, cell: usize },
    TreeVote { tree: usize },
    Counter { prefix: usize, at_least: usize },
}

impl fmt::Display for VarRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarRole::Cell { feature, cell } => write!(f, "feature {feature} cell {cell}"),
            VarRole::TreeVote { tree } => write!(f, "tree {tree} votes 1"),
            VarRole::Counter { prefix, at_least } => {
                write!(f, "counter: at least {at_least} of the first {prefix} trees vote 1")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellInterval {
    pub lower: Rational,
    pub lower_closed: bool,
    pub upper: Rational,
    pub upper_closed: bool,
    /// Concrete value used when decoding.
    pub representative: Rational,
}

impl CellInterval {
    pub fn contains(&self, x: &Rational) -> bool {
        let lower_ok = *x > self.lower || (self.lower_closed && *x == self.lower);
        let upper_ok = *x < self.upper || (self.upper_closed && *x == self.upper);
        lower_ok && upper_ok
    }
}

impl fmt::Display for CellInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.lower_closed { "[" } else { "(" };
        let close = if self.upper_closed { "]" } else { ")" };
        write!(f, "{open}{}, {}{close}", self.lower, self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureCells {
    pub feature: usize,
    pub cells: Vec<CellInterval>,
    pub vars: Vec<Var>,
}

/// Per-feature partition into cells, with one indicator variable per cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalAbstraction {
    features: Vec<FeatureCells>,
}

/// Assumption literals fixing features to the cells holding an instance's values.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssumptionSet {
    pub literals: Vec<Lit>,
}

/// A boundary between two cells: `(t, false)` sits just below `t`
/// (split `x < t`), `(t, true)` just above it (split `x <= t`).
type Cut = (Rational, bool);

impl IntervalAbstraction {
    fn build(model: &TreeEnsembleModel, formula: &mut CnfFormula) -> Result<Self, EncodingError> {
        let mut features = Vec::with_capacity(model.num_features());
        for spec in model.features() {
            let cells = match spec.domain {
                Domain::Bool => vec![
                    point_cell(Rational::ZERO),
                    point_cell(Rational::ONE),
                ],
                domain => {
                    let mut cuts: Vec<Cut> = model
                        .trees()
                        .iter()
                        .flat_map(|t| t.splits())
                        .filter(|(feature, _, _)| *feature == spec.id)
                        .map(|(_, op, thr)| (thr, op == SplitOp::Le))
                        .collect();
                    cuts.sort();
                    cuts.dedup();
                    cells_between_cuts(domain, &cuts)?
                }
            };
            let vars = cells.iter().map(|_| formula.fresh_var()).collect();
            features.push(FeatureCells {
                feature: spec.id,
                cells,
                vars,
            });
        }
        Ok(IntervalAbstraction { features })
    }

    pub fn features(&self) -> &[FeatureCells] {
        &self.features
    }

    pub fn feature(&self, id: usize) -> &FeatureCells {
        &self.features[id - 1]
    }

    /// Index of the cell of feature `id` containing `value`.
    pub fn cell_of(&self, id: usize, value: &Rational) -> Result<usize, EncodingError> {
        let cells = &self
            .features
            .get(id.wrapping_sub(1))
            .ok_or(EncodingError::UnknownFeature(id))?
            .cells;
        cells
            .iter()
            .position(|c| c.contains(value))
            .ok_or(EncodingError::NoCell {
                feature: id,
                value: *value,
            })
    }

    /// One literal per feature in `fixed`, selecting the instance's cell.
    pub fn assumptions_for(&self, instance: &Instance, fixed: &FeatureSet) -> Result<AssumptionSet, EncodingError> {
        let mut literals = Vec::with_capacity(fixed.len());
        for id in fixed.iter() {
            if id == 0 || id > self.features.len() {
                return Err(EncodingError::UnknownFeature(id));
            }
            let value = instance
                .point
                .get(id - 1)
                .ok_or(EncodingError::UnknownFeature(id))?;
            let cell = self.cell_of(id, value)?;
            literals.push(self.features[id - 1].vars[cell].positive());
        }
        Ok(AssumptionSet { literals })
    }

    /// The representative point of the cells selected by `assignment`.
    pub fn decode(&self, assignment: &[bool]) -> Result<Vec<Rational>, EncodingError> {
        self.features
            .iter()
            .map(|fc| {
                let selected: Vec<usize> = (0..fc.cells.len())
                    .filter(|&k| lit_value(assignment, fc.vars[k].positive()))
                    .collect();
                match selected.as_slice() {
                    [k] => Ok(fc.cells[*k].representative),
                    _ => Err(EncodingError::NotExactlyOne {
                        feature: fc.feature,
                        selected: selected.len(),
                    }),
                }
            })
            .collect()
    }
}

fn point_cell(v: Rational) -> CellInterval {
    CellInterval {
        lower: v,
        lower_closed: true,
        upper: v,
        upper_closed: true,
        representative: v,
    }
}

fn cells_between_cuts(domain: Domain, cuts: &[Cut]) -> Result<Vec<CellInterval>, EncodingError> {
    let integral = matches!(domain, Domain::Int { .. });
    let mut cells = Vec::new();
    let mut lower = (domain.lo(), true);
    for &(t, above) in cuts.iter().chain(std::iter::once(&(domain.hi(), true))) {
        // cut (t, true) closes the cell at t]; cut (t, false) at t)
        let upper = (t, above);
        if let Some(cell) = make_cell(lower, upper, integral)? {
            cells.push(cell);
        }
        lower = (t, !above);
    }
    Ok(cells)
}

fn make_cell(lower: (Rational, bool), upper: (Rational, bool), integral: bool) -> Result<Option<CellInterval>, EncodingError> {
    let (lo, lo_closed) = lower;
    let (hi, hi_closed) = upper;
    let nonempty = lo < hi || (lo == hi && lo_closed && hi_closed);
    if !nonempty {
        return Ok(None);
    }
    let representative = if integral {
        let smallest = if lo_closed && lo.is_integer() {
            lo
        } else {
            lo.floor().checked_add(&Rational::ONE)?
        };
        let inside = smallest < hi || (hi_closed && smallest == hi);
        if !inside {
            return Ok(None);
        }
        smallest
    } else if lo == hi {
        lo
    } else {
        lo.midpoint(&hi)?
    };
    Ok(Some(CellInterval {
        lower: lo,
        lower_closed: lo_closed,
        upper: hi,
        upper_closed: hi_closed,
        representative,
    }))
}

/// Which prediction the formula rules out and how.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassSide {
    /// The class whose prediction is excluded.
    pub target: u32,
    /// The class every satisfying assignment is predicted as.
    pub flipped: u32,
    /// `floor(n / 2)`: class 1 wins iff more than this many trees vote 1.
    pub vote_bound: usize,
    pub num_trees: usize,
}

#[derive(Debug, Clone)]
pub struct Encoding {
    pub formula: CnfFormula,
    pub abstraction: IntervalAbstraction,
    pub class_side: ClassSide,
    roles: Vec<VarRole>,
}

impl Encoding {
    pub fn role(&self, var: Var) -> VarRole {
        self.roles[var.index() as usize - 1]
    }

    pub fn tree_vote_var(&self, tree: usize) -> Var {
        let offset = self
            .roles
            .iter()
            .position(|r| *r == VarRole::TreeVote { tree })
            .expect("every tree has an output variable");
        Var::new(offset as u32 + 1)
    }
}

/// Builds the formula that is satisfiable exactly by the cell assignments
/// whose points are not predicted as `target`.
pub fn build_encoding(model: &TreeEnsembleModel, target: u32) -> Result<Encoding, EncodingError> {
    if model.kind() != ModelKind::RfMajority {
        return Err(EncodingError::UnsupportedKind);
    }
    if model.num_classes() != 2 {
        return Err(EncodingError::NotBinary(model.num_classes()));
    }
    if target > 1 {
        return Err(EncodingError::UnknownClass(target));
    }
    let mut formula = CnfFormula::new();
    let abstraction = IntervalAbstraction::build(model, &mut formula)?;
    let mut roles: Vec<VarRole> = Vec::new();
    for fc in abstraction.features() {
        for cell in 0..fc.cells.len() {
            roles.push(VarRole::Cell {
                feature: fc.feature,
                cell,
            });
        }
    }

    for fc in abstraction.features() {
        formula.add_clause(fc.vars.iter().map(|v| v.positive()).collect::<Clause>());
        for a in 0..fc.vars.len() {
            for b in a + 1..fc.vars.len() {
                formula.add_clause(vec![fc.vars[a].negative(), fc.vars[b].negative()]);
            }
        }
    }

    let mut outputs = Vec::with_capacity(model.trees().len());
    for (index, tree) in model.trees().iter().enumerate() {
        let out = formula.fresh_var();
        roles.push(VarRole::TreeVote { tree: index });
        encode_tree(tree, &abstraction, out, &mut formula);
        outputs.push(out.positive());
    }

    let n = outputs.len();
    let vote_bound = n / 2;
    let first_counter = formula.num_vars();
    let registers = sequential_counter(&mut formula, &outputs, vote_bound + 1);
    for var in first_counter + 1..=formula.num_vars() {
        let register = registers
            .iter()
            .position(|row| row.iter().any(|l| l.var().index() == var))
            .expect("counter variable belongs to a register row");
        let at_least = registers[register]
            .iter()
            .position(|l| l.var().index() == var)
            .expect("located above")
            + 1;
        roles.push(VarRole::Counter {
            prefix: register + 1,
            at_least,
        });
    }
    let enough = registers[n - 1][vote_bound];
    if target == 1 {
        formula.add_clause(vec![!enough]);
    } else {
        formula.add_clause(vec![enough]);
    }

    for (index, role) in roles.iter().enumerate() {
        let comment = match role {
            VarRole::Cell { feature, cell } => {
                format!("var {} = feature {feature} cell {cell} {}", index + 1, abstraction.feature(*feature).cells[*cell])
            }
            other => format!("var {} = {other}", index + 1),
        };
        formula.add_comment(comment);
    }
    formula.add_comment(format!(
        "excludes class {target}: {} {vote_bound} of {n} trees vote 1",
        if target == 1 { "at most" } else { "more than" }
    ));

    Ok(Encoding {
        formula,
        abstraction,
        class_side: ClassSide {
            target,
            flipped: 1 - target,
            vote_bound,
            num_trees: n,
        },
        roles,
    })
}

/// Adds `path -> (out = leaf class)` for every leaf of `tree`.
fn encode_tree(tree: &Tree, abstraction: &IntervalAbstraction, out: Var, formula: &mut CnfFormula) {
    // allowed[f][k]: cell k of feature f is still consistent with the path
    let mut allowed: Vec<Vec<bool>> = abstraction.features().iter().map(|fc| vec![true; fc.cells.len()]).collect();
    walk(tree, 0, abstraction, &mut allowed, out, formula);
}

fn walk(
    tree: &Tree,
    index: usize,
    abstraction: &IntervalAbstraction,
    allowed: &mut Vec<Vec<bool>>,
    out: Var,
    formula: &mut CnfFormula,
) {
    match tree.node(index) {
        Node::Leaf(leaf) => {
            let class = match leaf {
                Leaf::Class(k) => *k,
                Leaf::Score(_) => unreachable!("checked by build_encoding"),
            };
            let mut clause: Clause = Vec::new();
            for (fc, mask) in abstraction.features().iter().zip(allowed.iter()) {
                if mask.iter().all(|&a| !a) {
                    // unreachable path
                    return;
                }
                if mask.iter().all(|&a| a) {
                    continue;
                }
                clause.extend(
                    mask.iter()
                        .zip(&fc.vars)
                        .filter(|(a, _)| !**a)
                        .map(|(_, v)| v.positive()),
                );
            }
            clause.push(out.lit(class == 1));
            formula.add_clause(clause);
        }
        Node::Split {
            feature,
            op,
            threshold,
            left,
            right,
        } => {
            let cells = &abstraction.feature(*feature).cells;
            let saved = allowed[feature - 1].clone();
            let goes_left: Vec<bool> = cells.iter().map(|c| op.holds(&c.representative, threshold)).collect();
            for (a, l) in allowed[feature - 1].iter_mut().zip(&goes_left) {
                *a &= *l;
            }
            walk(tree, *left, abstraction, allowed, out, formula);
            allowed[feature - 1] = saved.clone();
            for (a, l) in allowed[feature - 1].iter_mut().zip(&goes_left) {
                *a &= !*l;
            }
            walk(tree, *right, abstraction, allowed, out, formula);
            allowed[feature - 1] = saved;
        }
    }
}

/// Sequential counter over `inputs`. Row `i` holds registers
/// `r[i][j] <-> (at least j + 1 of inputs[0..=i] are true)` for
/// `j < min(i + 1, cap)`. Both directions are encoded, so the registers are
/// functionally determined by the inputs.
pub fn sequential_counter(formula: &mut CnfFormula, inputs: &[Lit], cap: usize) -> Vec<Vec<Lit>> {
    let mut rows: Vec<Vec<Lit>> = Vec::with_capacity(inputs.len());
    for (i, &x) in inputs.iter().enumerate() {
        let width = (i + 1).min(cap);
        let row: Vec<Lit> = (0..width).map(|_| formula.fresh_var().positive()).collect();
        for j in 0..width {
            let s = row[j];
            let prev_same = if i > 0 { rows[i - 1].get(j).copied() } else { None };
            let prev_below = if j == 0 {
                None
            } else {
                rows[i - 1].get(j - 1).copied()
            };
            // forward: prev_same -> s ; (prev_below & x) -> s
            if let Some(p) = prev_same {
                formula.add_clause(vec![!p, s]);
            }
            match prev_below {
                Some(p) => formula.add_clause(vec![!p, !x, s]),
                None if j == 0 => formula.add_clause(vec![!x, s]),
                None => {}
            }
            // backward: s -> prev_same | x ; s -> prev_same | prev_below
            let mut first: Clause = vec![!s, x];
            if let Some(p) = prev_same {
                first.push(p);
            }
            formula.add_clause(first);
            if j > 0 {
                let mut second: Clause = vec![!s];
                if let Some(p) = prev_same {
                    second.push(p);
                }
                second.push(prev_below.expect("j > 0 implies a previous row"));
                formula.add_clause(second);
            }
        }
        rows.push(row);
    }
    rows
}
