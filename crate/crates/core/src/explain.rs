//! Reference explainer R: WAXp/WCXp queries answered by the SAT engine with
//! a witness or a clausal proof, and deletion-based AXp/CXp extraction.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::{CnfFormula, Lit};
use crate::encoding::{build_encoding, Encoding, EncodingError};
use crate::model::{FeatureSet, Instance, ModelError, ModelKind, TreeEnsembleModel, Witness};
use crate::oracle::{CellOracle, OracleError, DEFAULT_ENUMERATION_BUDGET};
use crate::par::Execution;
use crate::proof::ClausalProof;
use crate::sat::{SolveResult, Solver, SolverConfig, SolverError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExplainError {
    #[error("instance is labelled {labelled} but the model predicts {predicted}")]
    InconsistentInstance { labelled: u32, predicted: u32 },
    #[error("feature set {0} is not a subset of the model's features")]
    InvalidFeatureSet(FeatureSet),
    #[error("indeterminate: {0}")]
    Solver(#[from] SolverError),
    #[error("indeterminate: {0}")]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("enumeration of {subsets} subsets exceeds the budget of {budget}")]
    EnumerationBudget { subsets: u128, budget: u64 },
}

impl ExplainError {
    /// Budget exhaustion rather than a genuine failure.
    pub fn is_indeterminate(&self) -> bool {
        matches!(
            self,
            ExplainError::Solver(SolverError::BudgetExceeded { .. })
                | ExplainError::Oracle(OracleError::BudgetExceeded { .. })
                | ExplainError::EnumerationBudget { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplanationKind {
    Axp,
    Cxp,
}

impl fmt::Display for ExplanationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExplanationKind::Axp => "axp",
            ExplanationKind::Cxp => "cxp",
        })
    }
}

impl std::str::FromStr for ExplanationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "axp" => Ok(ExplanationKind::Axp),
            "cxp" => Ok(ExplanationKind::Cxp),
            other => Err(format!("unknown explanation kind `{other}` (expected axp or cxp)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub kind: ExplanationKind,
    pub features: FeatureSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Waxp,
    Wcxp,
}

/// One answer of R. For WAXp queries `set` is the fixed set, for WCXp
/// queries the released set. Exactly one of `witness` and `proof` is present
/// for SAT-backed answers; enumeration-backed answers carry no proof.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleAnswer {
    pub query: QueryKind,
    pub set: FeatureSet,
    pub holds: bool,
    pub witness: Option<Witness>,
    #[serde(skip)]
    pub proof: Option<ClausalProof>,
    pub assumptions: Vec<Lit>,
}

impl OracleAnswer {
    /// Features pinned to the instance's values by this query.
    pub fn fixed(&self, num_features: usize) -> FeatureSet {
        match self.query {
            QueryKind::Waxp => self.set.clone(),
            QueryKind::Wcxp => self.set.complement(num_features),
        }
    }

    /// True when the answer claims the prediction can change.
    pub fn claims_flip(&self) -> bool {
        match self.query {
            QueryKind::Waxp => !self.holds,
            QueryKind::Wcxp => self.holds,
        }
    }
}

/// Every answer produced while computing one explanation, together with the
/// formula the proofs refer to (absent for enumeration-backed models).
#[derive(Debug, Clone, Default)]
pub struct AuditLog {
    pub formula: Option<CnfFormula>,
    pub answers: Vec<OracleAnswer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExplainerConfig {
    pub solver: SolverConfig,
    pub enumeration_budget: u64,
    pub execution: Execution,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        ExplainerConfig {
            solver: SolverConfig::default(),
            enumeration_budget: DEFAULT_ENUMERATION_BUDGET,
            execution: Execution::default(),
        }
    }
}

enum Backend<'m> {
    Sat { encoding: Encoding, session: Solver },
    Enumeration(CellOracle<'m>),
}

/// R bound to one (model, instance) pair. Keeps an incremental solver
/// session across queries.
pub struct ExplainerR<'m> {
    model: &'m TreeEnsembleModel,
    instance: Instance,
    backend: Backend<'m>,
}

impl<'m> ExplainerR<'m> {
    pub fn new(model: &'m TreeEnsembleModel, instance: &Instance, config: ExplainerConfig) -> Result<Self, ExplainError> {
        let predicted = model.predict(&instance.point)?;
        if predicted != instance.klass {
            return Err(ExplainError::InconsistentInstance {
                labelled: instance.klass,
                predicted,
            });
        }
        let backend = if model.kind() == ModelKind::RfMajority && model.num_classes() == 2 {
            let encoding = build_encoding(model, instance.klass)?;
            let session = Solver::new(&encoding.formula, config.solver);
            Backend::Sat { encoding, session }
        } else {
            Backend::Enumeration(
                CellOracle::new(model)?
                    .with_budget(config.enumeration_budget)
                    .with_execution(config.execution),
            )
        };
        Ok(ExplainerR {
            model,
            instance: instance.clone(),
            backend,
        })
    }

    pub fn model(&self) -> &TreeEnsembleModel {
        self.model
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    /// The formula proofs refer to, when answers are SAT-backed.
    pub fn formula(&self) -> Option<&CnfFormula> {
        match &self.backend {
            Backend::Sat { encoding, .. } => Some(&encoding.formula),
            Backend::Enumeration(_) => None,
        }
    }

    pub fn encoding(&self) -> Option<&Encoding> {
        match &self.backend {
            Backend::Sat { encoding, .. } => Some(encoding),
            Backend::Enumeration(_) => None,
        }
    }

    pub fn is_waxp(&mut self, fixed: &FeatureSet) -> Result<OracleAnswer, ExplainError> {
        let fixed = self.checked(fixed)?;
        let (flip, proof, assumptions) = self.search(&fixed)?;
        Ok(OracleAnswer {
            query: QueryKind::Waxp,
            set: fixed,
            holds: flip.is_none(),
            witness: flip,
            proof,
            assumptions,
        })
    }

    pub fn is_wcxp(&mut self, released: &FeatureSet) -> Result<OracleAnswer, ExplainError> {
        let released = self.checked(released)?;
        let fixed = released.complement(self.model.num_features());
        let (flip, proof, assumptions) = self.search(&fixed)?;
        Ok(OracleAnswer {
            query: QueryKind::Wcxp,
            set: released,
            holds: flip.is_some(),
            witness: flip,
            proof,
            assumptions,
        })
    }

    fn checked(&self, set: &FeatureSet) -> Result<FeatureSet, ExplainError> {
        if set.within(self.model.num_features()) {
            Ok(set.clone())
        } else {
            Err(ExplainError::InvalidFeatureSet(set.clone()))
        }
    }

    /// Looks for a point agreeing with the instance on `fixed` and predicted
    /// differently.
    fn search(&mut self, fixed: &FeatureSet) -> Result<(Option<Witness>, Option<ClausalProof>, Vec<Lit>), ExplainError> {
        match &mut self.backend {
            Backend::Sat { encoding, session } => {
                let assumptions = encoding.abstraction.assumptions_for(&self.instance, fixed)?.literals;
                match session.solve(&assumptions)? {
                    SolveResult::Sat { assignment } => {
                        let mut point = encoding.abstraction.decode(&assignment)?;
                        for id in fixed.iter() {
                            point[id - 1] = self.instance.point[id - 1];
                        }
                        let witness = Witness {
                            point,
                            klass: encoding.class_side.flipped,
                        };
                        Ok((Some(witness), None, assumptions))
                    }
                    SolveResult::Unsat { proof, .. } => Ok((None, Some(proof), assumptions)),
                }
            }
            Backend::Enumeration(oracle) => {
                let released = fixed.complement(self.model.num_features());
                let answer = oracle.is_wcxp(&released, &self.instance)?;
                let witness = match answer.point {
                    Some(point) => {
                        let klass = self.model.predict(&point)?;
                        Some(Witness { point, klass })
                    }
                    None => None,
                };
                Ok((witness, None, Vec::new()))
            }
        }
    }

    fn audit(&self, answers: Vec<OracleAnswer>) -> AuditLog {
        AuditLog {
            formula: self.formula().cloned(),
            answers,
        }
    }

    /// Deletion-based AXp in ascending feature order.
    pub fn find_axp(&mut self) -> Result<(Explanation, AuditLog), ExplainError> {
        let mut answers = Vec::new();
        let mut current = self.model.all_features();
        for id in 1..=self.model.num_features() {
            let answer = self.is_waxp(&current.without(id))?;
            if answer.holds {
                current.remove(id);
            }
            answers.push(answer);
        }
        let explanation = Explanation {
            kind: ExplanationKind::Axp,
            features: current,
        };
        Ok((explanation, self.audit(answers)))
    }

    /// Deletion-based CXp in ascending feature order. `None` when no CXp
    /// exists, i.e. the model is constant given the domains.
    pub fn find_cxp(&mut self) -> Result<(Option<Explanation>, AuditLog), ExplainError> {
        let mut current = self.model.all_features();
        let whole = self.is_wcxp(&current)?;
        let possible = whole.holds;
        let mut answers = vec![whole];
        if !possible {
            return Ok((None, self.audit(answers)));
        }
        for id in 1..=self.model.num_features() {
            let answer = self.is_wcxp(&current.without(id))?;
            if answer.holds {
                current.remove(id);
            }
            answers.push(answer);
        }
        let explanation = Explanation {
            kind: ExplanationKind::Cxp,
            features: current,
        };
        Ok((Some(explanation), self.audit(answers)))
    }

    pub fn find(&mut self, kind: ExplanationKind) -> Result<(Option<Explanation>, AuditLog), ExplainError> {
        match kind {
            ExplanationKind::Axp => self.find_axp().map(|(e, log)| (Some(e), log)),
            ExplanationKind::Cxp => self.find_cxp(),
        }
    }
}

/// All AXps and all CXps of an instance, by brute force over every subset
/// with the enumeration oracle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllExplanations {
    pub axps: Vec<FeatureSet>,
    pub cxps: Vec<FeatureSet>,
}

pub fn enumerate_all_explanations(
    model: &TreeEnsembleModel,
    instance: &Instance,
    subset_budget: u64,
) -> Result<AllExplanations, ExplainError> {
    let m = model.num_features();
    let subsets = 1u128 << m.min(127);
    if m > 63 || subsets > subset_budget as u128 {
        return Err(ExplainError::EnumerationBudget {
            subsets,
            budget: subset_budget,
        });
    }
    let oracle = CellOracle::new(model)?;
    let mut waxp = vec![false; 1 << m];
    let mut wcxp = vec![false; 1 << m];
    for mask in 0..1u64 << m {
        let set = FeatureSet::from_mask(mask, m);
        waxp[mask as usize] = oracle.is_waxp(&set, instance)?.holds;
        wcxp[mask as usize] = oracle.is_wcxp(&set, instance)?.holds;
    }
    let minimal = |table: &[bool]| -> Vec<FeatureSet> {
        (0..1u64 << m)
            .filter(|&mask| table[mask as usize] && (0..m).all(|i| mask >> i & 1 == 0 || !table[(mask & !(1 << i)) as usize]))
            .map(|mask| FeatureSet::from_mask(mask, m))
            .collect()
    };
    let mut axps = minimal(&waxp);
    let mut cxps = minimal(&wcxp);
    axps.sort();
    cxps.sort();
    Ok(AllExplanations { axps, cxps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Domain, FeatureSpec, Leaf, SplitOp, Tree};
    use crate::proof::check_proof;
    use crate::rational::Rational;

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    fn stump_on_3() -> TreeEnsembleModel {
        let features = (1..=4)
            .map(|id| FeatureSpec {
                id,
                name: format!("x{id}"),
                domain: Domain::Real { lo: r("0"), hi: r("10") },
            })
            .collect();
        let tree = Tree::split(3, SplitOp::Le, r("5"), Tree::leaf(Leaf::Class(0)), Tree::leaf(Leaf::Class(1)));
        TreeEnsembleModel::new(ModelKind::RfMajority, features, vec![tree], 2, Rational::ZERO).unwrap()
    }

    fn instance(model: &TreeEnsembleModel, values: &[&str]) -> Instance {
        Instance::predicted(model, values.iter().map(|v| r(v)).collect()).unwrap()
    }

    #[test]
    fn stump_explanations() {
        let model = stump_on_3();
        let inst = instance(&model, &["1", "2", "7", "4"]);
        let mut explainer = ExplainerR::new(&model, &inst, ExplainerConfig::default()).unwrap();
        let (axp, log) = explainer.find_axp().unwrap();
        assert_eq!(axp.features, FeatureSet::from([3]));
        assert_eq!(log.answers.len(), 4);
        let (cxp, _) = explainer.find_cxp().unwrap();
        assert_eq!(cxp.unwrap().features, FeatureSet::from([3]));
        let all = enumerate_all_explanations(&model, &inst, 1 << 10).unwrap();
        assert_eq!(all.axps, vec![FeatureSet::from([3])]);
        assert_eq!(all.cxps, vec![FeatureSet::from([3])]);
    }

    #[test]
    fn extreme_sets() {
        let model = stump_on_3();
        let inst = instance(&model, &["1", "2", "3", "4"]);
        let mut explainer = ExplainerR::new(&model, &inst, ExplainerConfig::default()).unwrap();
        let full = explainer.is_waxp(&model.all_features()).unwrap();
        assert!(full.holds);
        assert!(full.witness.is_none());
        let proof = full.proof.as_ref().unwrap();
        assert!(check_proof(explainer.formula().unwrap(), &full.assumptions, proof).is_accept());

        let empty = explainer.is_waxp(&FeatureSet::empty()).unwrap();
        assert!(!empty.holds);
        let w = empty.witness.unwrap();
        assert_eq!(w.klass, 1);
        assert_eq!(model.predict(&w.point).unwrap(), 1);

        assert!(!explainer.is_wcxp(&FeatureSet::empty()).unwrap().holds);
        let all = explainer.is_wcxp(&model.all_features()).unwrap();
        assert!(all.holds);
    }

    #[test]
    fn wcxp_witness_keeps_fixed_values() {
        let model = stump_on_3();
        let inst = instance(&model, &["1.3", "2.7", "3", "9.1"]);
        let mut explainer = ExplainerR::new(&model, &inst, ExplainerConfig::default()).unwrap();
        let answer = explainer.is_wcxp(&FeatureSet::from([3])).unwrap();
        let w = answer.witness.unwrap();
        assert_eq!(w.point[0], r("1.3"));
        assert_eq!(w.point[1], r("2.7"));
        assert_eq!(w.point[3], r("9.1"));
    }

    #[test]
    fn constant_model_has_no_cxp() {
        let features = vec![FeatureSpec {
            id: 1,
            name: "x1".into(),
            domain: Domain::Bool,
        }];
        let model = TreeEnsembleModel::new(ModelKind::RfMajority, features, vec![Tree::leaf(Leaf::Class(1))], 2, Rational::ZERO).unwrap();
        let inst = instance(&model, &["0"]);
        let mut explainer = ExplainerR::new(&model, &inst, ExplainerConfig::default()).unwrap();
        let (axp, _) = explainer.find_axp().unwrap();
        assert!(axp.features.is_empty());
        let (cxp, log) = explainer.find_cxp().unwrap();
        assert!(cxp.is_none());
        assert_eq!(log.answers.len(), 1);
    }

    #[test]
    fn mislabelled_instance_is_rejected() {
        let model = stump_on_3();
        let inst = Instance {
            point: vec![r("1"), r("1"), r("1"), r("1")],
            klass: 1,
        };
        assert!(matches!(
            ExplainerR::new(&model, &inst, ExplainerConfig::default()),
            Err(ExplainError::InconsistentInstance { labelled: 1, predicted: 0 })
        ));
    }

    #[test]
    fn budget_exhaustion_is_indeterminate() {
        let model = stump_on_3();
        let inst = instance(&model, &["1", "2", "3", "4"]);
        let config = ExplainerConfig {
            solver: SolverConfig {
                conflict_budget: Some(0),
                ..SolverConfig::default()
            },
            ..ExplainerConfig::default()
        };
        let mut explainer = ExplainerR::new(&model, &inst, config).unwrap();
        // single-conflict query: fixing feature 3 conflicts immediately
        match explainer.is_waxp(&FeatureSet::from([3])) {
            Err(e) => assert!(e.is_indeterminate()),
            Ok(answer) => assert!(answer.holds),
        }
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("AXp".parse::<ExplanationKind>().unwrap(), ExplanationKind::Axp);
        assert!("bxp".parse::<ExplanationKind>().is_err());
        let json = serde_json::to_string(&Explanation {
            kind: ExplanationKind::Cxp,
            features: FeatureSet::from([2, 5]),
        })
        .unwrap();
        assert_eq!(json, r#"{"kind":"cxp","features":[2,5]}"#);
    }
}
