//! Validation of explanations produced by an untrusted explainer T, using
//! R (witnesses and proofs) and S (enumeration) as the judges.
//!
//! Every run ends in exactly one terminal [`Verdict`]. Errors attributed to
//! R stop the run before any further claim about T is made.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::CnfFormula;
use crate::explain::{AuditLog, ExplainError, ExplainerConfig, ExplainerR, ExplanationKind, OracleAnswer, QueryKind};
use crate::model::{FeatureSet, Instance, TreeEnsembleModel};
use crate::oracle::{CellOracle, OracleError};
use crate::proof::{check_proof, CheckOutcome};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("feature set {0} is not a subset of the model's features")]
    InvalidFeatureSet(FeatureSet),
    #[error(transparent)]
    Setup(#[from] ExplainError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseId {
    A1,
    A2a,
    A2b,
    A3a,
    A3b,
    A3c,
    A4a,
    A4b,
    C1a,
    C1b,
    C1c,
    C2a,
    C2b,
    C2c,
    C3a,
    C3b,
    C4a,
    C4b,
    #[serde(rename = "R-error")]
    RError,
    #[serde(rename = "indeterminate")]
    Indeterminate,
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = match self {
            CaseId::RError => "R-error",
            CaseId::Indeterminate => "indeterminate",
            other => return write!(f, "{other:?}"),
        };
        f.write_str(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    /// The explanation is correct.
    Validated,
    /// T's explanation is wrong.
    TError,
    /// R contradicted itself or S.
    RError,
    /// A proof produced by R's reasoner did not check.
    ReasonerIssue,
    /// A budget or timeout was hit.
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Culprit {
    T,
    R,
    Reasoner,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WitnessSource {
    R,
    T,
    S,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProofStatus {
    Accepted,
    Rejected { step: usize, reason: String },
    Missing,
    /// Answers backed by enumeration carry no proof.
    NotApplicable,
}

impl ProofStatus {
    pub fn passes(&self) -> bool {
        matches!(self, ProofStatus::Accepted | ProofStatus::NotApplicable)
    }
}

/// Why a point is not a witness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "reason")]
pub enum WitnessDefect {
    Missing,
    WrongDimension { expected: usize, found: usize },
    OutOfDomain { feature: usize },
    NotPinned { feature: usize },
    NoFlip,
    ClaimMismatch { claimed: u32, predicted: u32 },
}

impl fmt::Display for WitnessDefect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WitnessDefect::Missing => write!(f, "no witness"),
            WitnessDefect::WrongDimension { expected, found } => {
                write!(f, "witness has {found} coordinates, expected {expected}")
            }
            WitnessDefect::OutOfDomain { feature } => write!(f, "feature {feature} outside its domain"),
            WitnessDefect::NotPinned { feature } => write!(f, "feature {feature} differs from the instance"),
            WitnessDefect::NoFlip => write!(f, "prediction does not change"),
            WitnessDefect::ClaimMismatch { claimed, predicted } => {
                write!(f, "claimed class {claimed} but the model predicts {predicted}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum Evidence {
    Witness {
        source: WitnessSource,
        feature: Option<usize>,
        point: Vec<Rational>,
        predicted: Option<u32>,
        defect: Option<WitnessDefect>,
    },
    Proof {
        feature: Option<usize>,
        steps: usize,
        status: ProofStatus,
        /// Set when the proof has been written out.
        file: Option<String>,
    },
    Oracle {
        feature: Option<usize>,
        query: QueryKind,
        set: FeatureSet,
        holds: bool,
    },
    Note {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrailStep {
    pub case: CaseId,
    pub feature: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: ExplanationKind,
    pub features: FeatureSet,
    /// Terminal case; for validated explanations the phase-1 case.
    pub case: CaseId,
    pub outcome: Outcome,
    pub culprit: Culprit,
    /// Feature whose removal exposed the defect, for phase-2 cases.
    pub feature: Option<usize>,
    pub trail: Vec<TrailStep>,
    pub evidence: Vec<Evidence>,
}

impl Verdict {
    pub fn is_validated(&self) -> bool {
        self.outcome == Outcome::Validated
    }

    pub fn is_t_error(&self) -> bool {
        self.outcome == Outcome::TError
    }

    /// Trail cases in order, as text.
    pub fn trail_cases(&self) -> Vec<String> {
        self.trail.iter().map(|s| s.case.to_string()).collect()
    }
}

/// Checks that `point` is a witness for a flip away from `instance.klass`
/// with the features in `fixed` pinned; returns the predicted class.
pub fn replay_witness(
    model: &TreeEnsembleModel,
    instance: &Instance,
    fixed: &FeatureSet,
    point: &[Rational],
    claimed: Option<u32>,
) -> Result<u32, (Option<u32>, WitnessDefect)> {
    let m = model.num_features();
    if point.len() != m {
        return Err((
            None,
            WitnessDefect::WrongDimension {
                expected: m,
                found: point.len(),
            },
        ));
    }
    if let Some(spec) = model.features().iter().find(|f| !f.domain.contains(&point[f.id - 1])) {
        return Err((None, WitnessDefect::OutOfDomain { feature: spec.id }));
    }
    let predicted = model
        .predict(point)
        .map_err(|_| (None, WitnessDefect::WrongDimension { expected: m, found: point.len() }))?;
    if let Some(id) = fixed.iter().find(|&id| point[id - 1] != instance.point[id - 1]) {
        return Err((Some(predicted), WitnessDefect::NotPinned { feature: id }));
    }
    if predicted == instance.klass {
        return Err((Some(predicted), WitnessDefect::NoFlip));
    }
    if let Some(claimed) = claimed {
        if claimed != predicted {
            return Err((Some(predicted), WitnessDefect::ClaimMismatch { claimed, predicted }));
        }
    }
    Ok(predicted)
}

fn proof_status(formula: Option<&CnfFormula>, answer: &OracleAnswer) -> ProofStatus {
    let Some(formula) = formula else {
        return ProofStatus::NotApplicable;
    };
    match &answer.proof {
        None => ProofStatus::Missing,
        Some(proof) => match check_proof(formula, &answer.assumptions, proof) {
            CheckOutcome::Accept => ProofStatus::Accepted,
            CheckOutcome::Reject { step, reason } => ProofStatus::Rejected {
                step,
                reason: reason.to_string(),
            },
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidatorConfig {
    pub explainer: ExplainerConfig,
    /// Proof check and S concurrence when X is confirmed as a WAXp.
    pub a1_extra_checks: bool,
    /// Keep scanning phase 2 after the first T error.
    pub full_scan: bool,
}

impl Default for ValidatorConfig {
    fn default() -> Self {
        ValidatorConfig {
            explainer: ExplainerConfig::default(),
            a1_extra_checks: true,
            full_scan: false,
        }
    }
}

/// Validator bound to one (model, instance) pair.
pub struct Validator<'m> {
    model: &'m TreeEnsembleModel,
    instance: Instance,
    r: ExplainerR<'m>,
    s: CellOracle<'m>,
    config: ValidatorConfig,
    proof_prefix: Option<PathBuf>,
    proofs_written: usize,
}

enum Step {
    Continue,
    Stop,
}

struct Run {
    kind: ExplanationKind,
    features: FeatureSet,
    trail: Vec<TrailStep>,
    evidence: Vec<Evidence>,
    first_t_error: Option<(CaseId, Option<usize>)>,
}

impl Run {
    fn new(kind: ExplanationKind, features: FeatureSet) -> Self {
        Run {
            kind,
            features,
            trail: Vec::new(),
            evidence: Vec::new(),
            first_t_error: None,
        }
    }

    fn step(&mut self, case: CaseId, feature: Option<usize>) {
        self.trail.push(TrailStep { case, feature });
    }

    fn finish(self, case: CaseId, outcome: Outcome, culprit: Culprit, feature: Option<usize>) -> Verdict {
        Verdict {
            kind: self.kind,
            features: self.features,
            case,
            outcome,
            culprit,
            feature,
            trail: self.trail,
            evidence: self.evidence,
        }
    }

    fn terminal(mut self, case: CaseId, outcome: Outcome, culprit: Culprit, feature: Option<usize>) -> Verdict {
        self.step(case, feature);
        self.finish(case, outcome, culprit, feature)
    }

    fn indeterminate(mut self, error: impl fmt::Display, feature: Option<usize>) -> Verdict {
        self.evidence.push(Evidence::Note {
            message: error.to_string(),
        });
        self.terminal(CaseId::Indeterminate, Outcome::Indeterminate, Culprit::None, feature)
    }

    fn failed(self, error: ExplainError, feature: Option<usize>) -> Verdict {
        if error.is_indeterminate() {
            return self.indeterminate(error, feature);
        }
        let mut run = self;
        run.evidence.push(Evidence::Note {
            message: error.to_string(),
        });
        run.terminal(CaseId::RError, Outcome::RError, Culprit::R, feature)
    }
}

impl<'m> Validator<'m> {
    pub fn new(model: &'m TreeEnsembleModel, instance: &Instance, config: ValidatorConfig) -> Result<Self, ValidationError> {
        let r = ExplainerR::new(model, instance, config.explainer)?;
        let s = CellOracle::new(model)?
            .with_budget(config.explainer.enumeration_budget)
            .with_execution(config.explainer.execution);
        Ok(Validator {
            model,
            instance: instance.clone(),
            r,
            s,
            config,
            proof_prefix: None,
            proofs_written: 0,
        })
    }

    /// Writes every checked proof to `{prefix}-{n}.drat`, and the formula
    /// they refute to `{prefix}.cnf`.
    pub fn with_proof_prefix(mut self, prefix: impl Into<PathBuf>) -> Self {
        self.proof_prefix = Some(prefix.into());
        self
    }

    fn persist_proof(&mut self, answer: &OracleAnswer) -> Result<Option<String>, String> {
        let (Some(prefix), Some(proof), Some(formula)) = (&self.proof_prefix, &answer.proof, self.r.formula()) else {
            return Ok(None);
        };
        let with_suffix = |suffix: &str| {
            let mut name = prefix.clone().into_os_string();
            name.push(suffix);
            PathBuf::from(name)
        };
        if self.proofs_written == 0 {
            let cnf = with_suffix(".cnf");
            std::fs::write(&cnf, formula.to_dimacs_string()).map_err(|e| format!("{}: {e}", cnf.display()))?;
        }
        self.proofs_written += 1;
        let path = with_suffix(&format!("-{}.drat", self.proofs_written));
        std::fs::write(&path, proof.emit_drat()).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(Some(path.display().to_string()))
    }

    pub fn explainer(&mut self) -> &mut ExplainerR<'m> {
        &mut self.r
    }

    pub fn oracle(&self) -> &CellOracle<'m> {
        &self.s
    }

    fn checked(&self, set: &FeatureSet) -> Result<(), ValidationError> {
        if set.within(self.model.num_features()) {
            Ok(())
        } else {
            Err(ValidationError::InvalidFeatureSet(set.clone()))
        }
    }

    fn record_witness(&self, run: &mut Run, answer: &OracleAnswer, feature: Option<usize>) -> bool {
        let fixed = answer.fixed(self.model.num_features());
        let Some(witness) = &answer.witness else {
            run.evidence.push(Evidence::Witness {
                source: WitnessSource::R,
                feature,
                point: Vec::new(),
                predicted: None,
                defect: Some(WitnessDefect::Missing),
            });
            return false;
        };
        let replay = replay_witness(self.model, &self.instance, &fixed, &witness.point, Some(witness.klass));
        let (predicted, defect) = match replay {
            Ok(p) => (Some(p), None),
            Err((p, d)) => (p, Some(d)),
        };
        let confirmed = defect.is_none();
        run.evidence.push(Evidence::Witness {
            source: WitnessSource::R,
            feature,
            point: witness.point.clone(),
            predicted,
            defect,
        });
        confirmed
    }

    fn record_proof(&mut self, run: &mut Run, answer: &OracleAnswer, feature: Option<usize>) -> bool {
        let status = proof_status(self.r.formula(), answer);
        let passes = status.passes();
        let file = match self.persist_proof(answer) {
            Ok(file) => file,
            Err(message) => {
                run.evidence.push(Evidence::Note { message });
                None
            }
        };
        run.evidence.push(Evidence::Proof {
            feature,
            steps: answer.proof.as_ref().map_or(0, |p| p.len()),
            status,
            file,
        });
        passes
    }

    fn record_oracle(&self, run: &mut Run, query: QueryKind, set: &FeatureSet, feature: Option<usize>) -> Result<bool, OracleError> {
        let answer = match query {
            QueryKind::Waxp => self.s.is_waxp(set, &self.instance)?,
            QueryKind::Wcxp => self.s.is_wcxp(set, &self.instance)?,
        };
        run.evidence.push(Evidence::Oracle {
            feature,
            query,
            set: set.clone(),
            holds: answer.holds,
        });
        if let Some(point) = answer.point {
            run.evidence.push(Evidence::Witness {
                source: WitnessSource::S,
                feature,
                predicted: self.model.predict(&point).ok(),
                point,
                defect: None,
            });
        }
        Ok(answer.holds)
    }

    /// Validates `x` as an AXp of the bound instance.
    pub fn validate_axp(&mut self, x: &FeatureSet) -> Result<Verdict, ValidationError> {
        self.checked(x)?;
        let mut run = Run::new(ExplanationKind::Axp, x.clone());

        let answer = match self.r.is_waxp(x) {
            Ok(a) => a,
            Err(e) => return Ok(run.failed(e, None)),
        };
        if !answer.holds {
            return Ok(if self.record_witness(&mut run, &answer, None) {
                run.terminal(CaseId::A2a, Outcome::TError, Culprit::T, None)
            } else {
                run.terminal(CaseId::A2b, Outcome::RError, Culprit::R, None)
            });
        }
        run.step(CaseId::A1, None);
        if self.config.a1_extra_checks {
            if !self.record_proof(&mut run, &answer, None) {
                return Ok(run.terminal(CaseId::RError, Outcome::ReasonerIssue, Culprit::Reasoner, None));
            }
            match self.record_oracle(&mut run, QueryKind::Waxp, x, None) {
                Ok(true) => {}
                Ok(false) => return Ok(run.terminal(CaseId::RError, Outcome::RError, Culprit::R, None)),
                Err(e) => return Ok(run.indeterminate(e, None)),
            }
        }

        for t in x.iter() {
            let feature = Some(t);
            let smaller = x.without(t);
            let answer = match self.r.is_waxp(&smaller) {
                Ok(a) => a,
                Err(e) => return Ok(run.failed(e, feature)),
            };
            let step = if !answer.holds {
                if self.record_witness(&mut run, &answer, feature) {
                    run.step(CaseId::A4a, feature);
                    Step::Continue
                } else {
                    return Ok(run.terminal(CaseId::A4b, Outcome::RError, Culprit::R, feature));
                }
            } else {
                if !self.record_proof(&mut run, &answer, feature) {
                    return Ok(run.terminal(CaseId::A3b, Outcome::ReasonerIssue, Culprit::Reasoner, feature));
                }
                match self.record_oracle(&mut run, QueryKind::Waxp, &smaller, feature) {
                    Ok(true) => {
                        run.step(CaseId::A3a, feature);
                        run.first_t_error.get_or_insert((CaseId::A3a, feature));
                        Step::Stop
                    }
                    Ok(false) => return Ok(run.terminal(CaseId::A3c, Outcome::RError, Culprit::R, feature)),
                    Err(e) => return Ok(run.indeterminate(e, feature)),
                }
            };
            if matches!(step, Step::Stop) && !self.config.full_scan {
                break;
            }
        }
        Ok(match run.first_t_error {
            Some((case, feature)) => run.finish(case, Outcome::TError, Culprit::T, feature),
            None => run.finish(CaseId::A1, Outcome::Validated, Culprit::None, None),
        })
    }

    /// Validates `y` as a CXp of the bound instance. `target_witness` is
    /// T's own witness, used only to confirm.
    pub fn validate_cxp(&mut self, y: &FeatureSet, target_witness: Option<&[Rational]>) -> Result<Verdict, ValidationError> {
        self.checked(y)?;
        let mut run = Run::new(ExplanationKind::Cxp, y.clone());
        let m = self.model.num_features();
        let fixed = y.complement(m);

        let mut phase_one = None;
        if let Some(point) = target_witness {
            let replay = replay_witness(self.model, &self.instance, &fixed, point, None);
            let (predicted, defect) = match replay {
                Ok(p) => (Some(p), None),
                Err((p, d)) => (p, Some(d)),
            };
            if defect.is_none() {
                phase_one = Some(CaseId::C1a);
            }
            run.evidence.push(Evidence::Witness {
                source: WitnessSource::T,
                feature: None,
                point: point.to_vec(),
                predicted,
                defect,
            });
        }
        let phase_one = match phase_one {
            Some(case) => case,
            None => {
                let answer = match self.r.is_wcxp(y) {
                    Ok(a) => a,
                    Err(e) => return Ok(run.failed(e, None)),
                };
                if answer.holds {
                    if self.record_witness(&mut run, &answer, None) {
                        CaseId::C1b
                    } else {
                        return Ok(run.terminal(CaseId::C1c, Outcome::RError, Culprit::R, None));
                    }
                } else {
                    if !self.record_proof(&mut run, &answer, None) {
                        return Ok(run.terminal(CaseId::C2a, Outcome::ReasonerIssue, Culprit::Reasoner, None));
                    }
                    return Ok(match self.record_oracle(&mut run, QueryKind::Wcxp, y, None) {
                        Ok(false) => run.terminal(CaseId::C2b, Outcome::TError, Culprit::T, None),
                        Ok(true) => run.terminal(CaseId::C2c, Outcome::RError, Culprit::R, None),
                        Err(e) => run.indeterminate(e, None),
                    });
                }
            }
        };
        run.step(phase_one, None);

        for t in y.iter() {
            let feature = Some(t);
            let smaller = y.without(t);
            let answer = match self.r.is_wcxp(&smaller) {
                Ok(a) => a,
                Err(e) => return Ok(run.failed(e, feature)),
            };
            if answer.holds {
                if self.record_witness(&mut run, &answer, feature) {
                    run.step(CaseId::C3a, feature);
                    run.first_t_error.get_or_insert((CaseId::C3a, feature));
                    if !self.config.full_scan {
                        break;
                    }
                } else {
                    return Ok(run.terminal(CaseId::C3b, Outcome::RError, Culprit::R, feature));
                }
            } else if self.record_proof(&mut run, &answer, feature) {
                run.step(CaseId::C4b, feature);
            } else {
                return Ok(run.terminal(CaseId::C4a, Outcome::ReasonerIssue, Culprit::Reasoner, feature));
            }
        }
        Ok(match run.first_t_error {
            Some((case, feature)) => run.finish(case, Outcome::TError, Culprit::T, feature),
            None => run.finish(phase_one, Outcome::Validated, Culprit::None, None),
        })
    }

    pub fn validate(&mut self, kind: ExplanationKind, set: &FeatureSet, target_witness: Option<&[Rational]>) -> Result<Verdict, ValidationError> {
        match kind {
            ExplanationKind::Axp => self.validate_axp(set),
            ExplanationKind::Cxp => self.validate_cxp(set, target_witness),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum DiscrepancyKind {
    NonWitness { defect: WitnessDefect },
    ProofMissing,
    ProofRejected { step: usize, reason: String },
    OracleDisagrees,
    Indeterminate { message: String },
}

/// A self-inconsistency of R found in an audit log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discrepancy {
    /// Position of the answer in the log.
    pub index: usize,
    pub query: QueryKind,
    pub set: FeatureSet,
    pub kind: DiscrepancyKind,
}

/// Replays every witness in `log`, checks every proof, and asks S to confirm
/// every answer without a witness.
pub fn self_validate_r(model: &TreeEnsembleModel, instance: &Instance, log: &AuditLog, oracle: &CellOracle<'_>) -> Vec<Discrepancy> {
    let m = model.num_features();
    let mut found = Vec::new();
    for (index, answer) in log.answers.iter().enumerate() {
        let mut report = |kind| {
            found.push(Discrepancy {
                index,
                query: answer.query,
                set: answer.set.clone(),
                kind,
            })
        };
        if answer.claims_flip() {
            let defect = match &answer.witness {
                None => Some(WitnessDefect::Missing),
                Some(w) => replay_witness(model, instance, &answer.fixed(m), &w.point, Some(w.klass)).err().map(|(_, d)| d),
            };
            if let Some(defect) = defect {
                report(DiscrepancyKind::NonWitness { defect });
            }
            continue;
        }
        match proof_status(log.formula.as_ref(), answer) {
            ProofStatus::Missing => report(DiscrepancyKind::ProofMissing),
            ProofStatus::Rejected { step, reason } => report(DiscrepancyKind::ProofRejected { step, reason }),
            ProofStatus::Accepted | ProofStatus::NotApplicable => {}
        }
        let concurs = match answer.query {
            QueryKind::Waxp => oracle.is_waxp(&answer.set, instance).map(|a| a.holds),
            QueryKind::Wcxp => oracle.is_wcxp(&answer.set, instance).map(|a| !a.holds),
        };
        match concurs {
            Ok(true) => {}
            Ok(false) => report(DiscrepancyKind::OracleDisagrees),
            Err(e) => report(DiscrepancyKind::Indeterminate { message: e.to_string() }),
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::Witness;
    use crate::proof::ProofStep;

    #[test]
    fn xd6_789_is_not_a_waxp() {
        let (model, inst) = fixtures::xd6();
        let mut v = Validator::new(&model, &inst, ValidatorConfig::default()).unwrap();
        let verdict = v.validate_axp(&FeatureSet::from([7, 8, 9])).unwrap();
        assert_eq!(verdict.case, CaseId::A2a);
        assert_eq!(verdict.culprit, Culprit::T);
        let Some(Evidence::Witness { point, predicted, .. }) = verdict.evidence.first() else {
            panic!("A2a carries a witness");
        };
        assert_eq!(*predicted, Some(0));
        assert_eq!(model.predict(point).unwrap(), 0);
    }

    #[test]
    fn pima_1_is_not_a_wcxp() {
        let (model, inst) = fixtures::pima();
        let mut v = Validator::new(&model, &inst, ValidatorConfig::default()).unwrap();
        let verdict = v.validate_cxp(&FeatureSet::from([1]), None).unwrap();
        assert_eq!(verdict.case, CaseId::C2b);
        assert!(verdict
            .evidence
            .iter()
            .any(|e| matches!(e, Evidence::Proof { status: ProofStatus::Accepted, .. })));
        assert!(verdict
            .evidence
            .iter()
            .any(|e| matches!(e, Evidence::Oracle { holds: false, .. })));
    }

    #[test]
    fn phoneme_1_is_not_a_wcxp() {
        let (model, inst) = fixtures::phoneme();
        let mut v = Validator::new(&model, &inst, ValidatorConfig::default()).unwrap();
        let verdict = v.validate_cxp(&FeatureSet::from([1]), None).unwrap();
        assert_eq!(verdict.case, CaseId::C2b);
    }

    #[test]
    fn honest_explanations_validate() {
        for name in fixtures::NAMES {
            let (model, inst) = fixtures::load(name).unwrap();
            let mut v = Validator::new(&model, &inst, ValidatorConfig::default()).unwrap();
            let (axp, _) = v.explainer().find_axp().unwrap();
            let verdict = v.validate_axp(&axp.features).unwrap();
            assert_eq!(verdict.outcome, Outcome::Validated, "{name}: {verdict:?}");
            assert_eq!(verdict.trail[0].case, CaseId::A1);
            assert!(verdict.trail[1..].iter().all(|s| s.case == CaseId::A4a));
            assert_eq!(verdict.trail.len(), axp.features.len() + 1);

            if let (Some(cxp), _) = v.explainer().find_cxp().unwrap() {
                let verdict = v.validate_cxp(&cxp.features, None).unwrap();
                assert_eq!(verdict.outcome, Outcome::Validated, "{name}: {verdict:?}");
                assert_eq!(verdict.case, CaseId::C1b);
                assert!(verdict.trail[1..].iter().all(|s| s.case == CaseId::C4b));
            }
        }
    }

    #[test]
    fn redundant_axp_is_a3a() {
        let (model, inst) = fixtures::xd6();
        let mut v = Validator::new(&model, &inst, ValidatorConfig::default()).unwrap();
        let (axp, _) = v.explainer().find_axp().unwrap();
        let extra = (1..=9).find(|i| !axp.features.contains(*i)).unwrap();
        let verdict = v.validate_axp(&axp.features.with(extra)).unwrap();
        assert_eq!(verdict.case, CaseId::A3a);
        assert_eq!(verdict.feature, Some(extra));
    }

    #[test]
    fn target_witness_confirms_cxp() {
        let (model, inst) = fixtures::pima();
        let mut v = Validator::new(&model, &inst, ValidatorConfig::default()).unwrap();
        let (cxp, _) = v.explainer().find_cxp().unwrap();
        let cxp = cxp.unwrap();
        let answer = v.explainer().is_wcxp(&cxp.features).unwrap();
        let w = answer.witness.unwrap();
        let verdict = v.validate_cxp(&cxp.features, Some(&w.point)).unwrap();
        assert_eq!(verdict.case, CaseId::C1a);
        // a bogus target witness is ignored, not held against T
        let verdict = v.validate_cxp(&cxp.features, Some(&inst.point)).unwrap();
        assert_eq!(verdict.case, CaseId::C1b);
    }

    #[test]
    fn full_scan_reports_first_error() {
        let (model, inst) = fixtures::xd6();
        let config = ValidatorConfig {
            full_scan: true,
            ..ValidatorConfig::default()
        };
        let mut v = Validator::new(&model, &inst, config).unwrap();
        let verdict = v.validate_axp(&model.all_features()).unwrap();
        assert_eq!(verdict.case, CaseId::A3a);
        assert_eq!(verdict.trail.len(), 10);
        assert_eq!(verdict.feature, verdict.trail.iter().find(|s| s.case == CaseId::A3a).unwrap().feature);
    }

    #[test]
    fn invalid_set_is_an_error() {
        let (model, inst) = fixtures::xd6();
        let mut v = Validator::new(&model, &inst, ValidatorConfig::default()).unwrap();
        assert!(matches!(
            v.validate_axp(&FeatureSet::from([10])),
            Err(ValidationError::InvalidFeatureSet(_))
        ));
    }

    #[test]
    fn self_validation_flags_corruption() {
        let (model, inst) = fixtures::xd6();
        let oracle = CellOracle::new(&model).unwrap();
        let mut r = ExplainerR::new(&model, &inst, ExplainerConfig::default()).unwrap();
        let (_, log) = r.find_axp().unwrap();
        assert!(self_validate_r(&model, &inst, &log, &oracle).is_empty());

        let mut bad = log.clone();
        let i = bad.answers.iter().position(|a| a.witness.is_some()).unwrap();
        bad.answers[i].witness = Some(Witness {
            point: inst.point.clone(),
            klass: 0,
        });
        let found = self_validate_r(&model, &inst, &bad, &oracle);
        assert_eq!(found.len(), 1);
        assert!(matches!(found[0].kind, DiscrepancyKind::NonWitness { .. }));

        let mut bad = log.clone();
        let i = bad.answers.iter().position(|a| a.proof.is_some()).unwrap();
        let proof = bad.answers[i].proof.as_mut().unwrap();
        proof.steps.retain(|s| !matches!(s, ProofStep::Add(c) if c.is_empty()));
        let found = self_validate_r(&model, &inst, &bad, &oracle);
        assert!(found.iter().any(|d| matches!(d.kind, DiscrepancyKind::ProofRejected { .. })));

        let mut bad = log;
        bad.answers[i].proof = None;
        let found = self_validate_r(&model, &inst, &bad, &oracle);
        assert!(found.iter().any(|d| d.kind == DiscrepancyKind::ProofMissing));
    }

    #[test]
    fn case_names() {
        assert_eq!(CaseId::A2a.to_string(), "A2a");
        assert_eq!(CaseId::RError.to_string(), "R-error");
        assert_eq!(serde_json::to_string(&CaseId::Indeterminate).unwrap(), "\"indeterminate\"");
    }
}
