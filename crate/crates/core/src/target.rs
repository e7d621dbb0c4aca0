//! The untrusted explainer T: a JSON-lines subprocess protocol and built-in
//! faulty explainers used to test the validator.
//!
//! Protocol, one JSON object per line:
//!
//! ```text
//! request:  {"id": 7, "kind": "axp" | "cxp", "model": <model JSON>, "instance": ["1", "0.5", ...], "class": 1}
//! response: {"id": 7, "features": [1, 3], "witness": ["1", "2", ...]}      witness optional
//!           {"id": 7, "error": "message"}
//! ```
//!
//! Responses may carry an extra `"mutation"` object (see [`MutationStatus`]).

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::explain::{AuditLog, ExplainError, ExplainerConfig, ExplainerR, Explanation, ExplanationKind};
use crate::model::{load_model, save_model, FeatureSet, Instance, TreeEnsembleModel};
use crate::oracle::CellOracle;
use crate::rational::{rational_from_json, Rational};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TargetError {
    #[error("cannot start target `{command}`: {message}")]
    Spawn { command: String, message: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("no response within {seconds} s")]
    Timeout { seconds: u64 },
    #[error("target exited")]
    Exited,
    #[error("target reported an error: {0}")]
    Reported(String),
    #[error("i/o error talking to target: {0}")]
    Io(String),
}

impl TargetError {
    pub fn is_timeout(&self) -> bool {
        matches!(self, TargetError::Timeout { .. })
    }
}

/// What a faulty explainer did to the honest explanation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum MutationStatus {
    Honest,
    Mutated { feature: usize },
    /// The mode could not be applied; the honest answer was returned.
    Fallback { reason: String },
}

impl MutationStatus {
    pub fn is_mutated(&self) -> bool {
        matches!(self, MutationStatus::Mutated { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetResponse {
    pub explanation: Explanation,
    pub witness: Option<Vec<Rational>>,
    pub mutation: Option<MutationStatus>,
}

pub trait TargetExplainer: Sync {
    fn name(&self) -> String;
    fn explain(&self, model: &TreeEnsembleModel, instance: &Instance, kind: ExplanationKind) -> Result<TargetResponse, TargetError>;
}

pub fn request_json(id: u64, model: &TreeEnsembleModel, instance: &Instance, kind: ExplanationKind) -> Value {
    json!({
        "id": id,
        "kind": kind,
        "model": save_model(model),
        "instance": instance.point.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
        "class": instance.klass,
    })
}

pub fn response_json(id: u64, response: &TargetResponse) -> Value {
    let mut value = json!({
        "id": id,
        "features": response.explanation.features,
    });
    if let Some(w) = &response.witness {
        value["witness"] = json!(w.iter().map(|v| v.to_string()).collect::<Vec<_>>());
    }
    if let Some(m) = &response.mutation {
        value["mutation"] = serde_json::to_value(m).expect("plain data");
    }
    value
}

/// Parses a response line. `Ok(None)` means the line answers another request.
pub fn parse_response(line: &str, expected_id: u64, kind: ExplanationKind, num_features: usize) -> Result<Option<TargetResponse>, TargetError> {
    let value: Value = serde_json::from_str(line).map_err(|e| TargetError::Protocol(format!("invalid JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| TargetError::Protocol("response is not an object".into()))?;
    let id = obj
        .get("id")
        .and_then(Value::as_u64)
        .ok_or_else(|| TargetError::Protocol("response lacks a numeric `id`".into()))?;
    if id != expected_id {
        return Ok(None);
    }
    if let Some(error) = obj.get("error") {
        return Err(TargetError::Reported(error.as_str().map_or_else(|| error.to_string(), str::to_string)));
    }
    let features = obj
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| TargetError::Protocol("response lacks a `features` array".into()))?;
    let mut set = FeatureSet::empty();
    for f in features {
        let id = f
            .as_u64()
            .filter(|&i| i >= 1 && i as usize <= num_features)
            .ok_or_else(|| TargetError::Protocol(format!("feature id {f} out of range 1..={num_features}")))?;
        set.insert(id as usize);
    }
    let witness = match obj.get("witness") {
        None | Some(Value::Null) => None,
        Some(Value::Array(values)) => Some(
            values
                .iter()
                .map(rational_from_json)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| TargetError::Protocol(format!("bad witness: {e}")))?,
        ),
        Some(other) => return Err(TargetError::Protocol(format!("witness must be an array, found {other}"))),
    };
    let mutation = match obj.get("mutation") {
        None | Some(Value::Null) => None,
        Some(v) => Some(serde_json::from_value(v.clone()).map_err(|e| TargetError::Protocol(format!("bad mutation record: {e}")))?),
    };
    Ok(Some(TargetResponse {
        explanation: Explanation { kind, features: set },
        witness,
        mutation,
    }))
}

struct Channel {
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
}

/// A persistent child process speaking the JSON-lines protocol. Requests
/// are serialized; a late answer to a timed-out request is discarded by id.
pub struct ProcessEndpoint {
    command: Vec<String>,
    timeout: Duration,
    child: Mutex<Child>,
    channel: Mutex<Channel>,
}

impl ProcessEndpoint {
    pub fn spawn(command: &[String], timeout: Duration) -> Result<Self, TargetError> {
        let (program, args) = command.split_first().ok_or_else(|| TargetError::Spawn {
            command: String::new(),
            message: "empty command".into(),
        })?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| TargetError::Spawn {
                command: command.join(" "),
                message: e.to_string(),
            })?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = child.stdout.take().expect("piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(ProcessEndpoint {
            command: command.to_vec(),
            timeout,
            child: Mutex::new(child),
            channel: Mutex::new(Channel {
                stdin,
                lines: rx,
                next_id: 1,
            }),
        })
    }

    /// Splits a shell-like command line on whitespace.
    pub fn spawn_str(command: &str, timeout: Duration) -> Result<Self, TargetError> {
        let parts: Vec<String> = command.split_whitespace().map(str::to_string).collect();
        Self::spawn(&parts, timeout)
    }
}

impl Drop for ProcessEndpoint {
    fn drop(&mut self) {
        if let Ok(mut child) = self.child.lock() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl TargetExplainer for ProcessEndpoint {
    fn name(&self) -> String {
        self.command.join(" ")
    }

    fn explain(&self, model: &TreeEnsembleModel, instance: &Instance, kind: ExplanationKind) -> Result<TargetResponse, TargetError> {
        let mut channel = self.channel.lock().map_err(|_| TargetError::Io("endpoint lock poisoned".into()))?;
        let id = channel.next_id;
        channel.next_id += 1;
        let request = request_json(id, model, instance, kind).to_string();
        writeln!(channel.stdin, "{request}")
            .and_then(|_| channel.stdin.flush())
            .map_err(|e| TargetError::Io(e.to_string()))?;
        let deadline = std::time::Instant::now() + self.timeout;
        loop {
            let remaining = deadline.saturating_duration_since(std::time::Instant::now());
            let line = match channel.lines.recv_timeout(remaining) {
                Ok(Ok(line)) => line,
                Ok(Err(e)) => return Err(TargetError::Io(e.to_string())),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(TargetError::Timeout {
                        seconds: self.timeout.as_secs(),
                    })
                }
                Err(RecvTimeoutError::Disconnected) => return Err(TargetError::Exited),
            };
            if line.trim().is_empty() {
                continue;
            }
            if let Some(response) = parse_response(&line, id, kind, model.num_features())? {
                return Ok(response);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultMode {
    Honest,
    RedundantAxp,
    InvalidAxp,
    RedundantCxp,
    InvalidCxp,
}

impl FaultMode {
    pub const ALL: [FaultMode; 5] = [
        FaultMode::Honest,
        FaultMode::RedundantAxp,
        FaultMode::InvalidAxp,
        FaultMode::RedundantCxp,
        FaultMode::InvalidCxp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultMode::Honest => "honest",
            FaultMode::RedundantAxp => "redundant-axp",
            FaultMode::InvalidAxp => "invalid-axp",
            FaultMode::RedundantCxp => "redundant-cxp",
            FaultMode::InvalidCxp => "invalid-cxp",
        }
    }

    /// The explanation kind this mode corrupts, if any.
    pub fn targets(self) -> Option<ExplanationKind> {
        match self {
            FaultMode::Honest => None,
            FaultMode::RedundantAxp | FaultMode::InvalidAxp => Some(ExplanationKind::Axp),
            FaultMode::RedundantCxp | FaultMode::InvalidCxp => Some(ExplanationKind::Cxp),
        }
    }
}

impl std::fmt::Display for FaultMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FaultMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FaultMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode `{s}` (expected one of honest, redundant-axp, invalid-axp, redundant-cxp, invalid-cxp)"))
    }
}

/// An in-process T built on R's explanations, optionally corrupted.
#[derive(Debug, Clone, Copy)]
pub struct FaultyExplainer {
    pub mode: FaultMode,
    pub config: ExplainerConfig,
}

impl FaultyExplainer {
    pub fn new(mode: FaultMode) -> Self {
        FaultyExplainer {
            mode,
            config: ExplainerConfig::default(),
        }
    }

    fn honest(&self, r: &mut ExplainerR<'_>, kind: ExplanationKind) -> Result<(Explanation, Option<Vec<Rational>>), TargetError> {
        let internal = |e: ExplainError| TargetError::Reported(e.to_string());
        match kind {
            ExplanationKind::Axp => Ok((r.find_axp().map_err(internal)?.0, None)),
            ExplanationKind::Cxp => {
                let (cxp, log) = r.find_cxp().map_err(internal)?;
                let cxp = cxp.ok_or_else(|| TargetError::Reported("the prediction cannot change: no CXp exists".into()))?;
                Ok((cxp, last_witness(&log)))
            }
        }
    }
}

/// Witness of the last successful WCXp answer, i.e. for the final CXp.
fn last_witness(log: &AuditLog) -> Option<Vec<Rational>> {
    log.answers
        .iter()
        .rev()
        .find(|a| a.holds)
        .and_then(|a| a.witness.as_ref())
        .map(|w| w.point.clone())
}

impl TargetExplainer for FaultyExplainer {
    fn name(&self) -> String {
        self.mode.to_string()
    }

    fn explain(&self, model: &TreeEnsembleModel, instance: &Instance, kind: ExplanationKind) -> Result<TargetResponse, TargetError> {
        let mut r = ExplainerR::new(model, instance, self.config).map_err(|e| TargetError::Reported(e.to_string()))?;
        let (honest, witness) = self.honest(&mut r, kind)?;
        let fallback = |reason: &str| {
            Ok(TargetResponse {
                explanation: honest.clone(),
                witness: witness.clone(),
                mutation: Some(MutationStatus::Fallback { reason: reason.into() }),
            })
        };
        if self.mode.targets() != Some(kind) {
            return Ok(TargetResponse {
                explanation: honest.clone(),
                witness: witness.clone(),
                mutation: Some(MutationStatus::Honest),
            });
        }
        let m = model.num_features();
        let oracle = CellOracle::new(model)
            .map_err(|e| TargetError::Reported(e.to_string()))?
            .with_budget(self.config.enumeration_budget);
        let set = &honest.features;
        let mutated = |features: FeatureSet, feature: usize, witness: Option<Vec<Rational>>| {
            Ok(TargetResponse {
                explanation: Explanation { kind, features },
                witness,
                mutation: Some(MutationStatus::Mutated { feature }),
            })
        };
        match self.mode {
            FaultMode::RedundantAxp | FaultMode::RedundantCxp => {
                let Some(extra) = (1..=m).find(|&i| !set.contains(i)) else {
                    return fallback("explanation already contains every feature");
                };
                let witness = if kind == ExplanationKind::Cxp { witness.clone() } else { None };
                mutated(set.with(extra), extra, witness)
            }
            FaultMode::InvalidAxp => {
                for t in set.iter() {
                    match oracle.is_waxp(&set.without(t), instance) {
                        Ok(a) if !a.holds => return mutated(set.without(t), t, None),
                        Ok(_) => {}
                        Err(e) => return fallback(&e.to_string()),
                    }
                }
                fallback("no feature can be dropped without keeping a WAXp")
            }
            FaultMode::InvalidCxp => {
                for t in set.iter() {
                    match oracle.is_wcxp(&set.without(t), instance) {
                        Ok(a) if !a.holds => return mutated(set.without(t), t, None),
                        Ok(_) => {}
                        Err(e) => return fallback(&e.to_string()),
                    }
                }
                fallback("no feature can be dropped without keeping a WCXp")
            }
            FaultMode::Honest => unreachable!("honest mode targets no kind"),
        }
    }
}

/// Answers protocol requests from `input` with `explainer` until EOF.
/// Malformed requests get an error response and do not end the loop.
pub fn serve<R: BufRead, W: Write>(input: R, mut output: W, explainer: &dyn TargetExplainer) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match handle_request(&line, explainer) {
            Ok((id, response)) => response_json(id, &response),
            Err((id, message)) => json!({"id": id, "error": message}),
        };
        writeln!(output, "{reply}")?;
        output.flush()?;
    }
    Ok(())
}

fn handle_request(line: &str, explainer: &dyn TargetExplainer) -> Result<(u64, TargetResponse), (u64, String)> {
    let value: Value = serde_json::from_str(line).map_err(|e| (0, format!("invalid JSON: {e}")))?;
    let id = value.get("id").and_then(Value::as_u64).unwrap_or(0);
    let fail = |m: String| (id, m);
    let kind: ExplanationKind = value
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| fail("missing `kind`".into()))?
        .parse()
        .map_err(fail)?;
    let model_value = value.get("model").ok_or_else(|| fail("missing `model`".into()))?;
    let model = match model_value {
        Value::String(path) => crate::model::load_model_file(path),
        other => load_model(other.to_string().as_bytes()),
    }
    .map_err(|e| fail(e.to_string()))?;
    let point = value
        .get("instance")
        .and_then(Value::as_array)
        .ok_or_else(|| fail("missing `instance` array".into()))?
        .iter()
        .map(rational_from_json)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| fail(e.to_string()))?;
    let instance = Instance::predicted(&model, point).map_err(|e| fail(e.to_string()))?;
    if let Some(class) = value.get("class").and_then(Value::as_u64) {
        if class != instance.klass as u64 {
            return Err(fail(format!("class {class} is not the model's prediction {}", instance.klass)));
        }
    }
    explainer
        .explain(&model, &instance, kind)
        .map(|r| (id, r))
        .map_err(|e| fail(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn honest_mode_returns_r_explanations() {
        let (model, inst) = fixtures::xd6();
        let t = FaultyExplainer::new(FaultMode::Honest);
        let axp = t.explain(&model, &inst, ExplanationKind::Axp).unwrap();
        let (expected, _) = ExplainerR::new(&model, &inst, ExplainerConfig::default()).unwrap().find_axp().unwrap();
        assert_eq!(axp.explanation, expected);
        assert_eq!(axp.mutation, Some(MutationStatus::Honest));
        let cxp = t.explain(&model, &inst, ExplanationKind::Cxp).unwrap();
        assert!(cxp.witness.is_some());
    }

    #[test]
    fn mutants_have_the_promised_defect() {
        let (model, inst) = fixtures::xd6();
        let oracle = CellOracle::new(&model).unwrap();
        let run = |mode, kind| FaultyExplainer::new(mode).explain(&model, &inst, kind).unwrap();

        let r = run(FaultMode::InvalidAxp, ExplanationKind::Axp);
        assert!(r.mutation.unwrap().is_mutated());
        assert!(!oracle.is_waxp(&r.explanation.features, &inst).unwrap().holds);

        let r = run(FaultMode::RedundantAxp, ExplanationKind::Axp);
        let MutationStatus::Mutated { feature } = r.mutation.unwrap() else { panic!() };
        assert!(oracle.is_waxp(&r.explanation.features, &inst).unwrap().holds);
        assert!(oracle.is_waxp(&r.explanation.features.without(feature), &inst).unwrap().holds);

        let r = run(FaultMode::InvalidCxp, ExplanationKind::Cxp);
        assert!(!oracle.is_wcxp(&r.explanation.features, &inst).unwrap().holds);

        let r = run(FaultMode::RedundantCxp, ExplanationKind::Cxp);
        let MutationStatus::Mutated { feature } = r.mutation.unwrap() else { panic!() };
        assert!(oracle.is_wcxp(&r.explanation.features.without(feature), &inst).unwrap().holds);

        // modes leave the other kind alone
        let r = run(FaultMode::InvalidCxp, ExplanationKind::Axp);
        assert_eq!(r.mutation, Some(MutationStatus::Honest));
    }

    #[test]
    fn mode_names_round_trip() {
        for mode in FaultMode::ALL {
            assert_eq!(mode.as_str().parse::<FaultMode>().unwrap(), mode);
        }
        assert!("broken".parse::<FaultMode>().is_err());
    }

    #[test]
    fn serve_answers_requests() {
        let (model, inst) = fixtures::pima();
        let mut input = String::new();
        input.push_str(&request_json(3, &model, &inst, ExplanationKind::Cxp).to_string());
        input.push('\n');
        input.push_str("not json\n");
        let mut output = Vec::new();
        serve(input.as_bytes(), &mut output, &FaultyExplainer::new(FaultMode::Honest)).unwrap();
        let text = String::from_utf8(output).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let response = parse_response(lines[0], 3, ExplanationKind::Cxp, 8).unwrap().unwrap();
        assert!(!response.explanation.features.is_empty());
        assert!(parse_response(lines[0], 4, ExplanationKind::Cxp, 8).unwrap().is_none());
        assert!(matches!(parse_response(lines[1], 0, ExplanationKind::Cxp, 8), Err(TargetError::Reported(_))));
    }

    #[test]
    fn malformed_responses_are_protocol_errors() {
        let cases = [
            "{",
            "[1]",
            r#"{"features": [1]}"#,
            r#"{"id": 1}"#,
            r#"{"id": 1, "features": [0]}"#,
            r#"{"id": 1, "features": [9]}"#,
            r#"{"id": 1, "features": [1], "witness": "x"}"#,
        ];
        for line in cases {
            assert!(
                matches!(parse_response(line, 1, ExplanationKind::Axp, 8), Err(TargetError::Protocol(_))),
                "{line}"
            );
        }
    }

    #[cfg(unix)]
    #[test]
    fn process_endpoint_errors() {
        let (model, inst) = fixtures::xd6();
        let sh = |script: &str| vec!["sh".to_string(), "-c".to_string(), script.to_string()];

        let garbage = ProcessEndpoint::spawn(&sh("read line; echo 'not json'; sleep 5"), Duration::from_secs(5)).unwrap();
        assert!(matches!(garbage.explain(&model, &inst, ExplanationKind::Axp), Err(TargetError::Protocol(_))));

        let slow = ProcessEndpoint::spawn(&sh("sleep 5"), Duration::from_millis(200)).unwrap();
        assert!(slow.explain(&model, &inst, ExplanationKind::Axp).unwrap_err().is_timeout());

        let quits = ProcessEndpoint::spawn(&sh("read line"), Duration::from_secs(5)).unwrap();
        assert!(matches!(
            quits.explain(&model, &inst, ExplanationKind::Axp),
            Err(TargetError::Exited) | Err(TargetError::Io(_))
        ));

        let fixed = ProcessEndpoint::spawn(&sh(r#"read line; echo '{"id": 1, "features": [7, 8, 9]}'; sleep 5"#), Duration::from_secs(5)).unwrap();
        let response = fixed.explain(&model, &inst, ExplanationKind::Axp).unwrap();
        assert_eq!(response.explanation.features, FeatureSet::from([7, 8, 9]));

        assert!(matches!(
            ProcessEndpoint::spawn_str("/nonexistent/target", DEFAULT_TIMEOUT),
            Err(TargetError::Spawn { .. })
        ));
    }
}
