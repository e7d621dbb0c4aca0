//! Campaigns: ask T for explanations of many instances and validate each.

use std::io::{BufRead, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::explain::ExplanationKind;
use crate::model::{FeatureSet, Instance, TreeEnsembleModel};
use crate::par;
use crate::target::{MutationStatus, TargetExplainer};
use crate::validate::{Validator, Verdict};

/// One validated (or unvalidatable) explanation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub dataset: String,
    /// Row of the instance in its dataset, 0-based.
    pub row: usize,
    pub kind: ExplanationKind,
    pub target: String,
    pub explanation: Option<FeatureSet>,
    pub mutation: Option<MutationStatus>,
    /// Set when T gave no usable answer (timeout, protocol violation, ...).
    pub target_error: Option<String>,
    pub target_timeout: bool,
    /// Set when validation could not start.
    pub setup_error: Option<String>,
    pub verdict: Option<Verdict>,
}

pub struct CampaignInput<'a> {
    pub dataset: String,
    pub model: &'a TreeEnsembleModel,
    pub instances: Vec<(usize, Instance)>,
}

/// Where to write proofs; `None` keeps them in memory only.
#[derive(Debug, Clone, Default)]
pub struct CampaignOptions {
    pub proof_dir: Option<PathBuf>,
}

/// Validates T's answer for every (instance, kind). Records come back in
/// input order whatever the execution mode.
pub fn run_campaign(
    inputs: &[CampaignInput<'_>],
    target: &dyn TargetExplainer,
    kinds: &[ExplanationKind],
    config: &RunConfig,
    options: &CampaignOptions,
) -> Vec<VerdictRecord> {
    let tasks: Vec<(&CampaignInput<'_>, &(usize, Instance), ExplanationKind)> = inputs
        .iter()
        .flat_map(|input| {
            input
                .instances
                .iter()
                .flat_map(move |inst| kinds.iter().map(move |&kind| (input, inst, kind)))
        })
        .collect();
    par::map(&tasks, config.execution(), |(input, (row, instance), kind)| {
        validate_one(input, *row, instance, *kind, target, config, options)
    })
}

fn validate_one(
    input: &CampaignInput<'_>,
    row: usize,
    instance: &Instance,
    kind: ExplanationKind,
    target: &dyn TargetExplainer,
    config: &RunConfig,
    options: &CampaignOptions,
) -> VerdictRecord {
    let mut record = VerdictRecord {
        dataset: input.dataset.clone(),
        row,
        kind,
        target: target.name(),
        explanation: None,
        mutation: None,
        target_error: None,
        target_timeout: false,
        setup_error: None,
        verdict: None,
    };
    let response = match target.explain(input.model, instance, kind) {
        Ok(r) => r,
        Err(e) => {
            record.target_timeout = e.is_timeout();
            record.target_error = Some(e.to_string());
            return record;
        }
    };
    record.explanation = Some(response.explanation.features.clone());
    record.mutation = response.mutation.clone();
    let validator = match Validator::new(input.model, instance, config.validator()) {
        Ok(v) => v,
        Err(e) => {
            record.setup_error = Some(e.to_string());
            return record;
        }
    };
    let mut validator = match &options.proof_dir {
        Some(dir) => validator.with_proof_prefix(dir.join(format!("{}-{row}-{kind}", input.dataset))),
        None => validator,
    };
    match validator.validate(kind, &response.explanation.features, response.witness.as_deref()) {
        Ok(v) => record.verdict = Some(v),
        Err(e) => record.setup_error = Some(e.to_string()),
    }
    record
}

pub fn write_records<W: Write>(mut writer: W, records: &[VerdictRecord]) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<VerdictRecord>, String> {
    let mut records = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", index + 1))?);
    }
    Ok(records)
}
