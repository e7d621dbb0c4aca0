//! Per-dataset summary tables over verdict records.
//!
//! Percentages are over decided explanations (validated or T error) of each
//! kind; R errors, reasoner issues, indeterminate runs and target failures
//! are counted in separate columns. Values are rounded half-to-even to one
//! decimal.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::campaign::VerdictRecord;
use crate::explain::ExplanationKind;
use crate::validate::{CaseId, Evidence, Outcome, WitnessSource};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct KindCounts {
    /// Validated plus T errors: the denominator of the percentages.
    pub decided: u64,
    /// A2a or C2b.
    pub not_weak: u64,
    /// A3a or C3a.
    pub not_minimal: u64,
    pub validated: u64,
}

impl KindCounts {
    pub fn percentages(&self) -> Option<[i64; 3]> {
        (self.decided > 0).then(|| {
            [self.not_weak, self.not_minimal, self.validated].map(|k| percent_tenths(k, self.decided))
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ReportRow {
    pub dataset: String,
    pub axp: KindCounts,
    pub cxp: KindCounts,
    /// R answers confirmed by replaying a witness on the model.
    pub witness_checks: u64,
    /// R answers confirmed by S.
    pub s_checks: u64,
    pub r_errors: u64,
    pub reasoner_issues: u64,
    pub indeterminate: u64,
    pub target_timeouts: u64,
    pub target_failures: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

/// `100 * k / n` in tenths of a percent, rounded half to even.
pub fn percent_tenths(k: u64, n: u64) -> i64 {
    assert!(n > 0, "percentage of an empty population");
    let scaled = 1000 * k as u128;
    let n = n as u128;
    let (q, r) = (scaled / n, scaled % n);
    let up = match (2 * r).cmp(&n) {
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Equal => q % 2 == 1,
    };
    (q + up as u128) as i64
}

pub fn format_tenths(tenths: i64) -> String {
    format!("{}.{}", tenths / 10, tenths % 10)
}

pub fn aggregate(records: &[VerdictRecord]) -> Report {
    let mut rows: BTreeMap<&str, ReportRow> = BTreeMap::new();
    for record in records {
        let row = rows.entry(record.dataset.as_str()).or_insert_with(|| ReportRow {
            dataset: record.dataset.clone(),
            ..ReportRow::default()
        });
        if record.target_error.is_some() {
            if record.target_timeout {
                row.target_timeouts += 1;
            } else {
                row.target_failures += 1;
            }
            continue;
        }
        let Some(verdict) = &record.verdict else {
            row.r_errors += 1;
            continue;
        };
        for evidence in &verdict.evidence {
            match evidence {
                Evidence::Witness {
                    source: WitnessSource::R,
                    defect: None,
                    ..
                } => row.witness_checks += 1,
                Evidence::Oracle { .. } => row.s_checks += 1,
                _ => {}
            }
        }
        let counts = match record.kind {
            ExplanationKind::Axp => &mut row.axp,
            ExplanationKind::Cxp => &mut row.cxp,
        };
        match verdict.outcome {
            Outcome::Validated => {
                counts.decided += 1;
                counts.validated += 1;
            }
            Outcome::TError => {
                counts.decided += 1;
                match verdict.case {
                    CaseId::A2a | CaseId::C2b => counts.not_weak += 1,
                    CaseId::A3a | CaseId::C3a => counts.not_minimal += 1,
                    other => unreachable!("{other} is not a T-error case"),
                }
            }
            Outcome::RError => row.r_errors += 1,
            Outcome::ReasonerIssue => row.reasoner_issues += 1,
            Outcome::Indeterminate => row.indeterminate += 1,
        }
    }
    Report {
        rows: rows.into_values().collect(),
    }
}

fn cells(counts: &KindCounts) -> [String; 3] {
    match counts.percentages() {
        Some(p) => p.map(format_tenths),
        None => ["-".to_string(), "-".to_string(), "-".to_string()],
    }
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "dataset,axp_n,axp_not_waxp,axp_waxp_not_axp,axp_valid,cxp_n,cxp_not_wcxp,cxp_wcxp_not_cxp,cxp_valid,\
             witness_checks,s_checks,r_errors,reasoner_issues,indeterminate,target_timeouts,target_failures\n",
        );
        for row in &self.rows {
            let [a1, a2, a3] = cells(&row.axp);
            let [c1, c2, c3] = cells(&row.cxp);
            writeln!(
                out,
                "{},{},{a1},{a2},{a3},{},{c1},{c2},{c3},{},{},{},{},{},{},{}",
                csv_field(&row.dataset),
                row.axp.decided,
                row.cxp.decided,
                row.witness_checks,
                row.s_checks,
                row.r_errors,
                row.reasoner_issues,
                row.indeterminate,
                row.target_timeouts,
                row.target_failures
            )
            .expect("writing to a String");
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("| Dataset | #AXp | %[¬WAXp] | %[WAXp∧¬AXp] | %[AXp] | #CXp | %[¬WCXp] | %[WCXp∧¬CXp] | %[CXp] |\n");
        out.push_str("|---|---:|---:|---:|---:|---:|---:|---:|---:|\n");
        for row in &self.rows {
            let [a1, a2, a3] = cells(&row.axp);
            let [c1, c2, c3] = cells(&row.cxp);
            writeln!(
                out,
                "| {} | {} | {a1} | {a2} | {a3} | {} | {c1} | {c2} | {c3} |",
                row.dataset, row.axp.decided, row.cxp.decided
            )
            .expect("writing to a String");
        }
        out.push('\n');
        out.push_str("| Dataset | witness+model | S concurrence | R errors | reasoner issues | indeterminate | T timeouts | T failures |\n");
        out.push_str("|---|---:|---:|---:|---:|---:|---:|---:|\n");
        for row in &self.rows {
            writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                row.dataset,
                row.witness_checks,
                row.s_checks,
                row.r_errors,
                row.reasoner_issues,
                row.indeterminate,
                row.target_timeouts,
                row.target_failures
            )
            .expect("writing to a String");
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
