//! Clausal (DRUP) proofs: representation, DRAT text format, and checking.

mod check;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::{Clause, Lit};

pub use check::{check_proof, CheckOutcome, RejectReason};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProofStep {
    Add(Clause),
    Delete(Clause),
}

/// An ordered list of clause additions and deletions. A refutation ends
/// with the addition of the empty clause.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClausalProof {
    pub steps: Vec<ProofStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct DratParseError {
    pub line: usize,
    pub message: String,
}

impl ClausalProof {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, clause: Clause) {
        self.steps.push(ProofStep::Add(clause));
    }

    pub fn delete(&mut self, clause: Clause) {
        self.steps.push(ProofStep::Delete(clause));
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn ends_with_refutation(&self) -> bool {
        matches!(self.steps.last(), Some(ProofStep::Add(c)) if c.is_empty())
    }

    /// DRAT text: one step per line, `d ` prefix for deletions.
    pub fn emit_drat(&self) -> String {
        let mut out = String::new();
        for step in &self.steps {
            let clause = match step {
                ProofStep::Add(c) => c,
                ProofStep::Delete(c) => {
                    out.push_str("d ");
                    c
                }
            };
            for lit in clause {
                let _ = write!(out, "{lit} ");
            }
            out.push_str("0\n");
        }
        out
    }

    pub fn parse_drat(text: &str) -> Result<Self, DratParseError> {
        let mut proof = ClausalProof::new();
        let mut current: Clause = Vec::new();
        let mut deleting = false;
        let mut open_line = 0;
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || (trimmed.starts_with('c') && current.is_empty() && !deleting) {
                continue;
            }
            for token in trimmed.split_whitespace() {
                if token == "d" {
                    if !current.is_empty() || deleting {
                        return Err(DratParseError {
                            line: line_no,
                            message: "`d` inside a clause".into(),
                        });
                    }
                    deleting = true;
                    open_line = line_no;
                    continue;
                }
                let value: i32 = token.parse().map_err(|_| DratParseError {
                    line: line_no,
                    message: format!("invalid literal `{token}`"),
                })?;
                if value == 0 {
                    let clause = std::mem::take(&mut current);
                    proof.steps.push(if deleting {
                        ProofStep::Delete(clause)
                    } else {
                        ProofStep::Add(clause)
                    });
                    deleting = false;
                } else {
                    if current.is_empty() && !deleting {
                        open_line = line_no;
                    }
                    current.push(Lit::from_dimacs(value));
                }
            }
        }
        if !current.is_empty() || deleting {
            return Err(DratParseError {
                line: open_line,
                message: "clause is not terminated by 0".into(),
            });
        }
        Ok(proof)
    }
}
