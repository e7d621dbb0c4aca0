//! Validation of formal explanations for tree ensembles.
//!
//! An untrusted explainer T proposes abductive (AXp) or contrastive (CXp)
//! explanations. A reference explainer R, built on a proof-logging SAT
//! solver, and an independent enumeration oracle S decide whether each
//! proposal is correct, and every verdict comes with replayable evidence.

pub mod campaign;
pub mod cnf;
pub mod config;
pub mod dataset;
pub mod encoding;
pub mod explain;
pub mod fixtures;
pub mod model;
pub mod oracle;
pub mod par;
pub mod proof;
pub mod rational;
pub mod report;
pub mod sat;
pub mod target;
pub mod validate;
