//! Run configuration: a flat `key = value` file plus environment overrides.
//!
//! ```text
//! seed = 2024
//! instances = 200
//! timeout_secs = 60
//! conflict_budget = 1000000
//! enumeration_budget = 10000000
//! a1_extra_checks = true
//! full_scan = false
//! parallel = true
//! ```
//!
//! `XPVAL_CONFLICT_BUDGET`, `XPVAL_ENUMERATION_BUDGET` and `XPVAL_TIMEOUT_SECS`
//! override the file.

use std::path::Path;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::explain::ExplainerConfig;
use crate::par::Execution;
use crate::sat::SolverConfig;
use crate::validate::ValidatorConfig;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("environment variable {name}: {message}")]
    Env { name: String, message: String },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub instances: usize,
    pub timeout_secs: u64,
    /// 0 means unlimited.
    pub conflict_budget: u64,
    pub enumeration_budget: u64,
    pub a1_extra_checks: bool,
    pub full_scan: bool,
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 2024,
            instances: 200,
            timeout_secs: 60,
            conflict_budget: 1_000_000,
            enumeration_budget: 10_000_000,
            a1_extra_checks: true,
            full_scan: false,
            parallel: true,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))
    }

    /// Applies overrides from `lookup` (normally `std::env::var`).
    pub fn with_env(mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let number = |name: &str| -> Result<Option<u64>, ConfigError> {
            lookup(name)
                .map(|v| {
                    v.trim().parse::<u64>().map_err(|e| ConfigError::Env {
                        name: name.to_string(),
                        message: e.to_string(),
                    })
                })
                .transpose()
        };
        if let Some(v) = number("XPVAL_CONFLICT_BUDGET")? {
            self.conflict_budget = v;
        }
        if let Some(v) = number("XPVAL_ENUMERATION_BUDGET")? {
            self.enumeration_budget = v;
        }
        if let Some(v) = number("XPVAL_TIMEOUT_SECS")? {
            self.timeout_secs = v;
        }
        Ok(self)
    }

    pub fn from_env(self) -> Result<Self, ConfigError> {
        self.with_env(|name| std::env::var(name).ok())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    pub fn execution(&self) -> Execution {
        if self.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    pub fn explainer(&self) -> ExplainerConfig {
        ExplainerConfig {
            solver: SolverConfig {
                conflict_budget: (self.conflict_budget > 0).then_some(self.conflict_budget),
                seed: self.seed,
            },
            enumeration_budget: self.enumeration_budget,
            execution: self.execution(),
        }
    }

    pub fn validator(&self) -> ValidatorConfig {
        ValidatorConfig {
            explainer: self.explainer(),
            a1_extra_checks: self.a1_extra_checks,
            full_scan: self.full_scan,
        }
    }
}
