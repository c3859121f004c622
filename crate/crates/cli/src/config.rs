use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use stein_core::discrepancy::DiscrepancyKind;
use stein_core::{Interval, OperatorChoice, Scenario, SimConfig, TestConfig};

use crate::{CliError, TargetSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DictionarySpec {
    pub indicator_size: usize,
    pub y_indicator_size: usize,
    pub cap: usize,
}

impl Default for DictionarySpec {
    fn default() -> Self {
        let t = TestConfig::default();
        Self {
            indicator_size: t.indicator_size,
            y_indicator_size: t.y_indicator_size,
            cap: t.cap,
        }
    }
}

/// Everything a run reads. Missing keys take their defaults; unknown keys
/// are an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub target: TargetSpec,
    /// Overrides the target spec's `theta`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    pub dictionary: DictionarySpec,
    pub mode: DiscrepancyKind,
    pub alpha: f64,
    pub operator: OperatorChoice,
    pub min_group_size: usize,
    pub min_n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    /// Sample count for `scenario`.
    pub n: usize,
    /// Seeds the simulator and scenario sampler; `sim.seed` is replaced by it.
    pub seed: u64,
    /// Not echoed, so a report does not depend on where it was written.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TestConfig::default();
        Self {
            target: TargetSpec::default(),
            theta: None,
            dictionary: DictionarySpec::default(),
            mode: t.mode,
            alpha: t.alpha,
            operator: t.operator,
            min_group_size: t.min_group_size,
            min_n: t.min_n,
            sim: None,
            scenario: None,
            n: 10_000,
            seed: 0,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::new("CONFIG_PARSE", e.to_string()))?;
        Ok(cfg)
    }

    pub fn theta(&self) -> f64 {
        self.theta.or(self.target.theta).unwrap_or(1.0)
    }

    /// Checks that need no target construction.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::new("CONFIG_INVALID", m));
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return bad(format!("alpha must be in (0, 0.5), got {}", self.alpha));
        }
        let theta = self.theta();
        if !(theta > 0.0 && theta.is_finite()) {
            return bad(format!("theta must be positive, got {theta}"));
        }
        if self.dictionary.indicator_size == 0 || self.dictionary.y_indicator_size == 0 {
            return bad("dictionary sizes must be at least 1".into());
        }
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if let Some(sim) = &self.sim {
            sim.validate(Interval::REAL_LINE)
                .map_err(|e| CliError::new("SIM_CONFIG", e.to_string()))?;
        }
        Ok(())
    }

    pub fn test_config(&self) -> TestConfig {
        TestConfig {
            mode: self.mode,
            alpha: self.alpha,
            operator: self.operator,
            theta: self.theta(),
            indicator_size: self.dictionary.indicator_size,
            y_indicator_size: self.dictionary.y_indicator_size,
            cap: self.dictionary.cap,
            min_group_size: self.min_group_size,
            min_n: self.min_n,
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            seed: self.seed,
            ..self.sim.unwrap_or_default()
        }
    }
}
