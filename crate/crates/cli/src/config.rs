//! The experiment file: one JSON document holding the calibration config,
//! an optional synthetic risk model, Monte Carlo settings and sweep axes.

use std::fs;
use std::path::Path;

use altt_core::{
    validate_config, AcquisitionPolicy, BettingSpec, BettingStrategy, CalibrationConfig, SyntheticSpec,
};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilon: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub delta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alpha: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub strategy: Vec<BettingStrategy>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.epsilon.is_empty() && self.delta.is_empty() && self.alpha.is_empty() && self.strategy.is_empty()
    }
}

/// One point of a sweep grid. `None` keeps the base config's value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub alpha: Option<f64>,
    pub strategy: Option<BettingStrategy>,
}

impl GridPoint {
    pub fn apply(&self, base: &CalibrationConfig) -> CalibrationConfig {
        let mut cfg = base.clone();
        if let Some(epsilon) = self.epsilon {
            cfg.acquisition.policy = AcquisitionPolicy::EpsGreedy { epsilon };
        }
        if let Some(delta) = self.delta {
            cfg.delta = delta;
        }
        if let Some(alpha) = self.alpha {
            cfg.alpha = alpha;
        }
        if let Some(strategy) = self.strategy {
            cfg.betting = BettingSpec {
                strategy,
                ..cfg.betting
            };
        }
        cfg
    }
}

fn axis<T: Copy>(values: &[T]) -> Vec<Option<T>> {
    if values.is_empty() {
        vec![None]
    } else {
        values.iter().copied().map(Some).collect()
    }
}

impl SweepAxes {
    /// Cartesian product in the order epsilon, delta, alpha, strategy
    /// (strategy varies fastest).
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &epsilon in &axis(&self.epsilon) {
            for &delta in &axis(&self.delta) {
                for &alpha in &axis(&self.alpha) {
                    for &strategy in &axis(&self.strategy) {
                        out.push(GridPoint {
                            epsilon,
                            delta,
                            alpha,
                            strategy,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub calibration: CalibrationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "SweepAxes::is_empty")]
    pub sweep: SweepAxes,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).context("malformed config JSON")?;
        validate_config(&cfg.calibration)?;
        if let Some(spec) = &cfg.synthetic {
            spec.validate_for(&cfg.calibration)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn synthetic(&self) -> Result<&SyntheticSpec> {
        match &self.synthetic {
            Some(spec) => Ok(spec),
            None => bail!("config has no `synthetic` section; a synthetic risk model is required here"),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
