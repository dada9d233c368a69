//! Run configuration shared by the pipeline, tuning and the CLI.

use serde::{Deserialize, Serialize};
use workdmd_core::operator::OperatorConfig;
use workdmd_core::rff::FrequencyScale;

use crate::error::{Error, Result};

/// Space in which forecast errors are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MetricsSpace {
    /// z-scores under the warm-up normalizer.
    #[default]
    Normalized,
    /// Original units.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Workdmd,
    #[value(name = "batch_dmd", alias = "batch-dmd")]
    BatchDmd,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Workdmd => "workdmd",
            Method::BatchDmd => "batch_dmd",
        }
    }
}

/// Serializable mirror of [`FrequencyScale`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyVariance {
    #[default]
    TwoGamma,
    Gamma,
}

impl From<FrequencyVariance> for FrequencyScale {
    fn from(v: FrequencyVariance) -> Self {
        match v {
            FrequencyVariance::TwoGamma => FrequencyScale::TwoGamma,
            FrequencyVariance::Gamma => FrequencyScale::Gamma,
        }
    }
}

impl From<FrequencyScale> for FrequencyVariance {
    fn from(v: FrequencyScale) -> Self {
        match v {
            FrequencyScale::TwoGamma => FrequencyVariance::TwoGamma,
            FrequencyScale::Gamma => FrequencyVariance::Gamma,
        }
    }
}

pub const DEFAULT_SEED: u64 = 42;

/// Hyperparameters and bookkeeping periods for one online run.
///
/// Periods count slides. `decoder_period` and `pod_period` of 1 refit before
/// every forecast; 0 keeps the fit from initialization. `refresh_period` of 0
/// never forces a batch rebuild of the operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub w: usize,
    pub d: usize,
    pub s: usize,
    pub gamma: f64,
    /// Requested POD rank; capped by the numerical rank of the window.
    pub r: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub decoder_period: usize,
    pub pod_period: usize,
    pub refresh_period: usize,
    pub seed: u64,
    pub metrics_space: MetricsSpace,
    pub warmup_ratio: f64,
    pub epsilon_scale: f64,
    pub frequency_variance: FrequencyVariance,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            w: 120,
            d: 30,
            s: 1024,
            gamma: 1e-4,
            r: 128,
            horizon: 1,
            decoder_period: 1,
            pod_period: 1,
            refresh_period: 0,
            seed: DEFAULT_SEED,
            metrics_space: MetricsSpace::Normalized,
            warmup_ratio: 0.25,
            epsilon_scale: workdmd_core::operator::EPSILON_SCALE,
            frequency_variance: FrequencyVariance::TwoGamma,
        }
    }
}

impl RunConfig {
    /// Snapshot pairs per window, `w - d`.
    pub fn m(&self) -> usize {
        self.w.saturating_sub(self.d)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.d == 0 {
            return fail("d must be >= 1".into());
        }
        if self.d >= self.w {
            return fail(format!("need m = w - d >= 1 (w={}, d={})", self.w, self.d));
        }
        if self.s == 0 {
            return fail("s must be >= 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return fail(format!("gamma must be positive and finite, got {}", self.gamma));
        }
        if self.r == 0 {
            return fail("r must be >= 1".into());
        }
        if self.horizon == 0 {
            return fail("H must be >= 1".into());
        }
        if !(self.warmup_ratio > 0.0 && self.warmup_ratio < 1.0) {
            return fail(format!("warmup_ratio must lie in (0, 1), got {}", self.warmup_ratio));
        }
        if !(self.epsilon_scale > 0.0 && self.epsilon_scale.is_finite()) {
            return fail(format!("epsilon_scale must be positive, got {}", self.epsilon_scale));
        }
        Ok(())
    }

    pub fn operator_config(&self) -> OperatorConfig {
        OperatorConfig {
            epsilon_scale: self.epsilon_scale,
            refresh_period: self.refresh_period,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.m(), 90);
    }

    #[test]
    fn rejects_bad_shapes() {
        let bad = [
            RunConfig { d: 0, ..Default::default() },
            RunConfig { w: 30, d: 30, ..Default::default() },
            RunConfig { horizon: 0, ..Default::default() },
            RunConfig { gamma: 0.0, ..Default::default() },
            RunConfig { warmup_ratio: 1.0, ..Default::default() },
            RunConfig { r: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
    }

    #[test]
    fn json_uses_capital_h_and_rejects_unknown_keys() {
        let c: RunConfig = serde_json::from_str(r#"{"w": 60, "H": 24}"#).unwrap();
        assert_eq!((c.w, c.horizon, c.d), (60, 24, 30));
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<RunConfig>(r#"{"window": 60}"#).is_err());
    }
}
