//! Drives the recursive operator update against a from-scratch batch solve at
//! every slide and reports the worst relative deviation.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use workdmd_core::embed::{hankel_block, new_hankel_column, snapshot_pair, window_at};
use workdmd_core::linalg::rel_frobenius;
use workdmd_core::operator::{init_from_snapshots, KdmdState, OperatorConfig, SlideOutcome};
use workdmd_core::rff::RffMap;
use workdmd_core::rng::{streams, SeededStream};
use workdmd_core::series::{fit_normalizer, RawSeries};

use crate::config::FrequencyVariance;
use crate::error::{Error, Result};
use crate::ingest::SynthPreset;

pub const DEFAULT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OracleStream {
    /// Three noisy coupled oscillators.
    ThreeFeature,
    /// Zeros with isolated spikes: each spike column is unique in its window,
    /// so dropping it is a rank-one downdate of (nearly) full leverage.
    Spike,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub stream: OracleStream,
    pub w: usize,
    pub d: usize,
    pub s: usize,
    pub gamma: f64,
    pub slides: usize,
    pub seed: u64,
    pub epsilon_scale: f64,
    pub refresh_period: usize,
    pub frequency_variance: FrequencyVariance,
    pub tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            stream: OracleStream::ThreeFeature,
            w: 60,
            d: 10,
            s: 64,
            gamma: 1e-3,
            slides: 200,
            seed: crate::config::DEFAULT_SEED,
            epsilon_scale: workdmd_core::operator::EPSILON_SCALE,
            refresh_period: 0,
            frequency_variance: FrequencyVariance::TwoGamma,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub config: OracleConfig,
    pub slides: usize,
    pub max_rel_dev_p: f64,
    pub max_rel_dev_a: f64,
    /// Slide index (0-based) with the largest deviation of either matrix.
    pub worst_step: usize,
    pub reinit_count: u64,
    pub reinit_steps: Vec<usize>,
    pub elapsed_seconds: f64,
    pub passed: bool,
}

/// Spike train: zero except at every `period`-th step, with seeded magnitudes.
pub fn spike_stream(len: usize, period: usize, seed: u64) -> Result<RawSeries> {
    if period == 0 {
        return Err(Error::Config("spike period must be >= 1".into()));
    }
    let mut rng = SeededStream::new(seed, streams::SYNTHETIC_NOISE);
    let values: Vec<f64> = (0..len)
        .map(|t| if t % period == period / 2 { 1.0 + rng.uniform() } else { 0.0 })
        .collect();
    Ok(RawSeries::from_rows(&[values])?)
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d >= self.w {
            return Err(Error::Config(format!("need 1 <= d < w (w={}, d={})", self.w, self.d)));
        }
        if self.s == 0 || self.slides == 0 {
            return Err(Error::Config("s and slides must be >= 1".into()));
        }
        if !(self.gamma > 0.0 && self.epsilon_scale > 0.0 && self.tolerance > 0.0) {
            return Err(Error::Config("gamma, epsilon_scale and tolerance must be positive".into()));
        }
        Ok(())
    }

    /// The stream for this comparison: `w + slides` observations.
    pub fn series(&self) -> Result<RawSeries> {
        let len = self.w + self.slides;
        match self.stream {
            OracleStream::ThreeFeature => SynthPreset::ThreeFeature.generate(len, self.seed),
            OracleStream::Spike => spike_stream(len, self.w - self.d + 3, self.seed),
        }
    }
}

/// Runs `config.slides` slides and checks `(P, A)` against the batch solve
/// after each one. Normalization uses the initial window.
pub fn compare_oracle(config: &OracleConfig) -> Result<OracleReport> {
    config.validate()?;
    let series = config.series()?;
    let started = Instant::now();
    let normalizer = fit_normalizer(&series.slice(0, config.w)?)?;
    let z = normalizer.apply(&series)?;
    let pair = snapshot_pair(&hankel_block(&window_at(&z, config.w, config.w)?, config.d)?)?;
    let map = RffMap::sample_with_scale(
        pair.x.nrows(),
        config.s,
        config.gamma,
        config.seed,
        config.frequency_variance.into(),
    )?;
    let op = OperatorConfig {
        epsilon_scale: config.epsilon_scale,
        refresh_period: config.refresh_period,
    };
    let mut state = init_from_snapshots(&pair, &map, op)?;

    let (mut max_p, mut max_a, mut worst) = (0.0f64, 0.0f64, (0.0f64, 0usize));
    let mut reinit_steps = Vec::new();
    for k in 0..config.slides {
        let t = config.w + k;
        let col = new_hankel_column(&z, t + 1, config.d)?;
        if slide_with_recovery(&mut state, &col, &map).map_err(|source| Error::Step { step: k, source })? {
            reinit_steps.push(k);
        }
        let (p_ref, a_ref) = state.oracle().map_err(|source| Error::Step { step: k, source })?;
        let dp = rel_frobenius(state.p(), &p_ref);
        let da = rel_frobenius(state.a(), &a_ref);
        max_p = max_p.max(dp);
        max_a = max_a.max(da);
        if dp.max(da) > worst.0 || !dp.max(da).is_finite() {
            worst = (dp.max(da), k);
        }
    }
    let passed = max_p < config.tolerance && max_a < config.tolerance;
    Ok(OracleReport {
        config: config.clone(),
        slides: config.slides,
        max_rel_dev_p: max_p,
        max_rel_dev_a: max_a,
        worst_step: worst.1,
        reinit_count: state.reinit_count(),
        reinit_steps,
        elapsed_seconds: started.elapsed().as_secs_f64(),
        passed,
    })
}

/// One slide; true when the state was rebuilt by batch.
fn slide_with_recovery(
    state: &mut KdmdState,
    col: &nalgebra::DVector<f64>,
    map: &RffMap,
) -> workdmd_core::Result<bool> {
    match state.slide(col, map) {
        Ok(SlideOutcome::Updated) => Ok(false),
        Ok(SlideOutcome::Reinitialized(_)) => Ok(true),
        Err(workdmd_core::Error::ReinitRequired { .. }) => state.reinitialize().map(|_| true),
        Err(e) => Err(e),
    }
}
