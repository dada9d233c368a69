//! The online evaluation protocol.
//!
//! Warm-up statistics z-score the whole stream, the model is initialized on the
//! last `w` warm-up observations, and every online step issues an `H`-step
//! forecast before the next observation is admitted by a single slide. Every
//! forecast origin is scored on the horizons whose truth exists.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use workdmd_core::embed::{hankel_block, new_hankel_column, snapshot_pair, window_at, SnapshotPair};
use workdmd_core::forecast::{
    decoder_from_svd, forecast_with_basis, pod_basis_from_svd, Decoder, EigenTelemetry, ForecastOptions, PodBasis,
};
use workdmd_core::linalg::thin_svd;
use workdmd_core::metrics::{cumulative_error, exposure_count};
use workdmd_core::operator::{init_from_snapshots, KdmdState, SlideOutcome};
use workdmd_core::rff::RffMap;
use workdmd_core::series::{fit_normalizer, split_warmup, NormalizationStats, RawSeries};

use crate::config::{Method, MetricsSpace, RunConfig};
use crate::error::{Error, Result};

/// Output of one forecast request.
#[derive(Debug, Clone)]
pub struct StepForecast {
    /// `p × H`, normalized space.
    pub values: DMatrix<f64>,
    pub telemetry: Option<EigenTelemetry>,
    pub max_imag_residue: f64,
    pub imag_warning: bool,
}

/// Result of admitting one observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Admission {
    pub reinitialized: bool,
}

/// A forecaster driven by [`run_protocol`]. One owner, strictly sequential.
pub trait OnlineModel {
    fn method(&self) -> Method;
    fn forecast(&mut self, horizon: usize) -> workdmd_core::Result<StepForecast>;
    /// Admits the Hankel column ending at the newest observation.
    fn admit(&mut self, column: &DVector<f64>) -> workdmd_core::Result<Admission>;
    /// Feature-map evaluations of new columns so far.
    fn lift_count(&self) -> u64;
}

/// Kernel DMD with periodic decoder and POD refits.
pub struct WorkDmdModel {
    state: KdmdState,
    map: RffMap,
    decoder: Decoder,
    basis: PodBasis,
    options: ForecastOptions,
    decoder_period: usize,
    pod_period: usize,
    slides_since_decoder: usize,
    slides_since_pod: usize,
}

impl WorkDmdModel {
    pub fn new(pair: &SnapshotPair, config: &RunConfig) -> workdmd_core::Result<Self> {
        let map = RffMap::sample_with_scale(
            pair.x.nrows(),
            config.s,
            config.gamma,
            config.seed,
            config.frequency_variance.into(),
        )?;
        let state = init_from_snapshots(pair, &map, config.operator_config())?;
        let psi_x = state.psi_x();
        let svd = thin_svd(&psi_x)?;
        let basis = pod_basis_from_svd(&svd, config.r)?;
        let decoder = decoder_from_svd(&state.physical_x(), &psi_x, &svd)?;
        Ok(Self {
            state,
            map,
            decoder,
            basis,
            options: ForecastOptions::new(config.r, config.horizon, config.d),
            decoder_period: config.decoder_period,
            pod_period: config.pod_period,
            slides_since_decoder: 0,
            slides_since_pod: 0,
        })
    }

    pub fn state(&self) -> &KdmdState {
        &self.state
    }

    pub fn map(&self) -> &RffMap {
        &self.map
    }

    fn due(period: usize, elapsed: usize) -> bool {
        period > 0 && elapsed >= period
    }

    fn refresh_fits(&mut self) -> workdmd_core::Result<()> {
        let pod = Self::due(self.pod_period, self.slides_since_pod);
        let dec = Self::due(self.decoder_period, self.slides_since_decoder);
        if !(pod || dec) {
            return Ok(());
        }
        let psi_x = self.state.psi_x();
        let svd = thin_svd(&psi_x)?;
        if pod {
            self.basis = pod_basis_from_svd(&svd, self.options.rank)?;
            self.slides_since_pod = 0;
        }
        if dec {
            self.decoder = decoder_from_svd(&self.state.physical_x(), &psi_x, &svd)?;
            self.slides_since_decoder = 0;
        }
        Ok(())
    }
}

impl OnlineModel for WorkDmdModel {
    fn method(&self) -> Method {
        Method::Workdmd
    }

    fn forecast(&mut self, horizon: usize) -> workdmd_core::Result<StepForecast> {
        self.refresh_fits()?;
        let opts = ForecastOptions {
            horizon,
            ..self.options
        };
        let fc = forecast_with_basis(&self.state, &self.basis, &self.decoder, &opts)?;
        Ok(StepForecast {
            values: fc.physical.values,
            telemetry: Some(fc.telemetry),
            max_imag_residue: fc.physical.max_imag_residue,
            imag_warning: fc.physical.imag_warning,
        })
    }

    fn admit(&mut self, column: &DVector<f64>) -> workdmd_core::Result<Admission> {
        let reinitialized = match self.state.slide(column, &self.map) {
            Ok(SlideOutcome::Updated) => false,
            Ok(SlideOutcome::Reinitialized(_)) => true,
            Err(workdmd_core::Error::ReinitRequired { .. }) => {
                self.state.reinitialize()?;
                true
            }
            Err(e) => return Err(e),
        };
        self.slides_since_decoder += 1;
        self.slides_since_pod += 1;
        Ok(Admission { reinitialized })
    }

    fn lift_count(&self) -> u64 {
        self.state.lift_count()
    }
}

/// Forecast record for one origin.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 1-based time of the newest observation when the forecast was issued.
    pub step: usize,
    /// `p × h_avail`, in the configured metrics space.
    pub predictions: DMatrix<f64>,
    pub truth: DMatrix<f64>,
    pub sq_err: f64,
    pub abs_err: f64,
    /// Number of scored entries, `p · h_avail`.
    pub count: usize,
}

impl StepRecord {
    pub fn matured_horizons(&self) -> usize {
        self.predictions.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub horizon: usize,
    pub mse: f64,
    pub mae: f64,
    pub count: usize,
}

/// Per-origin spectral and timing record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub step: usize,
    pub spectral_radius: f64,
    pub condition_estimate: f64,
    pub rank: usize,
    pub max_imag_residue: f64,
    pub step_seconds: f64,
    /// `|λ|`, descending.
    pub moduli: Vec<f64>,
}

/// Medians of consecutive blocks of per-step wall time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub median_step_seconds: f64,
    pub block_medians: Vec<f64>,
    /// Largest over smallest block median.
    pub block_ratio: f64,
}

pub const TIMING_BLOCKS: usize = 4;

pub fn timing_summary(step_seconds: &[f64], blocks: usize) -> TimingSummary {
    fn median(v: &[f64]) -> f64 {
        if v.is_empty() {
            return 0.0;
        }
        let mut s = v.to_vec();
        s.sort_by(|a, b| a.total_cmp(b));
        let n = s.len();
        if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        }
    }
    let blocks = blocks.max(1).min(step_seconds.len().max(1));
    let size = step_seconds.len() / blocks;
    let block_medians: Vec<f64> = if size == 0 {
        vec![median(step_seconds)]
    } else {
        (0..blocks)
            .map(|b| {
                let end = if b + 1 == blocks { step_seconds.len() } else { (b + 1) * size };
                median(&step_seconds[b * size..end])
            })
            .collect()
    };
    let hi = block_medians.iter().copied().fold(0.0, f64::max);
    let lo = block_medians.iter().copied().fold(f64::INFINITY, f64::min);
    TimingSummary {
        median_step_seconds: median(step_seconds),
        block_ratio: if lo > 0.0 { hi / lo } else { f64::INFINITY },
        block_medians,
    }
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub method: Method,
    pub config: RunConfig,
    pub mse: f64,
    pub mae: f64,
    pub per_horizon: Vec<HorizonMetrics>,
    /// Running MSE over origins, in step order.
    pub cumulative_mse: Vec<f64>,
    pub records: Vec<StepRecord>,
    pub telemetry: Vec<TelemetryRecord>,
    pub normalizer: NormalizationStats,
    pub warmup_len: usize,
    pub online_len: usize,
    pub slides: u64,
    pub total_sample_exposures: u64,
    pub lift_evaluations: u64,
    pub reinit_count: u64,
    pub max_imag_residue: f64,
    pub imag_warnings: usize,
    pub step_seconds: Vec<f64>,
    pub wall_time_seconds: f64,
}

impl EvalReport {
    pub fn timing(&self) -> TimingSummary {
        timing_summary(&self.step_seconds, TIMING_BLOCKS)
    }

    /// Largest spectral radius seen over the run.
    pub fn max_spectral_radius(&self) -> Option<f64> {
        self.telemetry.iter().map(|t| t.spectral_radius).reduce(f64::max)
    }
}

/// Warm-up split by `config.warmup_ratio`, then [`run_online_split`].
pub fn run_online(series: &RawSeries, config: &RunConfig) -> Result<EvalReport> {
    config.validate()?;
    let (warm, _) = split_warmup(series, config.warmup_ratio)?;
    run_online_split(series, warm.len(), config)
}

/// Runs the configured method with an explicit warm-up length.
pub fn run_online_split(series: &RawSeries, warmup_len: usize, config: &RunConfig) -> Result<EvalReport> {
    run_method(series, warmup_len, config, Method::Workdmd)
}

pub fn run_method(series: &RawSeries, warmup_len: usize, config: &RunConfig, method: Method) -> Result<EvalReport> {
    match method {
        Method::Workdmd => run_protocol(series, warmup_len, config, |pair| WorkDmdModel::new(pair, config)),
        Method::BatchDmd => run_protocol(series, warmup_len, config, |pair| {
            crate::batch::BatchDmdModel::new(pair, config.r, config.d)
        }),
    }
}

/// The shared slide–forecast–record loop.
pub fn run_protocol<M, F>(series: &RawSeries, warmup_len: usize, config: &RunConfig, build: F) -> Result<EvalReport>
where
    M: OnlineModel,
    F: FnOnce(&SnapshotPair) -> workdmd_core::Result<M>,
{
    config.validate()?;
    let total = series.len();
    if warmup_len < config.w + 1 {
        return Err(Error::Config(format!(
            "warm-up has {warmup_len} steps, need at least w + 1 = {}",
            config.w + 1
        )));
    }
    if warmup_len >= total {
        return Err(Error::Config(format!(
            "no online phase: warm-up {warmup_len} of {total} steps"
        )));
    }
    let started = Instant::now();
    let normalizer = fit_normalizer(&series.slice(0, warmup_len)?)?;
    let z = normalizer.apply(series)?;
    let p = series.n_features();
    let raw = config.metrics_space == MetricsSpace::Raw;

    let window = window_at(&z, warmup_len, config.w)?;
    let pair = snapshot_pair(&hankel_block(&window, config.d)?)?;
    let mut model = build(&pair)?;
    let method = model.method();

    let online = total - warmup_len;
    let mut records = Vec::with_capacity(online);
    let mut telemetry = Vec::with_capacity(online);
    let mut step_seconds = Vec::with_capacity(online);
    let (mut h_sse, mut h_sae, mut h_count) = (
        vec![0.0; config.horizon],
        vec![0.0; config.horizon],
        vec![0usize; config.horizon],
    );
    let (mut slides, mut reinit_count) = (0u64, 0u64);
    let (mut max_imag, mut imag_warnings) = (0.0f64, 0usize);

    for t in warmup_len..total {
        let tick = Instant::now();
        let fc = model
            .forecast(config.horizon)
            .map_err(|source| Error::Step { step: t, source })?;
        let avail = config.horizon.min(total - t);
        let mut predictions = fc.values.columns(0, avail).into_owned();
        let mut truth = z.values().columns(t, avail).into_owned();
        if raw {
            normalizer.invert_in_place(&mut predictions)?;
            normalizer.invert_in_place(&mut truth)?;
        }

        let column = new_hankel_column(&z, t + 1, config.d)?;
        let lifts_before = model.lift_count();
        let admission = model.admit(&column).map_err(|source| Error::Step { step: t, source })?;
        if method == Method::Workdmd && model.lift_count() != lifts_before + 1 {
            return Err(Error::Step {
                step: t,
                source: workdmd_core::Error::InvalidParameter(format!(
                    "single-pass violation: {} lifts for one new column",
                    model.lift_count() - lifts_before
                )),
            });
        }
        slides += 1;
        reinit_count += u64::from(admission.reinitialized);
        let elapsed = tick.elapsed().as_secs_f64();
        step_seconds.push(elapsed);

        let (mut sse, mut sae) = (0.0, 0.0);
        for h in 0..avail {
            for j in 0..p {
                let e = predictions[(j, h)] - truth[(j, h)];
                h_sse[h] += e * e;
                h_sae[h] += e.abs();
                sse += e * e;
                sae += e.abs();
            }
            h_count[h] += p;
        }
        max_imag = max_imag.max(fc.max_imag_residue);
        imag_warnings += usize::from(fc.imag_warning);
        if let Some(tel) = fc.telemetry {
            telemetry.push(TelemetryRecord {
                step: t,
                spectral_radius: tel.spectral_radius,
                condition_estimate: tel.condition_estimate,
                rank: tel.rank,
                max_imag_residue: fc.max_imag_residue,
                step_seconds: elapsed,
                moduli: tel.moduli,
            });
        }
        records.push(StepRecord {
            step: t,
            predictions,
            truth,
            sq_err: sse,
            abs_err: sae,
            count: p * avail,
        });
    }

    let total_count: usize = records.iter().map(|r| r.count).sum();
    let mse = records.iter().map(|r| r.sq_err).sum::<f64>() / total_count as f64;
    let mae = records.iter().map(|r| r.abs_err).sum::<f64>() / total_count as f64;
    let per_horizon = (0..config.horizon)
        .filter(|&h| h_count[h] > 0)
        .map(|h| HorizonMetrics {
            horizon: h + 1,
            mse: h_sse[h] / h_count[h] as f64,
            mae: h_sae[h] / h_count[h] as f64,
            count: h_count[h],
        })
        .collect();
    let pairs: Vec<(f64, usize)> = records.iter().map(|r| (r.sq_err, r.count)).collect();
    Ok(EvalReport {
        method,
        config: config.clone(),
        mse,
        mae,
        per_horizon,
        cumulative_mse: cumulative_error(&pairs),
        records,
        telemetry,
        normalizer,
        warmup_len,
        online_len: online,
        slides,
        total_sample_exposures: exposure_count(config.w as u64, slides),
        lift_evaluations: model.lift_count(),
        reinit_count,
        max_imag_residue: max_imag,
        imag_warnings,
        step_seconds,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    })
}
