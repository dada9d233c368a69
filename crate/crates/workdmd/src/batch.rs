//! Linear batch DMD refit on every window: a baseline and oracle forecaster.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use workdmd_core::dmd_ref::{dmd_fit, dmd_forecast};
use workdmd_core::embed::{newest_lag_rows, SnapshotPair};
use workdmd_core::forecast::EigenTelemetry;
use workdmd_core::linalg::condition_number;
use workdmd_core::series::RawSeries;

use crate::config::{Method, MetricsSpace, RunConfig};
use crate::error::Result;
use crate::pipeline::{run_method, Admission, EvalReport, OnlineModel, StepForecast};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchDmdConfig {
    pub w: usize,
    pub d: usize,
    pub r: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(default = "default_ratio")]
    pub warmup_ratio: f64,
    #[serde(default)]
    pub metrics_space: MetricsSpace,
}

fn default_ratio() -> f64 {
    0.25
}

impl BatchDmdConfig {
    /// The equivalent run configuration; kernel fields keep their defaults and are unused.
    pub fn to_run_config(&self) -> RunConfig {
        RunConfig {
            w: self.w,
            d: self.d,
            r: self.r,
            horizon: self.horizon,
            warmup_ratio: self.warmup_ratio,
            metrics_space: self.metrics_space,
            ..RunConfig::default()
        }
    }
}

pub fn run_batch_dmd(series: &RawSeries, config: &BatchDmdConfig) -> Result<EvalReport> {
    let cfg = config.to_run_config();
    cfg.validate()?;
    let (warm, _) = workdmd_core::series::split_warmup(series, cfg.warmup_ratio)?;
    run_method(series, warm.len(), &cfg, Method::BatchDmd)
}

pub struct BatchDmdModel {
    /// `(p·d) × (m+1)` physical Hankel window, oldest column first.
    window: DMatrix<f64>,
    r: usize,
    d: usize,
    admitted: u64,
}

impl BatchDmdModel {
    pub fn new(pair: &SnapshotPair, r: usize, d: usize) -> workdmd_core::Result<Self> {
        let m = pair.m();
        let mut window = DMatrix::zeros(pair.x.nrows(), m + 1);
        window.columns_mut(0, m).copy_from(&pair.x);
        window.set_column(m, &pair.latest_column);
        Ok(Self {
            window,
            r,
            d,
            admitted: 0,
        })
    }
}

impl OnlineModel for BatchDmdModel {
    fn method(&self) -> Method {
        Method::BatchDmd
    }

    fn forecast(&mut self, horizon: usize) -> workdmd_core::Result<StepForecast> {
        let m = self.window.ncols() - 1;
        let x = self.window.columns(0, m).into_owned();
        let y = self.window.columns(1, m).into_owned();
        let fit = dmd_fit(&x, &y, self.r)?;
        let p = self.window.nrows() / self.d;
        let rows: Vec<usize> = newest_lag_rows(p, self.d).collect();
        let mut values = DMatrix::zeros(p, horizon);
        let mut max_imag: f64 = 0.0;
        for h in 0..horizon {
            let v = dmd_forecast(&fit, h as u32 + 1);
            for (j, &row) in rows.iter().enumerate() {
                values[(j, h)] = v[row].re;
                max_imag = max_imag.max(v[row].im.abs());
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(workdmd_core::Error::NonFinite("batch DMD forecast"));
        }
        let scale = values.iter().map(|v| v.abs()).fold(1.0, f64::max);
        let moduli: Vec<f64> = fit.eigenvalues.iter().map(|z| z.norm()).collect();
        Ok(StepForecast {
            values,
            telemetry: Some(EigenTelemetry {
                step: self.admitted,
                spectral_radius: moduli.first().copied().unwrap_or(0.0),
                condition_estimate: condition_number(&fit.modes),
                rank: fit.rank,
                moduli,
            }),
            max_imag_residue: max_imag,
            imag_warning: max_imag > workdmd_core::forecast::IMAG_WARN_RATIO * scale,
        })
    }

    fn admit(&mut self, column: &DVector<f64>) -> workdmd_core::Result<Admission> {
        let rows = self.window.nrows();
        if column.len() != rows {
            return Err(workdmd_core::Error::DimensionMismatch {
                context: "batch DMD column",
                expected: rows,
                got: column.len(),
            });
        }
        let data = self.window.as_mut_slice();
        let len = data.len();
        data.copy_within(rows.., 0);
        data[len - rows..].copy_from_slice(column.as_slice());
        self.admitted += 1;
        Ok(Admission { reinitialized: false })
    }

    /// Batch DMD works on physical coordinates and never lifts.
    fn lift_count(&self) -> u64 {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::SynthPreset;
    use workdmd_core::series::{gen_synthetic, SyntheticKind, SyntheticSpec};

    // z-scoring makes x_{t+1} = M x_t affine; three delays turn the rotation's
    // affine recurrence back into a linear one with spectrum {e^{±iφ}, 1}.
    #[test]
    fn linear_system_is_recovered_exactly() {
        let series = SynthPreset::Rotation.generate(200, 0).unwrap();
        let cfg = BatchDmdConfig {
            w: 20,
            d: 3,
            r: 6,
            horizon: 4,
            warmup_ratio: 0.25,
            metrics_space: MetricsSpace::Normalized,
        };
        let rep = run_batch_dmd(&series, &cfg).unwrap();
        assert_eq!(rep.method, Method::BatchDmd);
        assert!(rep.per_horizon[0].mse < 1e-8, "{}", rep.per_horizon[0].mse);
        for tel in &rep.telemetry {
            assert_eq!(tel.rank, 3);
            for m in &tel.moduli {
                assert!((m - 1.0).abs() < 1e-6, "{:?}", tel.moduli);
            }
        }
    }

    #[test]
    fn eigenvalues_track_known_matrix() {
        let m = vec![vec![0.9, 0.2, 0.0], vec![-0.2, 0.9, 0.0], vec![0.0, 0.0, 0.97]];
        let spec = SyntheticSpec {
            kind: SyntheticKind::LinearSystem {
                matrix: m,
                initial: vec![1.0, 0.0, 1.0],
            },
            len: 80,
            noise_std: 0.0,
            seed: 0,
        };
        let series = gen_synthetic(&spec).unwrap();
        let cfg = BatchDmdConfig {
            w: 12,
            d: 2,
            r: 6,
            horizon: 1,
            warmup_ratio: 0.25,
            metrics_space: MetricsSpace::Raw,
        };
        let rep = run_batch_dmd(&series, &cfg).unwrap();
        let expect_complex = (0.9f64 * 0.9 + 0.2 * 0.2).sqrt();
        // the normalizer's offset adds the eigenvalue 1
        for tel in &rep.telemetry {
            assert_eq!(tel.rank, 4);
            let mut moduli = tel.moduli.clone();
            moduli.sort_by(|a, b| b.total_cmp(a));
            let expect = [1.0, 0.97, expect_complex, expect_complex];
            for (m, e) in moduli.iter().zip(expect) {
                assert!((m - e).abs() < 1e-6, "{:?}", tel.moduli);
            }
        }
    }

    #[test]
    fn report_schema_matches_kernel_runs() {
        let series = SynthPreset::TwoTone.generate(240, 0).unwrap();
        let run = RunConfig {
            w: 40,
            d: 8,
            s: 64,
            gamma: 1e-2,
            r: 16,
            horizon: 2,
            ..Default::default()
        };
        let batch = run_method(&series, 60, &run, Method::BatchDmd).unwrap();
        let kernel = run_method(&series, 60, &run, Method::Workdmd).unwrap();
        assert_eq!(batch.records.len(), kernel.records.len());
        assert_eq!(batch.per_horizon.len(), kernel.per_horizon.len());
        assert_eq!(batch.total_sample_exposures, kernel.total_sample_exposures);
        assert_eq!(batch.lift_evaluations, 0);
    }
}
