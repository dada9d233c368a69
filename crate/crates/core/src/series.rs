//! In-memory multivariate series, warm-up splitting, z-score normalization and
//! synthetic test streams.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use nalgebra::DMatrix;

use crate::error::{ensure_dim, Error, Result};
use crate::rng::{streams, SeededStream};

/// Standard deviations below this are clamped so constant features normalize to 0.
pub const STD_FLOOR: f64 = 1e-8;

/// A `p`-variate series stored feature-major: `values[(j, t)]` is feature `j` at step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    values: DMatrix<f64>,
    timestamps: Option<Vec<i64>>,
    feature_names: Vec<String>,
}

impl RawSeries {
    pub fn new(
        values: DMatrix<f64>,
        timestamps: Option<Vec<i64>>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidParameter(format!(
                "series must have p >= 1 and T >= 1 (got p={}, T={})",
                values.nrows(),
                values.ncols()
            )));
        }
        ensure_dim("feature names", values.nrows(), feature_names.len())?;
        if let Some(ts) = &timestamps {
            ensure_dim("timestamps", values.ncols(), ts.len())?;
            if let Some(i) = ts.windows(2).position(|w| w[1] <= w[0]) {
                return Err(Error::InvalidParameter(format!(
                    "timestamps not strictly increasing at step {}",
                    i + 1
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("series values"));
        }
        Ok(Self {
            values,
            timestamps,
            feature_names,
        })
    }

    /// Builds a series with generated names `x0, x1, ...` and no timestamps.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let names = (0..values.nrows()).map(|j| format!("x{j}")).collect();
        Self::new(values, None, names)
    }

    /// Builds a series from per-feature rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        let t = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != t) {
            return Err(Error::InvalidParameter("ragged feature rows".into()));
        }
        Self::from_matrix(DMatrix::from_fn(p, t, |j, i| rows[j][i]))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn timestamps(&self) -> Option<&[i64]> {
        self.timestamps.as_deref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Number of features `p`.
    pub fn n_features(&self) -> usize {
        self.values.nrows()
    }

    /// Number of time steps `T`.
    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    /// Observation at 0-based step `t`.
    pub fn column(&self, t: usize) -> nalgebra::DVector<f64> {
        self.values.column(t).into_owned()
    }

    /// Sub-series over steps `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::InvalidParameter(format!(
                "slice [{start}, {end}) invalid for length {}",
                self.len()
            )));
        }
        Ok(Self {
            values: self.values.columns(start, end - start).into_owned(),
            timestamps: self.timestamps.as_ref().map(|ts| ts[start..end].to_vec()),
            feature_names: self.feature_names.clone(),
        })
    }

    /// Appends `other` in time. Feature counts must agree.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        ensure_dim("concat features", self.n_features(), other.n_features())?;
        let (p, a, b) = (self.n_features(), self.len(), other.len());
        let mut values = DMatrix::zeros(p, a + b);
        values.columns_mut(0, a).copy_from(&self.values);
        values.columns_mut(a, b).copy_from(&other.values);
        let timestamps = match (&self.timestamps, &other.timestamps) {
            (Some(x), Some(y)) => Some(x.iter().chain(y).copied().collect()),
            _ => None,
        };
        Ok(Self {
            values,
            timestamps,
            feature_names: self.feature_names.clone(),
        })
    }

    fn with_values(&self, values: DMatrix<f64>) -> Self {
        Self {
            values,
            timestamps: self.timestamps.clone(),
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Splits into a warm-up prefix of `floor(ratio * T)` steps and the online remainder.
pub fn split_warmup(series: &RawSeries, ratio: f64) -> Result<(RawSeries, RawSeries)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "warm-up ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let n = libm::floor(ratio * series.len() as f64) as usize;
    split_at(series, n)
}

/// Splits at an explicit warm-up length.
pub fn split_at(series: &RawSeries, warmup_len: usize) -> Result<(RawSeries, RawSeries)> {
    if warmup_len == 0 || warmup_len >= series.len() {
        return Err(Error::InvalidParameter(format!(
            "split leaves an empty phase (warm-up {warmup_len} of {})",
            series.len()
        )));
    }
    Ok((
        series.slice(0, warmup_len)?,
        series.slice(warmup_len, series.len())?,
    ))
}

/// Per-feature mean and (floored) population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, series: &RawSeries) -> Result<RawSeries> {
        ensure_dim("normalizer", self.n_features(), series.n_features())?;
        let mut v = series.values.clone();
        for (j, mut row) in v.row_iter_mut().enumerate() {
            let (mu, sd) = (self.mean[j], self.std[j]);
            row.apply(|x| *x = (*x - mu) / sd);
        }
        Ok(series.with_values(v))
    }

    pub fn invert(&self, series: &RawSeries) -> Result<RawSeries> {
        ensure_dim("normalizer", self.n_features(), series.n_features())?;
        let mut v = series.values.clone();
        self.invert_in_place(&mut v)?;
        Ok(series.with_values(v))
    }

    /// Maps a normalized `p × k` block back to original units in place.
    pub fn invert_in_place(&self, block: &mut DMatrix<f64>) -> Result<()> {
        ensure_dim("normalizer", self.n_features(), block.nrows())?;
        for (j, mut row) in block.row_iter_mut().enumerate() {
            let (mu, sd) = (self.mean[j], self.std[j]);
            row.apply(|x| *x = *x * sd + mu);
        }
        Ok(())
    }
}

pub fn fit_normalizer(warmup: &RawSeries) -> Result<NormalizationStats> {
    let t = warmup.len();
    if t < 2 {
        return Err(Error::InvalidParameter(format!(
            "normalizer needs at least 2 warm-up steps, got {t}"
        )));
    }
    let n = t as f64;
    let mut mean = Vec::with_capacity(warmup.n_features());
    let mut std = Vec::with_capacity(warmup.n_features());
    for row in warmup.values.row_iter() {
        let mu = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
        mean.push(mu);
        std.push(libm::sqrt(var).max(STD_FLOOR));
    }
    Ok(NormalizationStats { mean, std })
}

pub fn apply_normalizer(stats: &NormalizationStats, series: &RawSeries) -> Result<RawSeries> {
    stats.apply(series)
}

pub fn invert_normalizer(stats: &NormalizationStats, series: &RawSeries) -> Result<RawSeries> {
    stats.invert(series)
}

/// One sinusoidal component `amplitude * sin(2π frequency t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tone {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl Tone {
    pub fn new(amplitude: f64, frequency: f64, phase: f64) -> Self {
        Self {
            amplitude,
            frequency,
            phase,
        }
    }
}

/// Per-feature sums of tones plus a constant offset.
#[derive(Debug, Clone, PartialEq)]
pub struct SinusoidMix {
    pub tones: Vec<Vec<Tone>>,
    pub offsets: Vec<f64>,
}

impl SinusoidMix {
    fn value(&self, j: usize, t: f64) -> f64 {
        self.offsets[j]
            + self.tones[j]
                .iter()
                .map(|c| c.amplitude * libm::sin(TAU * c.frequency * t + c.phase))
                .sum::<f64>()
    }

    fn n_features(&self) -> usize {
        self.tones.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticKind {
    SinusoidMix(SinusoidMix),
    /// `x_{t+1} = M x_t` from `x_0 = initial`; `matrix` is row-major `p × p`.
    LinearSystem {
        matrix: Vec<Vec<f64>>,
        initial: Vec<f64>,
    },
    /// Generates from `before` for `t < shift_time` and from `after` afterwards.
    RegimeShift {
        shift_time: usize,
        before: SinusoidMix,
        after: SinusoidMix,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub len: usize,
    pub noise_std: f64,
    pub seed: u64,
}

/// Linear systems with spectral radius above this are rejected.
pub const MAX_SPECTRAL_RADIUS: f64 = 1.05;

impl SyntheticSpec {
    pub fn n_features(&self) -> usize {
        match &self.kind {
            SyntheticKind::SinusoidMix(mix) => mix.n_features(),
            SyntheticKind::LinearSystem { initial, .. } => initial.len(),
            SyntheticKind::RegimeShift { before, .. } => before.n_features(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.len == 0 {
            return Err(Error::InvalidParameter("synthetic length must be >= 1".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::InvalidParameter("noise_std must be >= 0".into()));
        }
        let check_mix = |mix: &SinusoidMix| -> Result<()> {
            if mix.tones.is_empty() {
                return Err(Error::InvalidParameter("sinusoid mix needs p >= 1".into()));
            }
            ensure_dim("sinusoid offsets", mix.tones.len(), mix.offsets.len())
        };
        match &self.kind {
            SyntheticKind::SinusoidMix(mix) => check_mix(mix),
            SyntheticKind::LinearSystem { matrix, initial } => {
                let p = initial.len();
                if p == 0 {
                    return Err(Error::InvalidParameter("linear system needs p >= 1".into()));
                }
                ensure_dim("system matrix rows", p, matrix.len())?;
                for row in matrix {
                    ensure_dim("system matrix columns", p, row.len())?;
                }
                let m = DMatrix::from_fn(p, p, |i, j| matrix[i][j]);
                let radius = m
                    .complex_eigenvalues()
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max);
                if radius > MAX_SPECTRAL_RADIUS {
                    return Err(Error::Unstable {
                        spectral_radius: radius,
                        limit: MAX_SPECTRAL_RADIUS,
                    });
                }
                Ok(())
            }
            SyntheticKind::RegimeShift { before, after, .. } => {
                check_mix(before)?;
                check_mix(after)?;
                ensure_dim("regime features", before.n_features(), after.n_features())
            }
        }
    }
}

/// Generates a deterministic synthetic stream; time runs `t = 0, 1, ..., len-1`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<RawSeries> {
    spec.validate()?;
    let p = spec.n_features();
    let n = spec.len;
    let mut values = DMatrix::zeros(p, n);
    match &spec.kind {
        SyntheticKind::SinusoidMix(mix) => {
            for t in 0..n {
                for j in 0..p {
                    values[(j, t)] = mix.value(j, t as f64);
                }
            }
        }
        SyntheticKind::LinearSystem { matrix, initial } => {
            let m = DMatrix::from_fn(p, p, |i, j| matrix[i][j]);
            let mut x = nalgebra::DVector::from_column_slice(initial);
            for t in 0..n {
                values.set_column(t, &x);
                x = &m * &x;
            }
        }
        SyntheticKind::RegimeShift {
            shift_time,
            before,
            after,
        } => {
            for t in 0..n {
                let mix = if t < *shift_time { before } else { after };
                for j in 0..p {
                    values[(j, t)] = mix.value(j, t as f64);
                }
            }
        }
    }
    if spec.noise_std > 0.0 {
        let mut rng = SeededStream::new(spec.seed, streams::SYNTHETIC_NOISE);
        for t in 0..n {
            for j in 0..p {
                values[(j, t)] += spec.noise_std * rng.standard_normal();
            }
        }
    }
    RawSeries::from_matrix(values)
}

/// Convenience builders for the streams used throughout tests and the CLI.
pub mod presets {
    use super::*;
    use alloc::vec;

    /// Single-feature sum of unit sines with the given periods.
    pub fn tones(periods: &[f64], len: usize) -> SyntheticSpec {
        SyntheticSpec {
            kind: SyntheticKind::SinusoidMix(SinusoidMix {
                tones: vec![periods.iter().map(|&per| Tone::new(1.0, 1.0 / per, 0.0)).collect()],
                offsets: vec![0.0],
            }),
            len,
            noise_std: 0.0,
            seed: 0,
        }
    }

    /// Planar rotation by `angle` per step starting from `[1, 0]`.
    pub fn rotation(angle: f64, len: usize) -> SyntheticSpec {
        let (s, c) = (libm::sin(angle), libm::cos(angle));
        SyntheticSpec {
            kind: SyntheticKind::LinearSystem {
                matrix: vec![vec![c, -s], vec![s, c]],
                initial: vec![1.0, 0.0],
            },
            len,
            noise_std: 0.0,
            seed: 0,
        }
    }

    /// Single-feature sinusoid whose mean jumps by `jump` at `shift_time`.
    pub fn mean_shift(period: f64, jump: f64, shift_time: usize, len: usize) -> SyntheticSpec {
        let tone = vec![vec![Tone::new(1.0, 1.0 / period, 0.0)]];
        SyntheticSpec {
            kind: SyntheticKind::RegimeShift {
                shift_time,
                before: SinusoidMix {
                    tones: tone.clone(),
                    offsets: vec![0.0],
                },
                after: SinusoidMix {
                    tones: tone,
                    offsets: vec![jump],
                },
            },
            len,
            noise_std: 0.0,
            seed: 0,
        }
    }
}
