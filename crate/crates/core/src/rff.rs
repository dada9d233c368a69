//! Random Fourier feature lifting for the Gaussian kernel
//! `k(x, y) = exp(-γ ‖x - y‖²)`.
//!
//! A map of dimension `s` is `ψ(x)_i = sqrt(2/s) cos(θ_i + z_iᵀx)` with
//! `θ_i ~ U[0, 2π)` and `z_i ~ N(0, σ² I)`. With the default
//! [`FrequencyScale::TwoGamma`] (`σ² = 2γ`), `E[ψ(x)ᵀψ(y)] = k(x, y)`.
//!
//! Sampling is fully determined by `(input_dim, s, gamma, scale, seed)`:
//! frequencies are drawn row by row (`z_1` first, components in order) from
//! ChaCha stream [`streams::RFF_FREQUENCIES`], phases in order from stream
//! [`streams::RFF_PHASES`]. See [`crate::rng`] for the bit-level transforms.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_dim, Error, Result};
use crate::rng::{streams, SeededStream};

/// Variance convention for the frequency vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrequencyScale {
    /// `z ~ N(0, 2γ I)`; unbiased for `exp(-γ‖x-y‖²)`.
    #[default]
    TwoGamma,
    /// `z ~ N(0, γ I)`; unbiased for `exp(-γ‖x-y‖²/2)`.
    Gamma,
}

impl FrequencyScale {
    pub fn variance(self, gamma: f64) -> f64 {
        match self {
            FrequencyScale::TwoGamma => 2.0 * gamma,
            FrequencyScale::Gamma => gamma,
        }
    }
}

/// A frozen random feature map. Never resample mid-stream.
#[derive(Debug, Clone, PartialEq)]
pub struct RffMap {
    frequencies: DMatrix<f64>,
    phases: DVector<f64>,
    gamma: f64,
    seed: u64,
    scale: FrequencyScale,
}

impl RffMap {
    /// Samples a map with the default `2γ` frequency variance.
    pub fn sample(input_dim: usize, s: usize, gamma: f64, seed: u64) -> Result<Self> {
        Self::sample_with_scale(input_dim, s, gamma, seed, FrequencyScale::TwoGamma)
    }

    pub fn sample_with_scale(
        input_dim: usize,
        s: usize,
        gamma: f64,
        seed: u64,
        scale: FrequencyScale,
    ) -> Result<Self> {
        if s < 1 {
            return Err(Error::InvalidParameter("RFF dimension s must be >= 1".into()));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel bandwidth gamma must be > 0, got {gamma}"
            )));
        }
        if input_dim < 1 {
            return Err(Error::InvalidParameter("RFF input dimension must be >= 1".into()));
        }
        let sd = libm::sqrt(scale.variance(gamma));
        let mut freq_rng = SeededStream::new(seed, streams::RFF_FREQUENCIES);
        let mut z = Vec::with_capacity(s * input_dim);
        for _ in 0..s * input_dim {
            z.push(sd * freq_rng.standard_normal());
        }
        let frequencies = DMatrix::from_row_slice(s, input_dim, &z);
        let mut phase_rng = SeededStream::new(seed, streams::RFF_PHASES);
        let phases = DVector::from_fn(s, |_, _| phase_rng.phase());
        Ok(Self {
            frequencies,
            phases,
            gamma,
            seed,
            scale,
        })
    }

    /// Builds a map from explicit parameters (tests, checkpoints).
    pub fn from_parts(
        frequencies: DMatrix<f64>,
        phases: DVector<f64>,
        gamma: f64,
        seed: u64,
        scale: FrequencyScale,
    ) -> Result<Self> {
        ensure_dim("RFF phases", frequencies.nrows(), phases.len())?;
        if frequencies.nrows() == 0 || frequencies.ncols() == 0 {
            return Err(Error::InvalidParameter("empty RFF map".into()));
        }
        Ok(Self {
            frequencies,
            phases,
            gamma,
            seed,
            scale,
        })
    }

    pub fn frequencies(&self) -> &DMatrix<f64> {
        &self.frequencies
    }

    pub fn phases(&self) -> &DVector<f64> {
        &self.phases
    }

    /// Feature dimension `s`.
    pub fn dim(&self) -> usize {
        self.frequencies.nrows()
    }

    /// Input dimension `p·d`.
    pub fn input_dim(&self) -> usize {
        self.frequencies.ncols()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scale(&self) -> FrequencyScale {
        self.scale
    }

    fn amplitude(&self) -> f64 {
        libm::sqrt(2.0 / self.dim() as f64)
    }

    pub fn lift(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim("RFF lift input", self.input_dim(), x.len())?;
        let amp = self.amplitude();
        let mut out = &self.frequencies * x;
        out.iter_mut()
            .zip(self.phases.iter())
            .for_each(|(v, th)| *v = amp * libm::cos(th + *v));
        Ok(out)
    }

    /// Applies [`RffMap::lift`] to every column.
    pub fn lift_matrix(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        ensure_dim("RFF lift rows", self.input_dim(), m.nrows())?;
        let amp = self.amplitude();
        let mut out = &self.frequencies * m;
        for mut col in out.column_iter_mut() {
            col.iter_mut()
                .zip(self.phases.iter())
                .for_each(|(v, th)| *v = amp * libm::cos(th + *v));
        }
        Ok(out)
    }
}

/// `exp(-γ ‖x - y‖²)`.
pub fn kernel_exact(x: &DVector<f64>, y: &DVector<f64>, gamma: f64) -> Result<f64> {
    ensure_dim("kernel arguments", x.len(), y.len())?;
    Ok(libm::exp(-gamma * (x - y).norm_squared()))
}
