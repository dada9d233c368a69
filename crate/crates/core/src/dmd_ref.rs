//! Exact batch DMD on a pair of snapshot matrices.
//!
//! Used as a linear baseline and as the reference the kernel forecaster is
//! checked against when run directly in feature space.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{ensure_dim, Error, Result};
use crate::forecast::{POD_RANK_CUTOFF, PINV_CUTOFF};
use crate::linalg::{self, mul_real_complex, numerical_rank, pinv_solve_complex, CMatrix, CVector};

#[derive(Debug, Clone)]
pub struct DmdFit {
    /// `n × r` modes `Q_r W`.
    pub modes: CMatrix,
    /// Descending modulus.
    pub eigenvalues: Vec<Complex64>,
    /// Amplitudes fitted to the last column of `Y`.
    pub amplitudes: CVector,
    pub rank: usize,
}

/// Rank-`r` DMD of `Y ≈ A X`. The retained rank is also capped by the numerical rank of `X`.
pub fn dmd_fit(x: &DMatrix<f64>, y: &DMatrix<f64>, r: usize) -> Result<DmdFit> {
    ensure_dim("DMD snapshot columns", x.ncols(), y.ncols())?;
    ensure_dim("DMD snapshot rows", x.nrows(), y.nrows())?;
    if x.ncols() == 0 {
        return Err(Error::InvalidParameter("DMD needs m >= 1".into()));
    }
    if r == 0 {
        return Err(Error::InvalidParameter("requested rank must be >= 1".into()));
    }
    let svd = linalg::thin_svd(x)?;
    let rank = r.min(numerical_rank(&svd.singular_values, POD_RANK_CUTOFF));
    if rank == 0 {
        return Err(Error::RankCollapse("DMD snapshot matrix"));
    }
    let u = svd.u.columns(0, rank).into_owned();
    let v = svd.v_t.rows(0, rank).transpose();
    let mut yv = y * v;
    for (i, mut col) in yv.column_iter_mut().enumerate() {
        col /= svd.singular_values[i];
    }
    let reduced = u.transpose() * yv;
    let e = linalg::eig(&reduced)?;
    let modes = mul_real_complex(&u, &e.vectors);
    let last = y.column(y.ncols() - 1).map(|v| Complex64::new(v, 0.0));
    let amplitudes = pinv_solve_complex(&modes, &last, PINV_CUTOFF)?;
    Ok(DmdFit {
        modes,
        eigenvalues: e.values,
        amplitudes,
        rank,
    })
}

/// `Φ Λᵏ b₀`; `k = 0` reconstructs the last column of `Y`.
pub fn dmd_forecast(fit: &DmdFit, k: u32) -> CVector {
    let scaled = CVector::from_fn(fit.rank, |i, _| fit.eigenvalues[i].powu(k) * fit.amplitudes[i]);
    &fit.modes * scaled
}
