//! Multi-step forecasting from the current operator.
//!
//! Per request: POD basis `Q_r` of `Ψ_X`, reduced operator
//! `K = Q_rᵀ A Q_r`, its eigenpairs `K W = W Λ`, amplitudes
//! `W b₀ = Q_rᵀ ψ_latest`, Vandermonde propagation
//! `Ψ_pred = Q_r W (b₀ ⊙ E)`, then decoding through `D = X Ψ_X⁺` and selection
//! of each feature's newest-lag row.
//!
//! Column `h` of `E` holds `λ^(first_exponent + h)`. Exponent 0 reconstructs
//! the projected current lift, so horizon `h ≥ 1` uses exponent `h`; the
//! evaluation default is therefore `first_exponent = 1`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::embed::newest_lag_rows;
use crate::error::{ensure_dim, Error, Result};
use crate::linalg::{self, condition_number_1norm, mul_real_complex, numerical_rank, CMatrix, CVector, ThinSvd};
use crate::operator::KdmdState;

/// Singular values at or below `σ₁ · POD_RANK_CUTOFF` are not retained in the POD basis.
pub const POD_RANK_CUTOFF: f64 = 1e-10;
/// Pseudo-inverse cutoff relative to `σ₁`.
pub const PINV_CUTOFF: f64 = 1e-12;
/// Eigenvector matrices with condition estimate above this cannot be solved against.
pub const EIGENVECTOR_CONDITION_LIMIT: f64 = 1e14;
/// Imaginary residue above this fraction of the forecast scale raises a warning.
pub const IMAG_WARN_RATIO: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    /// `s × r`, orthonormal columns.
    pub q: DMatrix<f64>,
    /// Retained singular values, descending.
    pub singular_values: DVector<f64>,
    pub r: usize,
}

pub fn pod_basis(psi_x: &DMatrix<f64>, r_requested: usize) -> Result<PodBasis> {
    if psi_x.ncols() == 0 {
        return Err(Error::InvalidParameter("POD basis needs m >= 1".into()));
    }
    let svd = linalg::thin_svd(psi_x)?;
    pod_basis_from_svd(&svd, r_requested)
}

/// Builds the basis from a precomputed SVD of `Ψ_X`.
pub fn pod_basis_from_svd(
    svd: &ThinSvd<f64>,
    r_requested: usize,
) -> Result<PodBasis> {
    if r_requested == 0 {
        return Err(Error::InvalidParameter("requested rank must be >= 1".into()));
    }
    let sigma = &svd.singular_values;
    if sigma.iter().all(|&s| s == 0.0) {
        return Err(Error::ZeroMatrix("POD basis"));
    }
    let r = r_requested.min(numerical_rank(sigma, POD_RANK_CUTOFF));
    Ok(PodBasis {
        q: svd.u.columns(0, r).into_owned(),
        singular_values: sigma.rows(0, r).into_owned(),
        r,
    })
}

/// `K = Q_rᵀ A Q_r`.
pub fn reduce(a: &DMatrix<f64>, basis: &PodBasis) -> Result<DMatrix<f64>> {
    ensure_dim("reduce A rows", basis.q.nrows(), a.nrows())?;
    ensure_dim("reduce A columns", basis.q.nrows(), a.ncols())?;
    Ok(basis.q.transpose() * (a * &basis.q))
}

#[derive(Debug, Clone)]
pub struct ReducedEig {
    /// `W_r`, unit-norm columns.
    pub vectors: CMatrix,
    /// `Λ_r`, descending modulus.
    pub values: Vec<Complex64>,
    /// `σ_max / σ_min` of `W_r`.
    pub condition_estimate: f64,
}

impl ReducedEig {
    pub fn spectral_radius(&self) -> f64 {
        self.values.first().map_or(0.0, |z| z.norm())
    }
}

pub fn eig_reduced(k: &DMatrix<f64>) -> Result<ReducedEig> {
    let e = linalg::eig(k)?;
    let condition_estimate = condition_number_1norm(&e.vectors);
    Ok(ReducedEig {
        vectors: e.vectors,
        values: e.values,
        condition_estimate,
    })
}

/// Solves `W_r b₀ = Q_rᵀ ψ_latest`.
pub fn amplitudes(eig: &ReducedEig, basis: &PodBasis, psi_latest: &DVector<f64>) -> Result<CVector> {
    ensure_dim("amplitudes ψ", basis.q.nrows(), psi_latest.len())?;
    ensure_dim("amplitudes W", basis.r, eig.vectors.nrows())?;
    if !(eig.condition_estimate <= EIGENVECTOR_CONDITION_LIMIT) {
        return Err(Error::SingularEigenvectors {
            condition: eig.condition_estimate,
        });
    }
    let rhs = (basis.q.transpose() * psi_latest).map(|x| Complex64::new(x, 0.0));
    eig.vectors
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularEigenvectors {
            condition: eig.condition_estimate,
        })
}

/// `E[i, h] = λ_i^h` for `h = 0..horizon`.
pub fn vandermonde(values: &[Complex64], horizon: usize) -> CMatrix {
    vandermonde_from(values, 0, horizon)
}

/// `E[i, h] = λ_i^(first_exponent + h)`, built by the recurrence `E[i,h+1] = λ_i E[i,h]`.
pub fn vandermonde_from(values: &[Complex64], first_exponent: u32, horizon: usize) -> CMatrix {
    let mut e = CMatrix::zeros(values.len(), horizon);
    for (i, &lambda) in values.iter().enumerate() {
        let mut power = Complex64::new(1.0, 0.0);
        for _ in 0..first_exponent {
            power *= lambda;
        }
        for h in 0..horizon {
            e[(i, h)] = power;
            power *= lambda;
        }
    }
    e
}

#[derive(Debug, Clone)]
pub struct FeatureForecast {
    /// `s × H`
    pub psi_pred: CMatrix,
    pub b0: CVector,
    /// `r × H`
    pub e: CMatrix,
}

impl FeatureForecast {
    pub fn horizon(&self) -> usize {
        self.e.ncols()
    }
}

/// `Ψ_pred = Q_r W_r (b₀ ⊙ E)`, with `b₀` broadcast across the columns of `E`.
pub fn predict_features(
    basis: &PodBasis,
    eig: &ReducedEig,
    b0: &CVector,
    e: &CMatrix,
) -> Result<FeatureForecast> {
    ensure_dim("predict b₀", basis.r, b0.len())?;
    ensure_dim("predict E rows", basis.r, e.nrows())?;
    let mut modal = e.clone();
    for (i, mut row) in modal.row_iter_mut().enumerate() {
        row *= b0[i];
    }
    let reduced = &eig.vectors * modal;
    Ok(FeatureForecast {
        psi_pred: mul_real_complex(&basis.q, &reduced),
        b0: b0.clone(),
        e: e.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    /// `(p·d) × s`
    pub d: DMatrix<f64>,
    /// `‖X − D Ψ_X‖_F`
    pub fit_residual: f64,
}

/// `D = X Ψ_X⁺` with singular values below `σ₁ · PINV_CUTOFF` dropped.
pub fn fit_decoder(physical_x: &DMatrix<f64>, psi_x: &DMatrix<f64>) -> Result<Decoder> {
    ensure_dim("decoder columns", psi_x.ncols(), physical_x.ncols())?;
    let svd = linalg::thin_svd(psi_x)?;
    decoder_from_svd(physical_x, psi_x, &svd)
}

/// Fits the decoder reusing an SVD of `Ψ_X`.
pub fn decoder_from_svd(
    physical_x: &DMatrix<f64>,
    psi_x: &DMatrix<f64>,
    svd: &ThinSvd<f64>,
) -> Result<Decoder> {
    ensure_dim("decoder columns", psi_x.ncols(), physical_x.ncols())?;
    let sigma = &svd.singular_values;
    let s1 = sigma.iter().copied().fold(0.0, f64::max);
    if s1 == 0.0 {
        return Err(Error::ZeroMatrix("decoder fit"));
    }
    let (u, vt) = (&svd.u, &svd.v_t);
    let keep = sigma.iter().filter(|&&s| s > s1 * PINV_CUTOFF).count();
    // D = X V_k Σ_k⁻¹ U_kᵀ
    let mut xv = physical_x * vt.rows(0, keep).transpose();
    for (i, mut col) in xv.column_iter_mut().enumerate() {
        col /= sigma[i];
    }
    let d = xv * u.columns(0, keep).transpose();
    let fit_residual = (physical_x - &d * psi_x).norm();
    Ok(Decoder { d, fit_residual })
}

/// `X̂_pred = D Ψ_pred`.
pub fn decode(decoder: &Decoder, ff: &FeatureForecast) -> Result<CMatrix> {
    ensure_dim("decode", decoder.d.ncols(), ff.psi_pred.nrows())?;
    Ok(mul_real_complex(&decoder.d, &ff.psi_pred))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalForecast {
    /// `p × H`; column `h` is the forecast for step `t + h + 1` (with the default exponent offset).
    pub values: DMatrix<f64>,
    /// Largest `|Im|` discarded when realizing the selected rows.
    pub max_imag_residue: f64,
    /// `max_imag_residue` exceeded the tolerance passed to [`extract_physical`].
    pub imag_warning: bool,
}

/// Real parts of the newest-lag rows `j·d + d − 1` of each feature block.
pub fn extract_physical(
    x_hat_pred: &CMatrix,
    p: usize,
    d: usize,
    imag_tolerance: f64,
) -> Result<PhysicalForecast> {
    ensure_dim("extract rows", p * d, x_hat_pred.nrows())?;
    let h = x_hat_pred.ncols();
    let mut values = DMatrix::zeros(p, h);
    let mut max_imag: f64 = 0.0;
    for (j, row) in newest_lag_rows(p, d).enumerate() {
        for c in 0..h {
            let z = x_hat_pred[(row, c)];
            values[(j, c)] = z.re;
            max_imag = max_imag.max(z.im.abs());
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("physical forecast"));
    }
    Ok(PhysicalForecast {
        values,
        max_imag_residue: max_imag,
        imag_warning: max_imag > imag_tolerance,
    })
}

/// Per-forecast spectral summary.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenTelemetry {
    pub step: u64,
    /// `|λ_i|`, descending.
    pub moduli: Vec<f64>,
    pub spectral_radius: f64,
    pub condition_estimate: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastOptions {
    pub rank: usize,
    pub horizon: usize,
    /// Hankel depth `d`, needed to locate each feature's newest-lag row.
    pub depth: usize,
    pub first_exponent: u32,
    /// Relative to `max(1, max |forecast|)`.
    pub imag_warn_ratio: f64,
}

impl ForecastOptions {
    pub fn new(rank: usize, horizon: usize, depth: usize) -> Self {
        Self {
            rank,
            horizon,
            depth,
            first_exponent: 1,
            imag_warn_ratio: IMAG_WARN_RATIO,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Forecast {
    pub physical: PhysicalForecast,
    pub features: FeatureForecast,
    pub eig: ReducedEig,
    pub telemetry: EigenTelemetry,
}

/// Full forecast from the state, recomputing the POD basis.
pub fn forecast_h(state: &KdmdState, decoder: &Decoder, opts: &ForecastOptions) -> Result<Forecast> {
    let basis = pod_basis(&state.psi_x(), opts.rank)?;
    forecast_with_basis(state, &basis, decoder, opts)
}

/// Forecast with a caller-managed (possibly stale) POD basis.
pub fn forecast_with_basis(
    state: &KdmdState,
    basis: &PodBasis,
    decoder: &Decoder,
    opts: &ForecastOptions,
) -> Result<Forecast> {
    if opts.horizon == 0 {
        return Err(Error::InvalidParameter("forecast horizon must be >= 1".into()));
    }
    let pd = state.physical_window().nrows();
    if opts.depth == 0 || pd % opts.depth != 0 {
        return Err(Error::InvalidParameter(alloc::format!(
            "depth {} does not divide Hankel height {pd}",
            opts.depth
        )));
    }
    let k = reduce(state.a(), basis)?;
    let eig = eig_reduced(&k)?;
    let b0 = amplitudes(&eig, basis, &state.latest_lifted())?;
    let e = vandermonde_from(&eig.values, opts.first_exponent, opts.horizon);
    let features = predict_features(basis, &eig, &b0, &e)?;
    let x_hat = decode(decoder, &features)?;
    let scale = x_hat.iter().map(|z| z.re.abs()).fold(1.0, f64::max);
    let physical = extract_physical(&x_hat, pd / opts.depth, opts.depth, opts.imag_warn_ratio * scale)?;
    let telemetry = EigenTelemetry {
        step: state.step_count(),
        moduli: eig.values.iter().map(|z| z.norm()).collect(),
        spectral_radius: eig.spectral_radius(),
        condition_estimate: eig.condition_estimate,
        rank: basis.r,
    };
    Ok(Forecast {
        physical,
        features,
        eig,
        telemetry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmd_ref::{dmd_fit, dmd_forecast};
    use crate::embed::{hankel_block, new_hankel_column, snapshot_pair, window_at};
    use crate::linalg::to_complex;
    use crate::operator::{init_batch, init_from_snapshots, OperatorConfig};
    use crate::rff::RffMap;
    use crate::rng::SeededStream;
    use crate::series::{gen_synthetic, presets, RawSeries};
    use alloc::vec;
    use core::f64::consts::PI;
    use proptest::prelude::*;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = SeededStream::new(seed, 6);
        DMatrix::from_fn(rows, cols, |_, _| rng.standard_normal())
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pod_identity_and_rank_truncation() {
        let b = pod_basis(&DMatrix::identity(3, 3), 3).unwrap();
        assert!((b.q.transpose() * &b.q - DMatrix::<f64>::identity(3, 3)).norm() < 1e-12);
        let u = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let v = DVector::from_vec(vec![1.0, -1.0, 0.5]);
        let b = pod_basis(&(u * v.transpose()), 5).unwrap();
        assert_eq!(b.r, 1);
        assert!(pod_basis(&DMatrix::zeros(4, 3), 2).is_err());
    }

    #[test]
    fn pod_spans_column_space() {
        let psi = random(8, 5, 1);
        let b = pod_basis(&psi, 5).unwrap();
        assert_eq!(b.r, 5);
        let proj = &b.q * b.q.transpose() * &psi;
        assert!((proj - &psi).norm() < 1e-10 * psi.norm());
        for w in b.singular_values.as_slice().windows(2) {
            assert!(w[0] >= w[1] && w[1] > 0.0);
        }
    }

    #[test]
    fn reduce_examples() {
        let b = pod_basis(&random(6, 3, 2), 3).unwrap();
        let k = reduce(&DMatrix::identity(6, 6), &b).unwrap();
        assert!((k - DMatrix::<f64>::identity(3, 3)).norm() < 1e-12);
        let k = reduce(&(DMatrix::identity(6, 6) * 2.5), &b).unwrap();
        assert!((k - DMatrix::<f64>::identity(3, 3) * 2.5).norm() < 1e-12);
        let a = random(6, 6, 3);
        let k = reduce(&a, &b).unwrap();
        let mut direct = DMatrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for r in 0..6 {
                    for s in 0..6 {
                        acc += b.q[(r, i)] * a[(r, s)] * b.q[(s, j)];
                    }
                }
                direct[(i, j)] = acc;
            }
        }
        assert!((k - direct).norm() < 1e-12);
    }

    #[test]
    fn eig_reduced_examples() {
        let e = eig_reduced(&DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5]))).unwrap();
        assert!((e.values[0] - c(2.0, 0.0)).norm() < 1e-14);
        assert!((e.values[1] - c(0.5, 0.0)).norm() < 1e-14);
        assert!((e.condition_estimate - 1.0).abs() < 1e-12);
        let phi = PI / 5.0;
        let rot = DMatrix::from_row_slice(2, 2, &[phi.cos(), -phi.sin(), phi.sin(), phi.cos()]);
        let e = eig_reduced(&rot).unwrap();
        assert!((e.values[0] - Complex64::from_polar(1.0, phi)).norm() < 1e-12);
        assert!((e.values[1] - Complex64::from_polar(1.0, -phi)).norm() < 1e-12);
    }

    #[test]
    fn amplitude_examples() {
        let basis = PodBasis {
            q: DMatrix::identity(3, 3),
            singular_values: DVector::from_element(3, 1.0),
            r: 3,
        };
        let eig = eig_reduced(&DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]))).unwrap();
        let psi = DVector::from_vec(vec![0.3, -0.2, 0.9]);
        let b0 = amplitudes(&eig, &basis, &psi).unwrap();
        for i in 0..3 {
            assert!((b0[i] - c(psi[i], 0.0)).norm() < 1e-14);
        }
        // residual check on a random nonsymmetric case
        let basis = pod_basis(&random(7, 4, 4), 4).unwrap();
        let eig = eig_reduced(&random(4, 4, 5)).unwrap();
        let psi = DVector::from_fn(7, |i, _| (i as f64).sin());
        let b0 = amplitudes(&eig, &basis, &psi).unwrap();
        let rhs = (basis.q.transpose() * &psi).map(|v| c(v, 0.0));
        assert!((&eig.vectors * &b0 - rhs).norm() < 1e-10);
        // ψ orthogonal to the basis
        let basis = PodBasis {
            q: DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]),
            singular_values: DVector::from_element(1, 1.0),
            r: 1,
        };
        let eig = eig_reduced(&DMatrix::from_element(1, 1, 0.9)).unwrap();
        let b0 = amplitudes(&eig, &basis, &DVector::from_vec(vec![0.0, 1.0, -2.0])).unwrap();
        assert_eq!(b0[0], c(0.0, 0.0));
    }

    #[test]
    fn singular_eigenvectors_rejected() {
        let basis = PodBasis {
            q: DMatrix::identity(2, 2),
            singular_values: DVector::from_element(2, 1.0),
            r: 2,
        };
        let eig = ReducedEig {
            vectors: CMatrix::from_element(2, 2, c(1.0, 0.0)),
            values: vec![c(1.0, 0.0), c(1.0, 0.0)],
            condition_estimate: f64::INFINITY,
        };
        assert!(matches!(
            amplitudes(&eig, &basis, &DVector::zeros(2)),
            Err(Error::SingularEigenvectors { .. })
        ));
    }

    #[test]
    fn vandermonde_examples() {
        let e = vandermonde(&[c(2.0, 0.0), c(0.5, 0.0)], 3);
        let expect = [[1.0, 2.0, 4.0], [1.0, 0.5, 0.25]];
        for i in 0..2 {
            for h in 0..3 {
                assert_eq!(e[(i, h)], c(expect[i][h], 0.0));
            }
        }
        let e = vandermonde(&[Complex64::from_polar(1.0, PI / 2.0)], 4);
        let expect = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        for h in 0..4 {
            assert!((e[(0, h)] - expect[h]).norm() < 1e-15);
        }
        let e = vandermonde_from(&[c(2.0, 0.0)], 1, 2);
        assert_eq!(e[(0, 0)], c(2.0, 0.0));
        assert_eq!(e[(0, 1)], c(4.0, 0.0));
    }

    #[test]
    fn predict_feature_examples() {
        let basis = PodBasis {
            q: DMatrix::identity(2, 2),
            singular_values: DVector::from_element(2, 1.0),
            r: 2,
        };
        let eig = eig_reduced(&DMatrix::from_diagonal(&DVector::from_vec(vec![0.9, -0.5]))).unwrap();
        let b0 = CVector::from_vec(vec![c(1.5, 0.0), c(-2.0, 0.0)]);
        let e = vandermonde(&eig.values, 4);
        let ff = predict_features(&basis, &eig, &b0, &e).unwrap();
        for h in 0..4 {
            // eigenvectors of a diagonal matrix are ±e_i
            let s0 = eig.vectors[(0, 0)];
            let s1 = eig.vectors[(1, 1)];
            assert!((ff.psi_pred[(0, h)] - s0 * b0[0] * c(0.9f64.powi(h as i32), 0.0)).norm() < 1e-14);
            assert!((ff.psi_pred[(1, h)] - s1 * b0[1] * c((-0.5f64).powi(h as i32), 0.0)).norm() < 1e-14);
        }
        let zero = predict_features(&basis, &eig, &CVector::zeros(2), &e).unwrap();
        assert_eq!(zero.psi_pred.norm(), 0.0);
    }

    #[test]
    fn first_column_projects_latest_lift() {
        let psi_x = random(6, 4, 10);
        let a = random(6, 6, 11) * 0.3;
        let basis = pod_basis(&psi_x, 4).unwrap();
        let eig = eig_reduced(&reduce(&a, &basis).unwrap()).unwrap();
        let latest = DVector::from_fn(6, |i, _| 0.1 * i as f64 - 0.2);
        let b0 = amplitudes(&eig, &basis, &latest).unwrap();
        let ff = predict_features(&basis, &eig, &b0, &vandermonde(&eig.values, 1)).unwrap();
        let proj = &basis.q * (basis.q.transpose() * &latest);
        for i in 0..6 {
            assert!((ff.psi_pred[(i, 0)] - c(proj[i], 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn decoder_examples() {
        let x = random(3, 4, 12);
        let dec = fit_decoder(&x, &DMatrix::identity(4, 4)).unwrap();
        assert!((&dec.d - &x).norm() < 1e-12);
        assert!(dec.fit_residual < 1e-12);

        // X = M Ψ with Ψ full row rank recovers M
        let psi = random(4, 9, 13);
        let m = random(3, 4, 14);
        let dec = fit_decoder(&(&m * &psi), &psi).unwrap();
        assert!((&dec.d - &m).norm() < 1e-10);
        assert!(dec.fit_residual < 1e-10);

        // normal equations on generic data
        let x = random(5, 9, 15);
        let dec = fit_decoder(&x, &psi).unwrap();
        let normal = (&x - &dec.d * &psi) * psi.transpose();
        assert!(normal.norm() < 1e-6 * x.norm() * psi.norm());

        assert!(fit_decoder(&x, &DMatrix::zeros(4, 9)).is_err());
        assert!(fit_decoder(&x, &DMatrix::zeros(4, 8)).is_err());
    }

    #[test]
    fn decoder_recovers_minimal_norm_map() {
        // rank-deficient Ψ: the recovered map annihilates the null space of Ψᵀ
        let basis = random(5, 2, 16);
        let psi = &basis * random(2, 7, 17);
        let m = random(3, 5, 18);
        let dec = fit_decoder(&(&m * &psi), &psi).unwrap();
        assert!(dec.fit_residual < 1e-9);
        let q = pod_basis(&psi, 5).unwrap().q;
        let min_norm = &m * &q * q.transpose();
        assert!((&dec.d - min_norm).norm() < 1e-9);
    }

    #[test]
    fn decode_examples() {
        let dec = Decoder {
            d: random(4, 3, 19),
            fit_residual: 0.0,
        };
        let ff = FeatureForecast {
            psi_pred: CMatrix::zeros(3, 2),
            b0: CVector::zeros(1),
            e: CMatrix::zeros(1, 2),
        };
        assert_eq!(decode(&dec, &ff).unwrap().norm(), 0.0);
        let psi = CMatrix::from_fn(3, 2, |i, j| c(i as f64, j as f64));
        let ident = Decoder {
            d: DMatrix::identity(3, 3),
            fit_residual: 0.0,
        };
        let ff = FeatureForecast {
            psi_pred: psi.clone(),
            ..ff
        };
        assert_eq!(decode(&ident, &ff).unwrap(), psi);
        let scaled = FeatureForecast {
            psi_pred: &psi * c(2.5, 0.0),
            ..ff.clone()
        };
        let lhs = decode(&dec, &scaled).unwrap();
        let rhs = decode(&dec, &ff).unwrap() * c(2.5, 0.0);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn extract_examples() {
        let x = CMatrix::from_fn(6, 2, |i, j| c((10 * i + j) as f64, 0.0));
        let pf = extract_physical(&x, 2, 3, 1e-9).unwrap();
        assert_eq!(pf.values[(0, 0)], 20.0);
        assert_eq!(pf.values[(1, 1)], 51.0);
        assert_eq!(pf.max_imag_residue, 0.0);
        assert!(!pf.imag_warning);
        let mut xi = x.clone();
        xi[(5, 0)] = c(1.0, 0.5);
        let pf = extract_physical(&xi, 2, 3, 1e-3).unwrap();
        assert_eq!(pf.max_imag_residue, 0.5);
        assert!(pf.imag_warning);
        assert!(extract_physical(&x, 2, 2, 1.0).is_err());
    }

    fn sinusoid_state(s: usize, w: usize, d: usize, gamma: f64) -> (KdmdState, RffMap, RawSeries) {
        let series = gen_synthetic(&presets::tones(&[24.0], 400)).unwrap();
        let map = RffMap::sample(d, s, gamma, 7).unwrap();
        let h = hankel_block(&window_at(&series, w, w).unwrap(), d).unwrap();
        let st = init_from_snapshots(&snapshot_pair(&h).unwrap(), &map, OperatorConfig::default()).unwrap();
        (st, map, series)
    }

    #[test]
    fn sinusoid_one_step_forecast() {
        let (w, d) = (60, 12);
        let (mut st, map, series) = sinusoid_state(64, w, d, 1e-3);
        let mut worst: f64 = 0.0;
        for t in w..(w + 40) {
            let dec = fit_decoder(&st.physical_x(), &st.psi_x()).unwrap();
            let fc = forecast_h(&st, &dec, &ForecastOptions::new(st.m(), 1, d)).unwrap();
            let truth = series.values()[(0, t)];
            worst = worst.max((fc.physical.values[(0, 0)] - truth).abs());
            st.slide(&new_hankel_column(&series, t + 1, d).unwrap(), &map).unwrap();
        }
        assert!(worst < 1e-2, "worst one-step error {worst}");
    }

    #[test]
    fn horizon_extension_keeps_earlier_columns() {
        let (st, _, _) = sinusoid_state(48, 40, 8, 1e-3);
        let dec = fit_decoder(&st.physical_x(), &st.psi_x()).unwrap();
        let one = forecast_h(&st, &dec, &ForecastOptions::new(32, 1, 8)).unwrap();
        let three = forecast_h(&st, &dec, &ForecastOptions::new(32, 3, 8)).unwrap();
        assert_eq!(one.physical.values.column(0), three.physical.values.column(0));
    }

    #[test]
    fn constant_stream_forecasts_current_value() {
        let series = RawSeries::from_rows(&[vec![0.7; 80], vec![-1.2; 80]]).unwrap();
        let (w, d) = (30, 5);
        let map = RffMap::sample(2 * d, 32, 0.01, 3).unwrap();
        let h = hankel_block(&window_at(&series, w, w).unwrap(), d).unwrap();
        let st = init_from_snapshots(&snapshot_pair(&h).unwrap(), &map, OperatorConfig::default()).unwrap();
        let dec = fit_decoder(&st.physical_x(), &st.psi_x()).unwrap();
        let fc = forecast_h(&st, &dec, &ForecastOptions::new(10, 6, d)).unwrap();
        assert_eq!(fc.telemetry.rank, 1);
        // rank-1 Gram: the ridge term scales the unit eigenvalue to 1/(1 + 1e-6)
        let lambda = 1.0 / (1.0 + OperatorConfig::default().epsilon_scale);
        for hzn in 0..6 {
            let decay = lambda.powi(hzn as i32 + 1);
            assert!((fc.physical.values[(0, hzn)] - 0.7 * decay).abs() < 1e-9);
            assert!((fc.physical.values[(1, hzn)] + 1.2 * decay).abs() < 1e-9);
            assert!((fc.physical.values[(0, hzn)] - 0.7).abs() < 1e-5);
        }
    }

    #[test]
    fn rotation_forecast_is_real() {
        let phi = PI / 8.0;
        let series = gen_synthetic(&presets::rotation(phi, 200)).unwrap();
        let (w, d) = (40, 2);
        let map = RffMap::sample(2 * d, 48, 1e-2, 5).unwrap();
        let h = hankel_block(&window_at(&series, w, w).unwrap(), d).unwrap();
        let st = init_from_snapshots(&snapshot_pair(&h).unwrap(), &map, OperatorConfig::default()).unwrap();
        let dec = fit_decoder(&st.physical_x(), &st.psi_x()).unwrap();
        let fc = forecast_h(&st, &dec, &ForecastOptions::new(st.m(), 8, d)).unwrap();
        assert!(fc.physical.max_imag_residue < 1e-8, "{}", fc.physical.max_imag_residue);
    }

    #[test]
    fn reconstruction_consistency() {
        let (st, _, _) = sinusoid_state(64, 60, 12, 1e-3);
        let dec = fit_decoder(&st.physical_x(), &st.psi_x()).unwrap();
        let basis = pod_basis(&st.psi_x(), st.m()).unwrap();
        let latest = st.latest_lifted();
        let projected = &basis.q * (basis.q.transpose() * &latest);
        let recon = &dec.d * projected;
        let truth = st.latest_physical();
        assert!((recon - &truth).norm() < 0.05 * truth.norm());
    }

    #[test]
    fn agrees_with_batch_dmd_in_feature_space() {
        // Feature-space sequence generated by known linear dynamics.
        let s = 4;
        let mut rng = SeededStream::new(21, 0);
        let q = {
            let raw = DMatrix::from_fn(s, s, |_, _| rng.standard_normal());
            raw.qr().q()
        };
        let lam = DMatrix::from_row_slice(4, 4, &[
            0.95, -0.2, 0.0, 0.0,
            0.2, 0.95, 0.0, 0.0,
            0.0, 0.0, 0.8, 0.0,
            0.0, 0.0, 0.0, 0.6,
        ]);
        let m_dyn = &q * lam * q.transpose();
        let mut seq = DMatrix::zeros(s, 12);
        let mut v = DVector::from_vec(vec![1.0, 0.5, -0.7, 0.3]);
        for t in 0..12 {
            seq.set_column(t, &v);
            v = &m_dyn * v;
        }
        let m = 10;
        let psi_x = seq.columns(0, m).into_owned();
        let psi_y = seq.columns(1, m).into_owned();
        let latest = seq.column(m).into_owned();
        let physical = crate::embed::SnapshotPair {
            x: psi_x.clone(),
            y: psi_y.clone(),
            latest_column: latest.clone(),
        };
        let cfg = OperatorConfig {
            epsilon_scale: 1e-14,
            refresh_period: 0,
        };
        let st = init_batch(&psi_x, &psi_y, &physical, &latest, cfg).unwrap();
        let basis = pod_basis(&st.psi_x(), s).unwrap();
        let eig = eig_reduced(&reduce(st.a(), &basis).unwrap()).unwrap();
        let b0 = amplitudes(&eig, &basis, &st.latest_lifted()).unwrap();
        let ff = predict_features(&basis, &eig, &b0, &vandermonde_from(&eig.values, 1, 5)).unwrap();

        let fit = dmd_fit(&psi_x, &psi_y, s).unwrap();
        for h in 0..5 {
            let reference = dmd_forecast(&fit, (h + 1) as u32);
            let diff = (ff.psi_pred.column(h) - &reference).norm();
            assert!(diff < 1e-6, "horizon {} differs by {diff}", h + 1);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn pod_orthonormal(rows in 2usize..12, cols in 1usize..10, seed in 0u64..1000, r in 1usize..12) {
            let psi = random(rows, cols, seed);
            let b = pod_basis(&psi, r).unwrap();
            prop_assert!(b.r <= r.min(rows).min(cols));
            let gram = b.q.transpose() * &b.q;
            prop_assert!((gram - DMatrix::<f64>::identity(b.r, b.r)).amax() < 1e-10);
        }

        #[test]
        fn eigen_residual_bound(n in 1usize..24, seed in 0u64..1000) {
            let k = random(n, n, seed);
            let e = eig_reduced(&k).unwrap();
            let lam = CMatrix::from_diagonal(&CVector::from_vec(e.values.clone()));
            let kc = to_complex(&k);
            let res = (&kc * &e.vectors - &e.vectors * lam).norm();
            prop_assert!(res <= 1e-8 * k.norm() * n as f64);
        }

        #[test]
        fn vandermonde_recurrence(re in -1.5..1.5f64, im in -1.5..1.5f64, h in 1usize..30) {
            let lam = c(re, im);
            let e = vandermonde(&[lam], h + 1);
            for k in 0..h {
                prop_assert_eq!(e[(0, k + 1)], e[(0, k)] * lam);
            }
            prop_assert_eq!(e[(0, 0)], c(1.0, 0.0));
        }
    }
}
