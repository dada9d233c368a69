//! Dense linear-algebra helpers on top of nalgebra.

use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::{Cholesky, ComplexField, DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Power-iteration budget for [`gram_spectral_norm`].
pub const POWER_ITERATIONS: usize = 50;
/// Relative change in the Rayleigh quotient at which power iteration stops.
pub const POWER_TOLERANCE: f64 = 1e-6;

/// `‖Ψ Ψᵀ‖₂` by power iteration on `Ψ Ψᵀ`, applied as `Ψ (Ψᵀ v)`.
///
/// Starts from the normalized column sum (falling back to `e₁`), runs at most
/// [`POWER_ITERATIONS`] steps and stops once successive Rayleigh quotients
/// differ by at most [`POWER_TOLERANCE`] relative.
pub fn gram_spectral_norm(psi: &DMatrix<f64>) -> Result<f64> {
    if psi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spectral norm input"));
    }
    let s = psi.nrows();
    let mut v: DVector<f64> = psi.column_sum();
    if v.norm() == 0.0 {
        v = DVector::zeros(s);
        v[0] = 1.0;
    }
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let w = psi * (psi.transpose() * &v);
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        v = w / norm;
        let done = (next - lambda).abs() <= POWER_TOLERANCE * next.abs();
        lambda = next;
        if done {
            break;
        }
    }
    if !lambda.is_finite() {
        return Err(Error::NoConvergence("spectral norm power iteration"));
    }
    Ok(lambda)
}

/// Inverse of a symmetric positive-definite matrix via Cholesky, resymmetrized.
pub fn spd_inverse(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = Cholesky::new(m).ok_or(Error::NotPositiveDefinite("Gram inverse"))?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// `m ← (m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// `‖a - b‖_F / ‖b‖_F` (absolute when `b = 0`).
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let base = b.norm();
    if base > 0.0 {
        diff / base
    } else {
        diff
    }
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Real-by-complex product computed as two real products.
pub fn mul_real_complex(a: &DMatrix<f64>, b: &CMatrix) -> CMatrix {
    let re = a * b.map(|z| z.re);
    let im = a * b.map(|z| z.im);
    re.zip_map(&im, Complex64::new)
}

/// Sweep budget for the Jacobi SVD.
pub const JACOBI_MAX_SWEEPS: usize = 80;

/// Thin SVD `A = U diag(σ) Vᴴ`, `k = min(rows, cols)` triplets, `σ` descending.
///
/// Columns of `V` paired with exactly zero singular values are zero; those
/// paired with singular values below `ε‖A‖_F` are not guaranteed orthogonal.
/// `U` is always orthonormal.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinSvd<T: ComplexField<RealField = f64>> {
    pub u: DMatrix<T>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<T>,
}

impl<T: ComplexField<RealField = f64>> ThinSvd<T> {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }
}

/// One-sided (Hestenes) Jacobi SVD preconditioned by a column-pivoted QR.
///
/// With `A P = Q R`, the Jacobi iteration runs on `Rᴴ`, whose columns are
/// already nearly orthogonal and graded; this keeps the sweep count small on
/// the numerically rank-deficient feature matrices the forecaster produces.
/// Exactly rank-deficient input is handled, where the bidiagonal QR iteration
/// in nalgebra 0.35 can return factors that do not reconstruct the matrix.
pub fn thin_svd<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> Result<ThinSvd<T>> {
    let (n, m) = a.shape();
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter("SVD of an empty matrix".into()));
    }
    if a.iter().any(|v| !v.clone().is_finite()) {
        return Err(Error::NonFinite("SVD input"));
    }
    if n < m {
        let t = thin_svd(&a.adjoint())?;
        return Ok(ThinSvd {
            u: t.v_t.adjoint(),
            singular_values: t.singular_values,
            v_t: t.u.adjoint(),
        });
    }
    let qr = a.clone().col_piv_qr();
    let q = qr.q();
    let mut x = qr.r().adjoint();
    // rows of the permutation matrix P, so that A P = Q R
    let mut perm = DMatrix::<T>::identity(m, m);
    qr.p().permute_columns(&mut perm);

    let mut vx = DMatrix::<T>::identity(m, m);
    jacobi_orthogonalize(&mut x, &mut vx)?;

    // Rᴴ Vx = [columns of x] = Ux Σ, hence A = (Q Vx) Σ (P Ux)ᴴ
    let sigma: Vec<f64> = x.column_iter().map(|c| c.norm()).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap_or(Ordering::Equal));
    let mut ux = DMatrix::<T>::zeros(m, m);
    let mut vx_sorted = DMatrix::<T>::zeros(m, m);
    for (k, &i) in order.iter().enumerate() {
        if sigma[i] > 0.0 {
            ux.set_column(k, &x.column(i).unscale(sigma[i]));
        }
        vx_sorted.set_column(k, &vx.column(i));
    }
    Ok(ThinSvd {
        u: q * vx_sorted,
        singular_values: DVector::from_iterator(m, order.iter().map(|&i| sigma[i])),
        v_t: (perm * ux).adjoint(),
    })
}

/// Rotates column pairs of `b` until all are orthogonal to working precision,
/// accumulating the rotations into `v`.
fn jacobi_orthogonalize<T: ComplexField<RealField = f64>>(b: &mut DMatrix<T>, v: &mut DMatrix<T>) -> Result<()> {
    let (n, m) = b.shape();
    let tol = f64::EPSILON * m as f64;
    // columns this small are zero to working precision; rotating them only cycles
    let negligible = {
        let f = f64::EPSILON * b.norm();
        f * f
    };
    let mut norms: Vec<f64> = b.column_iter().map(|c| c.norm_squared()).collect();
    let (bd, vd) = (b.as_mut_slice(), v.as_mut_slice());
    let vn = vd.len() / m;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..m {
            for j in (i + 1)..m {
                let (alpha, beta) = (norms[i], norms[j]);
                if alpha.min(beta) <= negligible {
                    continue;
                }
                let (bi, bj) = column_pair(bd, n, i, j);
                let g = dotc(bi, bj);
                let g_abs = g.clone().modulus();
                if g_abs == 0.0 || g_abs <= tol * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                // make the pair's inner product real, then rotate
                let phase = g.clone().conjugate().unscale(g_abs);
                let zeta = (beta - alpha) / (2.0 * g_abs);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate_pair(bi, bj, phase.clone(), c, s);
                norms[i] = norm_squared(bi);
                norms[j] = norm_squared(bj);
                let (vi, vj) = column_pair(vd, vn, i, j);
                rotate_pair(vi, vj, phase, c, s);
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(Error::NoConvergence("Jacobi SVD"))
}

/// Disjoint mutable views of columns `i < j` of a column-major buffer.
fn column_pair<T>(data: &mut [T], rows: usize, i: usize, j: usize) -> (&mut [T], &mut [T]) {
    let (left, right) = data.split_at_mut(j * rows);
    (&mut left[i * rows..(i + 1) * rows], &mut right[..rows])
}

fn dotc<T: ComplexField<RealField = f64>>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + x.clone().conjugate() * y.clone())
}

fn norm_squared<T: ComplexField<RealField = f64>>(a: &[T]) -> f64 {
    a.iter().map(|x| x.clone().modulus_squared()).sum()
}

/// `(a, b e) ← (c a − s b e, s a + c b e)`.
fn rotate_pair<T: ComplexField<RealField = f64>>(a: &mut [T], b: &mut [T], phase: T, c: f64, s: f64) {
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let ai = x.clone();
        let bj = y.clone() * phase.clone();
        *x = ai.clone().scale(c) - bj.clone().scale(s);
        *y = ai.scale(s) + bj.scale(c);
    }
}

/// Number of singular values above `sigma[0] * rel_cutoff`.
pub fn numerical_rank(sigma: &DVector<f64>, rel_cutoff: f64) -> usize {
    match sigma.iter().next() {
        Some(&s1) if s1 > 0.0 => sigma.iter().take_while(|&&s| s > s1 * rel_cutoff).count(),
        _ => 0,
    }
}

/// `σ_max / σ_min` of a complex matrix (infinite when singular).
pub fn condition_number(m: &CMatrix) -> f64 {
    let sv = match thin_svd(m) {
        Ok(svd) => svd.singular_values,
        Err(_) => return f64::INFINITY,
    };
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// `‖M‖₁ ‖M⁻¹‖₁` of a square complex matrix, via an LU inverse (infinite
/// when singular). Within a factor `n` of the 2-norm condition number.
pub fn condition_number_1norm(m: &CMatrix) -> f64 {
    if m.nrows() != m.ncols() || m.is_empty() {
        return f64::INFINITY;
    }
    let one_norm = |a: &CMatrix| {
        a.column_iter()
            .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    match m.clone().lu().try_inverse() {
        Some(inv) if inv.iter().all(|z| z.is_finite()) => one_norm(m) * one_norm(&inv),
        _ => f64::INFINITY,
    }
}

/// Least-squares minimum-norm solution `A⁺ b` with singular values below
/// `σ₁ · rel_cutoff` discarded.
pub fn pinv_solve_complex(a: &CMatrix, b: &CVector, rel_cutoff: f64) -> Result<CVector> {
    let svd = thin_svd(a)?;
    let (u, vt) = (&svd.u, &svd.v_t);
    let sigma = &svd.singular_values;
    let s1 = sigma.iter().copied().fold(0.0, f64::max);
    if s1 == 0.0 {
        return Err(Error::ZeroMatrix("pseudo-inverse"));
    }
    let mut coeffs = u.adjoint() * b;
    for (i, c) in coeffs.iter_mut().enumerate() {
        if sigma[i] > s1 * rel_cutoff {
            *c /= sigma[i];
        } else {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    Ok(vt.adjoint() * coeffs)
}

/// Eigenpairs of a real, possibly nonsymmetric square matrix.
#[derive(Debug, Clone)]
pub struct Eigen {
    /// Sorted by descending modulus, then descending imaginary part.
    pub values: Vec<Complex64>,
    /// Unit-norm eigenvectors, column `i` paired with `values[i]`.
    pub vectors: CMatrix,
}

/// Full eigendecomposition of a real square matrix.
///
/// Real Schur form from nalgebra, converted to complex Schur form by 2×2
/// unitary rotations, then eigenvectors of the triangular factor by back
/// substitution. Near-equal eigenvalues perturb the pivot to
/// `ε · ‖T‖`, so defective matrices yield nearly parallel vectors rather than
/// overflow; callers detect that through the eigenvector condition number.
pub fn eig(k: &DMatrix<f64>) -> Result<Eigen> {
    let n = k.nrows();
    if n == 0 || k.ncols() != n {
        return Err(Error::InvalidParameter("eigendecomposition needs a non-empty square matrix".into()));
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigendecomposition input"));
    }
    let schur = Schur::try_new(k.clone(), f64::EPSILON, 1000 * n.max(10))
        .ok_or(Error::NoConvergence("Schur decomposition"))?;
    let (q, t) = schur.unpack();
    let (mut z, mut t) = (to_complex(&q), to_complex(&t));
    real_to_complex_schur(&mut t, &mut z);

    let values: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    let tri_vectors = triangular_eigenvectors(&t);
    let mut vectors = &z * tri_vectors;
    for mut col in vectors.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= Complex64::new(norm, 0.0);
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (za, zb) = (values[a], values[b]);
        zb.norm()
            .partial_cmp(&za.norm())
            .unwrap_or(Ordering::Equal)
            .then(zb.im.partial_cmp(&za.im).unwrap_or(Ordering::Equal))
    });
    let sorted_values = order.iter().map(|&i| values[i]).collect();
    let sorted_vectors = CMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);
    Ok(Eigen {
        values: sorted_values,
        vectors: sorted_vectors,
    })
}

/// Eliminates the subdiagonal of the 2×2 bumps of a real Schur form.
fn real_to_complex_schur(t: &mut CMatrix, z: &mut CMatrix) {
    let n = t.nrows();
    for m in (1..n).rev() {
        let sub = t[(m, m - 1)];
        let scale = t[(m - 1, m - 1)].norm() + t[(m, m)].norm();
        if sub.norm() <= f64::EPSILON * scale {
            t[(m, m - 1)] = Complex64::new(0.0, 0.0);
            continue;
        }
        let (a, b, c, d) = (t[(m - 1, m - 1)], t[(m - 1, m)], sub, t[(m, m)]);
        let half = (a - d) * 0.5;
        let mu = (a + d) * 0.5 + (half * half + b * c).sqrt() - d;
        let r = libm::hypot(mu.norm(), c.norm());
        let (cs, sn) = (mu / r, c / r);
        // Rows m-1, m of T from column m-1 on: T ← G T
        for col in (m - 1)..n {
            let (x, y) = (t[(m - 1, col)], t[(m, col)]);
            t[(m - 1, col)] = cs.conj() * x + sn.conj() * y;
            t[(m, col)] = -sn * x + cs * y;
        }
        // Columns m-1, m: T ← T Gᴴ and Z ← Z Gᴴ
        for row in 0..=m {
            let (x, y) = (t[(row, m - 1)], t[(row, m)]);
            t[(row, m - 1)] = x * cs + y * sn;
            t[(row, m)] = -x * sn.conj() + y * cs.conj();
        }
        for row in 0..n {
            let (x, y) = (z[(row, m - 1)], z[(row, m)]);
            z[(row, m - 1)] = x * cs + y * sn;
            z[(row, m)] = -x * sn.conj() + y * cs.conj();
        }
        t[(m, m - 1)] = Complex64::new(0.0, 0.0);
    }
}

/// Right eigenvectors of an upper-triangular matrix (upper-triangular result).
fn triangular_eigenvectors(t: &CMatrix) -> CMatrix {
    let n = t.nrows();
    let tnorm = t.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let smin = (f64::EPSILON * tnorm).max(f64::MIN_POSITIVE);
    let mut x = CMatrix::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        x[(k, k)] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in (i + 1)..=k {
                acc += t[(i, j)] * x[(j, k)];
            }
            let mut denom = t[(i, i)] - lambda;
            if denom.norm() < smin {
                denom = Complex64::new(smin, 0.0);
            }
            x[(i, k)] = -acc / denom;
        }
        let norm = x.column(k).norm();
        if norm > 1e100 {
            let mut col = x.column_mut(k);
            col /= Complex64::new(norm, 0.0);
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededStream;
    use core::f64::consts::PI;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = SeededStream::new(seed, 9);
        DMatrix::from_fn(rows, cols, |_, _| rng.standard_normal())
    }

    fn residual(k: &DMatrix<f64>, e: &Eigen) -> f64 {
        let kc = to_complex(k);
        let lam = CMatrix::from_diagonal(&CVector::from_vec(e.values.clone()));
        (&kc * &e.vectors - &e.vectors * lam).norm()
    }

    #[test]
    fn power_iteration_matches_svd() {
        for seed in 0..5 {
            let psi = random(8, 5, seed);
            let s1 = thin_svd(&psi).unwrap().singular_values[0];
            let norm = gram_spectral_norm(&psi).unwrap();
            // successive-change tolerance 1e-6 bounds the true error to a small multiple
            assert!((norm - s1 * s1).abs() <= 1e-5 * s1 * s1, "{norm} vs {}", s1 * s1);
        }
    }

    fn check_svd(a: &DMatrix<f64>) {
        let svd = thin_svd(a).unwrap();
        let k = a.nrows().min(a.ncols());
        assert_eq!(svd.u.shape(), (a.nrows(), k));
        assert_eq!(svd.v_t.shape(), (k, a.ncols()));
        let recon = &svd.u * DMatrix::from_diagonal(&svd.singular_values) * &svd.v_t;
        assert!((recon - a).norm() <= 1e-12 * a.norm().max(1.0));
        let r = numerical_rank(&svd.singular_values, 1e-12);
        let vr = svd.v_t.rows(0, r);
        assert!((vr * vr.transpose() - DMatrix::<f64>::identity(r, r)).amax() < 1e-10);
        let ur = svd.u.columns(0, r);
        assert!((ur.transpose() * ur - DMatrix::<f64>::identity(r, r)).amax() < 1e-10);
        for w in svd.singular_values.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn svd_shapes_and_reconstruction() {
        for (n, m, seed) in [(8, 5, 1), (5, 8, 2), (6, 6, 3), (40, 12, 4), (1, 4, 5), (4, 1, 6)] {
            check_svd(&random(n, m, seed));
        }
    }

    #[test]
    fn svd_exact_rank_deficiency() {
        // rank-1 wide input on which nalgebra's bidiagonal SVD fails to reconstruct
        let u = DMatrix::from_column_slice(5, 1, &[1.3732832625671536, 1.8222923389763872, -0.6650098395158868, -0.34187765572777556, 1.7579207897594842]);
        let v = DMatrix::from_row_slice(1, 6, &[1.0, -1.0283899, -1.0742490, -0.4943, -1.0526772, -1.00255]);
        let x = &u * &v;
        check_svd(&x);
        let svd = thin_svd(&x).unwrap();
        assert_eq!(numerical_rank(&svd.singular_values, 1e-10), 1);
        assert!((svd.singular_values[0] - u.norm() * v.norm()).abs() < 1e-12);
        check_svd(&x.transpose());
        check_svd(&DMatrix::from_element(4, 3, 0.7));
        check_svd(&(random(30, 2, 7) * random(2, 9, 8)));
        let zero = thin_svd(&DMatrix::<f64>::zeros(3, 2)).unwrap();
        assert_eq!(zero.singular_values.amax(), 0.0);
    }

    #[test]
    fn complex_svd_reconstructs() {
        let mut rng = SeededStream::new(10, 9);
        let a = CMatrix::from_fn(6, 4, |_, _| Complex64::new(rng.standard_normal(), rng.standard_normal()));
        let svd = thin_svd(&a).unwrap();
        let sig = to_complex(&DMatrix::from_diagonal(&svd.singular_values));
        assert!((&svd.u * sig * &svd.v_t - &a).norm() < 1e-12 * a.norm());
        let uhu = svd.u.adjoint() * &svd.u;
        assert!((uhu - CMatrix::identity(4, 4)).norm() < 1e-12);
        assert!(thin_svd(&CMatrix::from_element(2, 2, Complex64::new(f64::NAN, 0.0))).is_err());
    }

    #[test]
    fn spd_inverse_multiplies_back() {
        let a = random(6, 9, 2);
        let g = &a * a.transpose() + DMatrix::identity(6, 6) * 1e-3;
        let inv = spd_inverse(g.clone()).unwrap();
        assert!((&inv * &g - DMatrix::identity(6, 6)).norm() < 1e-10);
        assert!(spd_inverse(-DMatrix::<f64>::identity(3, 3)).is_err());
    }

    #[test]
    fn eig_diagonal() {
        let k = DMatrix::from_diagonal(&DVector::from_vec(alloc::vec![0.5, 2.0]));
        let e = eig(&k).unwrap();
        assert!((e.values[0] - Complex64::new(2.0, 0.0)).norm() < 1e-14);
        assert!((e.values[1] - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        assert!((e.vectors[(1, 0)].norm() - 1.0).abs() < 1e-14);
        assert!((e.vectors[(0, 1)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_rotation() {
        let phi: f64 = 0.3;
        let k = DMatrix::from_row_slice(2, 2, &[phi.cos(), -phi.sin(), phi.sin(), phi.cos()]);
        let e = eig(&k).unwrap();
        let expect = Complex64::from_polar(1.0, phi);
        assert!((e.values[0] - expect).norm() < 1e-14);
        assert!((e.values[1] - expect.conj()).norm() < 1e-14);
        assert!(residual(&k, &e) < 1e-14);
    }

    #[test]
    fn eig_identity_keeps_independent_vectors() {
        let k = DMatrix::<f64>::identity(4, 4);
        let e = eig(&k).unwrap();
        assert!(condition_number(&e.vectors) < 1.0 + 1e-12);
    }

    #[test]
    fn eig_random_residuals() {
        for (n, seed) in [(3, 1), (7, 2), (12, 3), (40, 4), (90, 5)] {
            let k = random(n, n, seed);
            let e = eig(&k).unwrap();
            let r = residual(&k, &e);
            assert!(r <= 1e-8 * k.norm() * n as f64, "n={n} residual {r}");
            for w in e.values.windows(2) {
                assert!(w[0].norm() >= w[1].norm() - 1e-15);
            }
        }
    }

    #[test]
    fn eig_block_rotation_spectrum() {
        let mut k = DMatrix::zeros(4, 4);
        for (b, phi) in [(0usize, PI / 8.0), (2, PI / 3.0f64)] {
            k[(b, b)] = phi.cos();
            k[(b, b + 1)] = -phi.sin();
            k[(b + 1, b)] = phi.sin();
            k[(b + 1, b + 1)] = phi.cos();
        }
        let p = random(4, 4, 77);
        let pinv = p.clone().try_inverse().unwrap();
        let similar = &p * k * pinv;
        let e = eig(&similar).unwrap();
        for z in &e.values {
            assert!((z.norm() - 1.0).abs() < 1e-10);
        }
        assert!(residual(&similar, &e) < 1e-10 * similar.norm());
    }

    #[test]
    fn pinv_solve_recovers_solution() {
        let a = to_complex(&random(6, 3, 8));
        let x = CVector::from_fn(3, |i, _| Complex64::new(i as f64, 1.0 - i as f64));
        let b = &a * &x;
        let got = pinv_solve_complex(&a, &b, 1e-12).unwrap();
        assert!((got - x).norm() < 1e-12);
    }

    #[test]
    fn rank_counts_above_cutoff() {
        let sigma = DVector::from_vec(alloc::vec![1.0, 1e-3, 1e-11, 0.0]);
        assert_eq!(numerical_rank(&sigma, 1e-10), 2);
        assert_eq!(numerical_rank(&DVector::zeros(3), 1e-10), 0);
    }

    #[test]
    fn one_norm_condition_brackets_two_norm() {
        for seed in 0..5 {
            let a = to_complex(&random(7, 7, seed));
            let k2 = condition_number(&a);
            let k1 = condition_number_1norm(&a);
            assert!(k1 >= k2 / 7.0 && k1 <= k2 * 7.0, "{k1} vs {k2}");
        }
        assert_eq!(condition_number_1norm(&CMatrix::identity(4, 4)), 1.0);
        assert!(condition_number_1norm(&CMatrix::zeros(3, 3)).is_infinite());
    }
}
