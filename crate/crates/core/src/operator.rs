//! Online feature-space operator over a rolling window of lifted snapshots.
//!
//! The state keeps `P = (Ψ_X Ψ_Xᵀ + εI)⁻¹` and `A = Ψ_Y Ψ_Xᵀ P` for the `m`
//! snapshot pairs held in the window. Advancing the window by one step
//! removes the pair `ψ(x₁) → ψ(x₂)` and admits `ψ(x_{m+1}) → ψ(x_{m+2})`,
//! which is a rank-2 modification `Ψ_X Ψ_Xᵀ + U C Uᵀ` with `C = diag(-1, 1)`.
//! The Woodbury identity then updates both matrices in `O(s²)`:
//!
//! ```text
//! Γ = (C⁻¹ + Uᵀ P U)⁻¹
//! P ← P − P U Γ Uᵀ P
//! A ← A + (V − A U) Γ Uᵀ P
//! ```
//!
//! `ε` is fixed at initialization so the recursion tracks
//! `(Gram + ε₀ I)⁻¹` exactly; it is recomputed only on batch re-initialization.

use alloc::format;

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::embed::SnapshotPair;
use crate::error::{ensure_dim, Error, Result};
use crate::linalg::{gram_spectral_norm, spd_inverse, symmetrize};
use crate::rff::RffMap;

/// `ε = EPSILON_SCALE · ‖Ψ_X Ψ_Xᵀ‖₂`.
pub const EPSILON_SCALE: f64 = 1e-6;
/// Updates with `|det M| / ‖M‖_F²` below this fall back to batch re-initialization.
pub const SINGULAR_GUARD: f64 = 1e-12;

/// The fixed sign matrix `C = diag(-1, +1)`; it is its own inverse.
pub const C: Matrix2<f64> = Matrix2::new(-1.0, 0.0, 0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorConfig {
    pub epsilon_scale: f64,
    /// Slides between forced batch rebuilds; 0 disables.
    pub refresh_period: usize,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            epsilon_scale: EPSILON_SCALE,
            refresh_period: 0,
        }
    }
}

/// Columns removed/admitted by one slide.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdatePair {
    /// `[ψ(x₁), ψ(x_{m+1})]`
    pub u: DMatrix<f64>,
    /// `[ψ(x₂), ψ(x_{m+2})]`
    pub v: DMatrix<f64>,
}

impl UpdatePair {
    pub fn c(&self) -> Matrix2<f64> {
        C
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaMatrix {
    pub value: Matrix2<f64>,
    /// `|det M| / ‖M‖_F²` for `M = C⁻¹ + UᵀPU`.
    pub reciprocal_condition: f64,
}

/// `Γ = (C⁻¹ + UᵀPU)⁻¹` by direct 2×2 inversion.
pub fn gamma_matrix(p: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<GammaMatrix> {
    ensure_dim("gamma P", p.nrows(), u.nrows())?;
    ensure_dim("gamma U columns", 2, u.ncols())?;
    gamma_from_pu(u, &(p * u))
}

fn gamma_from_pu(u: &DMatrix<f64>, pu: &DMatrix<f64>) -> Result<GammaMatrix> {
    let g = u.transpose() * pu;
    let m = C + Matrix2::new(g[(0, 0)], g[(0, 1)], g[(1, 0)], g[(1, 1)]);
    let det = m.determinant();
    let scale = m.norm_squared();
    let rcond = if scale > 0.0 { det.abs() / scale } else { 0.0 };
    if !det.is_finite() || !(rcond >= SINGULAR_GUARD) {
        return Err(Error::SingularUpdate {
            reciprocal_condition: rcond,
        });
    }
    let inv = Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det;
    Ok(GammaMatrix {
        value: inv,
        reciprocal_condition: rcond,
    })
}

/// Why a slide rebuilt the state from the window instead of updating it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReinitReason {
    SingularUpdate { reciprocal_condition: f64 },
    PeriodicRefresh,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlideOutcome {
    Updated,
    Reinitialized(ReinitReason),
}

/// Every field of a [`KdmdState`], for checkpointing.
#[derive(Debug, Clone, PartialEq)]
pub struct StateParts {
    pub p: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub lifted_window: DMatrix<f64>,
    pub physical_window: DMatrix<f64>,
    pub epsilon: f64,
    pub step_count: u64,
    pub slides_since_init: usize,
    pub reinit_count: u64,
    pub lift_count: u64,
    pub config: OperatorConfig,
}

/// Online operator state. Single writer: mutate from one owner only.
#[derive(Debug, Clone, PartialEq)]
pub struct KdmdState {
    p: DMatrix<f64>,
    a: DMatrix<f64>,
    lifted_window: DMatrix<f64>,
    physical_window: DMatrix<f64>,
    epsilon: f64,
    step_count: u64,
    slides_since_init: usize,
    reinit_count: u64,
    lift_count: u64,
    config: OperatorConfig,
}

/// Batch `(P, A)` for the given window and regularization.
fn batch_operator(
    psi_x: &DMatrix<f64>,
    psi_y: &DMatrix<f64>,
    epsilon: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let s = psi_x.nrows();
    let gram = psi_x * psi_x.transpose() + DMatrix::identity(s, s) * epsilon;
    let p = spd_inverse(gram)?;
    let a = psi_y * (psi_x.transpose() * &p);
    Ok((p, a))
}

/// Batch initialization from lifted and physical snapshots.
///
/// The window buffers become `[Ψ_X | ψ_latest]` and `[X | x_latest]`.
pub fn init_batch(
    psi_x: &DMatrix<f64>,
    psi_y: &DMatrix<f64>,
    physical: &SnapshotPair,
    latest_lifted: &DVector<f64>,
    config: OperatorConfig,
) -> Result<KdmdState> {
    let (s, m) = psi_x.shape();
    if m < 1 {
        return Err(Error::InvalidParameter("operator needs m >= 1 snapshots".into()));
    }
    ensure_dim("init Ψ_Y rows", s, psi_y.nrows())?;
    ensure_dim("init Ψ_Y columns", m, psi_y.ncols())?;
    ensure_dim("init physical columns", m, physical.m())?;
    ensure_dim("init latest lift", s, latest_lifted.len())?;
    ensure_dim("init latest physical", physical.x.nrows(), physical.latest_column.len())?;

    let mut lifted_window = DMatrix::zeros(s, m + 1);
    lifted_window.columns_mut(0, m).copy_from(psi_x);
    lifted_window.set_column(m, latest_lifted);
    let mut physical_window = DMatrix::zeros(physical.x.nrows(), m + 1);
    physical_window.columns_mut(0, m).copy_from(&physical.x);
    physical_window.set_column(m, &physical.latest_column);

    let (epsilon, p, a) = fresh_operator(psi_x, psi_y, config.epsilon_scale)?;
    Ok(KdmdState {
        p,
        a,
        lifted_window,
        physical_window,
        epsilon,
        step_count: 0,
        slides_since_init: 0,
        reinit_count: 0,
        lift_count: 0,
        config,
    })
}

fn fresh_operator(
    psi_x: &DMatrix<f64>,
    psi_y: &DMatrix<f64>,
    epsilon_scale: f64,
) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
    if psi_x.iter().chain(psi_y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("operator initialization"));
    }
    let epsilon = epsilon_scale * gram_spectral_norm(psi_x)?;
    if !(epsilon > 0.0) {
        return Err(Error::ZeroMatrix("operator initialization (ε = 0)"));
    }
    let (p, a) = batch_operator(psi_x, psi_y, epsilon)?;
    if p.iter().chain(a.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("operator initialization"));
    }
    Ok((epsilon, p, a))
}

/// Reference `(P, A)` recomputed directly for a fixed `ε`.
///
/// Inverts through LU rather than the Cholesky path used by the state, so it
/// stays an independent check of the recursive updates.
pub fn batch_oracle(
    psi_x: &DMatrix<f64>,
    psi_y: &DMatrix<f64>,
    epsilon: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    ensure_dim("oracle Ψ_Y rows", psi_x.nrows(), psi_y.nrows())?;
    ensure_dim("oracle Ψ_Y columns", psi_x.ncols(), psi_y.ncols())?;
    let s = psi_x.nrows();
    let gram = psi_x * psi_x.transpose() + DMatrix::identity(s, s) * epsilon;
    let p = gram
        .lu()
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite("oracle Gram"))?;
    let a = (psi_y * psi_x.transpose()) * &p;
    if p.iter().chain(a.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("batch oracle"));
    }
    Ok((p, a))
}

fn shift_append(window: &mut DMatrix<f64>, column: &DVector<f64>) {
    let rows = window.nrows();
    let data = window.as_mut_slice();
    let len = data.len();
    data.copy_within(rows.., 0);
    data[len - rows..].copy_from_slice(column.as_slice());
}

impl KdmdState {
    /// Initializes from full `m+1`-column windows (oldest first).
    pub fn from_windows(
        lifted_window: DMatrix<f64>,
        physical_window: DMatrix<f64>,
        config: OperatorConfig,
    ) -> Result<Self> {
        let cols = lifted_window.ncols();
        if cols < 2 {
            return Err(Error::InvalidParameter("window needs at least 2 columns".into()));
        }
        ensure_dim("physical window columns", cols, physical_window.ncols())?;
        let m = cols - 1;
        let psi_x = lifted_window.columns(0, m).into_owned();
        let psi_y = lifted_window.columns(1, m).into_owned();
        let (epsilon, p, a) = fresh_operator(&psi_x, &psi_y, config.epsilon_scale)?;
        Ok(Self {
            p,
            a,
            lifted_window,
            physical_window,
            epsilon,
            step_count: 0,
            slides_since_init: 0,
            reinit_count: 0,
            lift_count: 0,
            config,
        })
    }

    pub fn from_parts(parts: StateParts) -> Result<Self> {
        let s = parts.lifted_window.nrows();
        let cols = parts.lifted_window.ncols();
        ensure_dim("checkpoint P rows", s, parts.p.nrows())?;
        ensure_dim("checkpoint P columns", s, parts.p.ncols())?;
        ensure_dim("checkpoint A rows", s, parts.a.nrows())?;
        ensure_dim("checkpoint A columns", s, parts.a.ncols())?;
        ensure_dim("checkpoint physical columns", cols, parts.physical_window.ncols())?;
        if cols < 2 {
            return Err(Error::InvalidParameter("checkpoint window too narrow".into()));
        }
        Ok(Self {
            p: parts.p,
            a: parts.a,
            lifted_window: parts.lifted_window,
            physical_window: parts.physical_window,
            epsilon: parts.epsilon,
            step_count: parts.step_count,
            slides_since_init: parts.slides_since_init,
            reinit_count: parts.reinit_count,
            lift_count: parts.lift_count,
            config: parts.config,
        })
    }

    pub fn to_parts(&self) -> StateParts {
        StateParts {
            p: self.p.clone(),
            a: self.a.clone(),
            lifted_window: self.lifted_window.clone(),
            physical_window: self.physical_window.clone(),
            epsilon: self.epsilon,
            step_count: self.step_count,
            slides_since_init: self.slides_since_init,
            reinit_count: self.reinit_count,
            lift_count: self.lift_count,
            config: self.config,
        }
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn reinit_count(&self) -> u64 {
        self.reinit_count
    }

    /// Lift evaluations of newly arrived columns since construction.
    pub fn lift_count(&self) -> u64 {
        self.lift_count
    }

    pub fn config(&self) -> OperatorConfig {
        self.config
    }

    /// Feature dimension `s`.
    pub fn s(&self) -> usize {
        self.lifted_window.nrows()
    }

    /// Number of snapshot pairs `m`.
    pub fn m(&self) -> usize {
        self.lifted_window.ncols() - 1
    }

    pub fn lifted_window(&self) -> &DMatrix<f64> {
        &self.lifted_window
    }

    pub fn physical_window(&self) -> &DMatrix<f64> {
        &self.physical_window
    }

    /// `Ψ_X`: lifted columns `1..=m`.
    pub fn psi_x(&self) -> DMatrix<f64> {
        self.lifted_window.columns(0, self.m()).into_owned()
    }

    /// `Ψ_Y`: lifted columns `2..=m+1`.
    pub fn psi_y(&self) -> DMatrix<f64> {
        self.lifted_window.columns(1, self.m()).into_owned()
    }

    /// `X`: physical columns `1..=m`.
    pub fn physical_x(&self) -> DMatrix<f64> {
        self.physical_window.columns(0, self.m()).into_owned()
    }

    /// `ψ(x_{m+1})`, the newest lifted column.
    pub fn latest_lifted(&self) -> DVector<f64> {
        self.lifted_window.column(self.m()).into_owned()
    }

    pub fn latest_physical(&self) -> DVector<f64> {
        self.physical_window.column(self.m()).into_owned()
    }

    /// Forms `U`, `V` for admitting `new_physical_col`; lifts it exactly once.
    pub fn build_update(
        &mut self,
        new_physical_col: &DVector<f64>,
        map: &RffMap,
    ) -> Result<(UpdatePair, DVector<f64>)> {
        ensure_dim("new column", self.physical_window.nrows(), new_physical_col.len())?;
        let lifted = map.lift(new_physical_col)?;
        ensure_dim("lifted new column", self.s(), lifted.len())?;
        self.lift_count += 1;
        let m = self.m();
        let mut u = DMatrix::zeros(self.s(), 2);
        u.set_column(0, &self.lifted_window.column(0));
        u.set_column(1, &self.lifted_window.column(m));
        let mut v = DMatrix::zeros(self.s(), 2);
        v.set_column(0, &self.lifted_window.column(1));
        v.set_column(1, &lifted);
        Ok((UpdatePair { u, v }, lifted))
    }

    /// Advances the window by one column.
    ///
    /// Falls back to a batch rebuild on the slid window when `Γ` is singular or
    /// the refresh period elapses. If the update produces non-finite values the
    /// window has already advanced and [`Error::ReinitRequired`] is returned;
    /// call [`KdmdState::reinitialize`] to recover.
    pub fn slide(&mut self, new_physical_col: &DVector<f64>, map: &RffMap) -> Result<SlideOutcome> {
        let (pair, lifted) = self.build_update(new_physical_col, map)?;
        let pu = &self.p * &pair.u;
        let gamma = match gamma_from_pu(&pair.u, &pu) {
            Ok(g) => g,
            Err(Error::SingularUpdate {
                reciprocal_condition,
            }) => {
                self.advance_windows(new_physical_col, &lifted);
                self.reinitialize()?;
                return Ok(SlideOutcome::Reinitialized(ReinitReason::SingularUpdate {
                    reciprocal_condition,
                }));
            }
            Err(e) => return Err(e),
        };
        let gamma = DMatrix::from_column_slice(2, 2, gamma.value.as_slice());

        // P ← P − (PU) Γ (PU)ᵀ
        let pu_gamma = &pu * &gamma;
        self.p.gemm(-1.0, &pu_gamma, &pu.transpose(), 1.0);
        symmetrize(&mut self.p);
        // A ← A + (V − AU) Γ (PU)ᵀ
        let mut resid = pair.v.clone();
        resid.gemm(-1.0, &self.a, &pair.u, 1.0);
        let resid_gamma = resid * gamma;
        self.a.gemm(1.0, &resid_gamma, &pu.transpose(), 1.0);

        self.advance_windows(new_physical_col, &lifted);
        if self.p.iter().chain(self.a.iter()).any(|v| !v.is_finite()) {
            return Err(Error::ReinitRequired {
                step: self.step_count,
            });
        }
        self.debug_check_window(map);

        self.slides_since_init += 1;
        if self.config.refresh_period > 0 && self.slides_since_init >= self.config.refresh_period {
            self.reinitialize()?;
            return Ok(SlideOutcome::Reinitialized(ReinitReason::PeriodicRefresh));
        }
        Ok(SlideOutcome::Updated)
    }

    fn advance_windows(&mut self, physical: &DVector<f64>, lifted: &DVector<f64>) {
        shift_append(&mut self.physical_window, physical);
        shift_append(&mut self.lifted_window, lifted);
        self.step_count += 1;
    }

    /// Rebuilds `P`, `A` and `ε` from the current window by batch.
    pub fn reinitialize(&mut self) -> Result<()> {
        let (epsilon, p, a) =
            fresh_operator(&self.psi_x(), &self.psi_y(), self.config.epsilon_scale)?;
        self.epsilon = epsilon;
        self.p = p;
        self.a = a;
        self.slides_since_init = 0;
        self.reinit_count += 1;
        Ok(())
    }

    /// Batch reference for the current window at the current `ε`.
    pub fn oracle(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        batch_oracle(&self.psi_x(), &self.psi_y(), self.epsilon)
    }

    #[cfg(debug_assertions)]
    fn debug_check_window(&self, map: &RffMap) {
        let col = (self.step_count as usize) % self.lifted_window.ncols();
        let expect = map
            .lift(&self.physical_window.column(col).into_owned())
            .expect("window column has map input dimension");
        let diff = (expect - self.lifted_window.column(col)).amax();
        debug_assert!(diff <= 1e-12, "lifted window column {col} drifted by {diff}");
    }

    #[cfg(not(debug_assertions))]
    fn debug_check_window(&self, _map: &RffMap) {}
}

impl core::fmt::Display for ReinitReason {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ReinitReason::SingularUpdate {
                reciprocal_condition,
            } => write!(f, "singular update (rcond {reciprocal_condition:e})"),
            ReinitReason::PeriodicRefresh => f.write_str("periodic refresh"),
        }
    }
}

/// Convenience: lift a Hankel block's snapshots and initialize.
pub fn init_from_snapshots(
    pair: &SnapshotPair,
    map: &RffMap,
    config: OperatorConfig,
) -> Result<KdmdState> {
    let m = pair.m();
    let mut physical = DMatrix::zeros(pair.x.nrows(), m + 1);
    physical.columns_mut(0, m).copy_from(&pair.x);
    physical.set_column(m, &pair.latest_column);
    let lifted = map.lift_matrix(&physical)?;
    if lifted.nrows() != map.dim() {
        return Err(Error::InvalidParameter(format!(
            "lift produced {} rows, map has s = {}",
            lifted.nrows(),
            map.dim()
        )));
    }
    KdmdState::from_windows(lifted, physical, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{hankel_block, snapshot_pair, window_at};
    use crate::linalg::{rel_frobenius, thin_svd};
    use crate::rng::SeededStream;
    use crate::series::{gen_synthetic, presets};
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = SeededStream::new(seed, 4);
        DMatrix::from_fn(rows, cols, |_, _| rng.standard_normal())
    }

    fn trivial_pair(m: usize, rows: usize) -> SnapshotPair {
        SnapshotPair {
            x: DMatrix::zeros(rows, m),
            y: DMatrix::zeros(rows, m),
            latest_column: DVector::zeros(rows),
        }
    }

    #[test]
    fn identity_gram_example() {
        let psi_x = DMatrix::<f64>::identity(2, 2);
        let psi_y = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let st = init_batch(
            &psi_x,
            &psi_y,
            &trivial_pair(2, 1),
            &DVector::zeros(2),
            OperatorConfig::default(),
        )
        .unwrap();
        assert!((st.epsilon() - 1e-6).abs() < 1e-15);
        let expect_p = DMatrix::<f64>::identity(2, 2) / (1.0 + 1e-6);
        assert!((st.p() - expect_p).norm() < 1e-15);
        assert!((st.a() - &psi_y).norm() < 1e-5);
    }

    #[test]
    fn equal_snapshots_give_projector() {
        let psi = random(6, 4, 1);
        let st = init_batch(&psi, &psi, &trivial_pair(4, 1), &DVector::zeros(6), OperatorConfig::default())
            .unwrap();
        let a = st.a();
        assert!((a * &psi - &psi).norm() / psi.norm() < 1e-4);
        assert!((a * a - a).norm() / a.norm() < 1e-4);
    }

    #[test]
    fn epsilon_matches_svd_oracle() {
        let psi = random(8, 5, 2);
        let st = init_batch(&psi, &psi, &trivial_pair(5, 1), &DVector::zeros(8), OperatorConfig::default())
            .unwrap();
        let s1 = thin_svd(&psi).unwrap().singular_values[0];
        assert!((st.epsilon() - 1e-6 * s1 * s1).abs() <= 1e-5 * 1e-6 * s1 * s1);
    }

    #[test]
    fn init_rejects_mismatched_shapes() {
        let psi = random(4, 3, 3);
        let cfg = OperatorConfig::default();
        assert!(init_batch(&psi, &random(4, 2, 4), &trivial_pair(3, 1), &DVector::zeros(4), cfg).is_err());
        assert!(init_batch(&psi, &psi, &trivial_pair(2, 1), &DVector::zeros(4), cfg).is_err());
        assert!(init_batch(&psi, &psi, &trivial_pair(3, 1), &DVector::zeros(5), cfg).is_err());
        let mut bad = psi.clone();
        bad[(0, 0)] = f64::NAN;
        assert!(init_batch(&bad, &psi, &trivial_pair(3, 1), &DVector::zeros(4), cfg).is_err());
    }

    #[test]
    fn gamma_diagonal_case() {
        let p = DMatrix::<f64>::identity(4, 4);
        let mut u = DMatrix::zeros(4, 2);
        u[(0, 0)] = 1.0 / 2f64.sqrt();
        u[(1, 1)] = 1.0 / 2f64.sqrt();
        let g = gamma_matrix(&p, &u).unwrap();
        assert!((g.value - Matrix2::new(-2.0, 0.0, 0.0, 2.0 / 3.0)).norm() < 1e-14);
    }

    #[test]
    fn gamma_detects_exact_singularity() {
        let p = DMatrix::<f64>::identity(4, 4);
        let mut u = DMatrix::zeros(4, 2);
        u[(0, 0)] = 1.0;
        u[(1, 1)] = 1.0;
        assert!(matches!(gamma_matrix(&p, &u), Err(Error::SingularUpdate { .. })));
    }

    #[test]
    fn gamma_multiplies_back() {
        let a = random(6, 6, 5);
        let p = &a * a.transpose() + DMatrix::identity(6, 6);
        let u = random(6, 2, 6) * 0.3;
        let g = gamma_matrix(&p, &u).unwrap();
        let utpu = u.transpose() * &p * &u;
        let m = C + Matrix2::new(utpu[(0, 0)], utpu[(0, 1)], utpu[(1, 0)], utpu[(1, 1)]);
        assert!((g.value * m - Matrix2::identity()).norm() < 1e-12);
    }

    fn stream_state(s: usize, w: usize, d: usize, seed: u64) -> (KdmdState, RffMap, crate::series::RawSeries) {
        let series = gen_synthetic(&presets::tones(&[24.0, 60.0, 7.3], 600)).unwrap();
        let map = RffMap::sample(d, s, 0.05, seed).unwrap();
        let h = hankel_block(&window_at(&series, w, w).unwrap(), d).unwrap();
        let st = init_from_snapshots(&snapshot_pair(&h).unwrap(), &map, OperatorConfig::default()).unwrap();
        (st, map, series)
    }

    #[test]
    fn build_update_uses_window_columns() {
        let (mut st, map, series) = stream_state(16, 20, 4, 1);
        let lw = st.lifted_window().clone();
        let col = crate::embed::new_hankel_column(&series, 21, 4).unwrap();
        let (pair, lifted) = st.build_update(&col, &map).unwrap();
        assert_eq!(pair.u.column(0), lw.column(0));
        assert_eq!(pair.u.column(1), lw.column(st.m()));
        assert_eq!(pair.v.column(0), lw.column(1));
        assert_eq!(pair.v.column(1), lifted.column(0));
        assert_eq!(pair.u.shape(), (16, 2));
        assert_eq!(pair.c(), Matrix2::new(-1.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn one_slide_matches_oracle() {
        let (mut st, map, series) = stream_state(24, 40, 5, 2);
        let eps = st.epsilon();
        let col = crate::embed::new_hankel_column(&series, 41, 5).unwrap();
        assert_eq!(st.slide(&col, &map).unwrap(), SlideOutcome::Updated);
        assert_eq!(st.epsilon(), eps);
        let (p, a) = batch_oracle(&st.psi_x(), &st.psi_y(), eps).unwrap();
        assert!(rel_frobenius(st.p(), &p) < 1e-8);
        assert!(rel_frobenius(st.a(), &a) < 1e-8);
        assert_eq!(st.lift_count(), 1);
        assert_eq!(st.step_count(), 1);
        // window advanced by one Hankel column
        assert_eq!(st.latest_physical(), col);
    }

    #[test]
    fn two_hundred_slides_track_oracle() {
        let (mut st, map, series) = stream_state(32, 60, 6, 3);
        let eps = st.epsilon();
        let mut worst: f64 = 0.0;
        for t in 61..=260 {
            let col = crate::embed::new_hankel_column(&series, t, 6).unwrap();
            assert_eq!(st.slide(&col, &map).unwrap(), SlideOutcome::Updated);
            let (p, a) = batch_oracle(&st.psi_x(), &st.psi_y(), eps).unwrap();
            worst = worst.max(rel_frobenius(st.p(), &p)).max(rel_frobenius(st.a(), &a));
            let asym = (st.p() - st.p().transpose()).norm() / st.p().norm();
            assert!(asym < 1e-10);
        }
        assert!(worst < 1e-6, "worst drift {worst}");
    }

    #[test]
    fn refresh_period_rebuilds() {
        let (mut st, map, series) = stream_state(16, 30, 3, 4);
        st.config.refresh_period = 1;
        let col = crate::embed::new_hankel_column(&series, 31, 3).unwrap();
        let out = st.slide(&col, &map).unwrap();
        assert_eq!(out, SlideOutcome::Reinitialized(ReinitReason::PeriodicRefresh));
        assert_eq!(st.reinit_count(), 1);
        let (p, a) = st.oracle().unwrap();
        assert!(rel_frobenius(st.p(), &p) < 1e-10);
        assert!(rel_frobenius(st.a(), &a) < 1e-10);
    }

    #[test]
    fn singular_update_falls_back_to_batch() {
        // Orthonormal lifted columns with P = I make C + UᵀPU = diag(0, 2).
        let s = 4;
        let lifted = DMatrix::<f64>::identity(s, 3);
        let physical = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 2.0]);
        let mut st = KdmdState::from_windows(lifted, physical, OperatorConfig::default()).unwrap();
        st.p = DMatrix::identity(s, s);
        let map = RffMap::from_parts(
            DMatrix::zeros(s, 1),
            DVector::from_element(s, 0.0),
            1.0,
            0,
            crate::rff::FrequencyScale::TwoGamma,
        )
        .unwrap();
        let out = st.slide(&DVector::from_element(1, 3.0), &map).unwrap();
        assert!(matches!(out, SlideOutcome::Reinitialized(ReinitReason::SingularUpdate { .. })));
        assert_eq!(st.reinit_count(), 1);
    }

    #[test]
    fn parts_round_trip() {
        let (st, _, _) = stream_state(8, 12, 2, 5);
        assert_eq!(KdmdState::from_parts(st.to_parts()).unwrap(), st);
    }

    #[test]
    fn oracle_identity_gram() {
        let psi = DMatrix::<f64>::identity(3, 3);
        let (p, _) = batch_oracle(&psi, &psi, 1e-3).unwrap();
        assert!((p - DMatrix::identity(3, 3) / 1.001).norm() < 1e-14);
        let x = random(5, 7, 9);
        let (p, _) = batch_oracle(&x, &x, 0.1).unwrap();
        let g = &x * x.transpose() + DMatrix::identity(5, 5) * 0.1;
        assert!((p * g - DMatrix::identity(5, 5)).norm() < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn inverse_and_operator_tracking(seed in 0u64..10_000, slides in 1usize..120) {
            let (mut st, map, series) = stream_state(20, 40, 4, seed);
            let eps = st.epsilon();
            let mut grams: Vec<f64> = Vec::new();
            for t in 41..=(40 + slides) {
                let col = crate::embed::new_hankel_column(&series, t, 4).unwrap();
                prop_assert_eq!(st.slide(&col, &map).unwrap(), SlideOutcome::Updated);
                let psi = st.psi_x();
                let g = &psi * psi.transpose() + DMatrix::identity(20, 20) * eps;
                let id_err = (st.p() * g - DMatrix::<f64>::identity(20, 20)).norm() / (20f64).sqrt();
                grams.push(id_err);
                let (_, a) = batch_oracle(&psi, &st.psi_y(), eps).unwrap();
                prop_assert!(rel_frobenius(st.a(), &a) < 1e-6);
            }
            let worst = grams.iter().copied().fold(0.0, f64::max);
            prop_assert!(worst < 1e-6, "P(G+εI) deviates from I by {}", worst);
        }
    }
}
