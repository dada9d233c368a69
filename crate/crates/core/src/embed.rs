//! Windowed data matrices and block-Hankel delay embeddings.
//!
//! Index conventions: documentation of the embedding is usually written
//! 1-based; the code is 0-based. The conversions used throughout are
//!
//! | quantity                     | 1-based             | 0-based (code)      |
//! |------------------------------|---------------------|---------------------|
//! | window column for time `τ`   | `i = τ - t + w`     | `i = τ - t + w - 1` |
//! | Hankel row of lag `a`, feat `j` | `(j-1)d + a`     | `j*d + a`           |
//! | Hankel entry `(a, i)`        | `x_{t-w+i+a-1}`     | `window[i + a]`     |
//! | newest-lag row of feature `j`| `(j-1)d + d`        | `j*d + d - 1`       |
//!
//! Time indices `t` passed to [`window_at`] and [`new_hankel_column`] are
//! 1-based "number of observations seen", so `t = T` is the last step.

use alloc::format;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::series::RawSeries;

/// `p × w` window whose columns are `x_{t-w+1}, ..., x_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowMatrix {
    pub data: DMatrix<f64>,
    /// 1-based time of the newest column.
    pub end_time: usize,
}

impl WindowMatrix {
    pub fn width(&self) -> usize {
        self.data.ncols()
    }
}

/// `(p·d) × (w-d+1)` block-Hankel embedding of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelBlock {
    pub data: DMatrix<f64>,
    pub p: usize,
    pub d: usize,
    pub w: usize,
    pub end_time: usize,
}

/// Time-shifted snapshot matrices taken from a Hankel block.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotPair {
    /// Hankel columns `1..=m`.
    pub x: DMatrix<f64>,
    /// Hankel columns `2..=m+1`.
    pub y: DMatrix<f64>,
    /// Hankel column `m+1`.
    pub latest_column: DVector<f64>,
}

impl SnapshotPair {
    /// Number of snapshot pairs `m = w - d`.
    pub fn m(&self) -> usize {
        self.x.ncols()
    }
}

pub fn window_at(series: &RawSeries, t: usize, w: usize) -> Result<WindowMatrix> {
    if w == 0 {
        return Err(Error::InvalidParameter("window length must be >= 1".into()));
    }
    if t < w || t > series.len() {
        return Err(Error::IndexOutOfRange {
            t,
            min: w,
            max: series.len(),
        });
    }
    Ok(WindowMatrix {
        data: series.values().columns(t - w, w).into_owned(),
        end_time: t,
    })
}

fn check_depth(d: usize, w: usize) -> Result<()> {
    if d == 0 || d > w {
        return Err(Error::InvalidParameter(format!(
            "Hankel depth must satisfy 1 <= d <= w (d={d}, w={w})"
        )));
    }
    Ok(())
}

/// `d × (w-d+1)` Hankel matrix of a single row; entry `(a, i)` is `row[i + a]`.
pub fn hankel_univariate(row: &[f64], d: usize) -> Result<DMatrix<f64>> {
    check_depth(d, row.len())?;
    Ok(DMatrix::from_fn(d, row.len() - d + 1, |a, i| row[i + a]))
}

/// Stacks the per-feature Hankel matrices of `window`, feature 0 on top.
pub fn hankel_block(window: &WindowMatrix, d: usize) -> Result<HankelBlock> {
    let (p, w) = window.data.shape();
    check_depth(d, w)?;
    let cols = w - d + 1;
    let data = DMatrix::from_fn(p * d, cols, |row, i| {
        let (j, a) = (row / d, row % d);
        window.data[(j, i + a)]
    });
    Ok(HankelBlock {
        data,
        p,
        d,
        w,
        end_time: window.end_time,
    })
}

pub fn snapshot_pair(h: &HankelBlock) -> Result<SnapshotPair> {
    let cols = h.data.ncols();
    if cols < 2 {
        return Err(Error::InvalidParameter(format!(
            "snapshot pair needs m = w - d >= 1 (w={}, d={})",
            h.w, h.d
        )));
    }
    let m = cols - 1;
    Ok(SnapshotPair {
        x: h.data.columns(0, m).into_owned(),
        y: h.data.columns(1, m).into_owned(),
        latest_column: h.data.column(m).into_owned(),
    })
}

/// The `(p·d)` Hankel column ending at 1-based time `t`.
pub fn new_hankel_column(series: &RawSeries, t: usize, d: usize) -> Result<DVector<f64>> {
    if d == 0 {
        return Err(Error::InvalidParameter("Hankel depth must be >= 1".into()));
    }
    if t < d || t > series.len() {
        return Err(Error::IndexOutOfRange {
            t,
            min: d,
            max: series.len(),
        });
    }
    let p = series.n_features();
    let v = series.values();
    Ok(DVector::from_fn(p * d, |row, _| {
        let (j, a) = (row / d, row % d);
        v[(j, t - d + a)]
    }))
}

/// Row indices holding each feature's newest lag: `j*d + d - 1`.
pub fn newest_lag_rows(p: usize, d: usize) -> impl Iterator<Item = usize> {
    (0..p).map(move |j| j * d + d - 1)
}
