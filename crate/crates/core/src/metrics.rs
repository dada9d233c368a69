//! Error metrics and single-pass exposure accounting.

use alloc::vec::Vec;

use crate::error::{ensure_dim, Error, Result};

fn check(pred: &[f64], truth: &[f64]) -> Result<()> {
    ensure_dim("metric inputs", pred.len(), truth.len())?;
    if pred.is_empty() {
        return Err(Error::InvalidParameter("metrics need at least one entry".into()));
    }
    Ok(())
}

/// Mean squared difference over all entries.
pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

/// Mean absolute difference over all entries.
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(sum / pred.len() as f64)
}

/// Running mean of per-record squared-error sums, each weighted by its entry count.
///
/// Element `k` is `Σ_{i≤k} sse_i / Σ_{i≤k} n_i`. With unit counts this is the
/// plain running mean of the per-record errors.
pub fn cumulative_error(records: &[(f64, usize)]) -> Vec<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    records
        .iter()
        .map(|&(sse, n)| {
            sum += sse;
            count += n;
            if count == 0 {
                0.0
            } else {
                sum / count as f64
            }
        })
        .collect()
}

/// Each warm-up column is seen once at initialization and each slide adds one new column.
pub fn exposure_count(warmup_columns: u64, slides: u64) -> u64 {
    warmup_columns + slides
}

/// How many times more sample exposures a multi-epoch trainer needs.
pub fn exposure_ratio(other_exposures: u64, ours: u64) -> f64 {
    other_exposures as f64 / ours as f64
}

/// Exposures of a trainer that runs `initial_epochs` over the warm-up and
/// `epochs_per_update` over its whole growing buffer after every update.
pub fn retraining_exposures(warmup_columns: u64, updates: u64, initial_epochs: u64, epochs_per_update: u64) -> u64 {
    let mut total = initial_epochs * warmup_columns;
    for k in 1..=updates {
        total += epochs_per_update * (warmup_columns + k);
    }
    total
}
