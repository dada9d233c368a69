//! Random search over kernel hyperparameters with rolling cross-validation,
//! and one-at-a-time sensitivity sweeps.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use workdmd_core::rng::{streams, SeededStream};
use workdmd_core::series::RawSeries;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::pipeline::run_online_split;

/// One expanding-origin fold: train on `train`, score on `validation`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Range<usize>,
    pub validation: Range<usize>,
}

/// Expanding-origin folds over `len` points.
///
/// The series is cut into `k + 1` equal blocks; fold `i` trains on blocks
/// `0..=i` and validates on block `i + 1`. The last validation block also takes
/// the remainder of the division.
pub fn rolling_cv_split(len: usize, k: usize, min_train: usize) -> Result<Vec<Fold>> {
    if k == 0 {
        return Err(Error::Config("need at least one fold".into()));
    }
    let block = len / (k + 1);
    let min_train = min_train.max(1);
    if block < min_train {
        return Err(Error::Config(format!(
            "{len} points give {k} folds of {block}; the first train segment needs {min_train}, \
             so at least {} points are required",
            min_train * (k + 1)
        )));
    }
    Ok((1..=k)
        .map(|i| {
            let end = if i == k { len } else { (i + 1) * block };
            Fold {
                train: 0..i * block,
                validation: i * block..end,
            }
        })
        .collect())
}

/// Search ranges. `gamma_range` and `s_range` are sampled log-uniformly,
/// `w_range` uniformly over integers; `None` keeps the base config's value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpace {
    pub r_choices: Vec<usize>,
    pub d_choices: Vec<usize>,
    pub gamma_range: (f64, f64),
    pub s_range: (usize, usize),
    pub w_range: Option<(usize, usize)>,
    pub budget: usize,
    pub seed: u64,
    pub folds: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            r_choices: vec![10, 20, 30, 40, 64, 128],
            d_choices: vec![5, 10, 20, 30],
            gamma_range: (1e-6, 1e-4),
            s_range: (256, 2048),
            w_range: None,
            budget: 20,
            seed: crate::config::DEFAULT_SEED,
            folds: 3,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.budget == 0 {
            return fail("search budget must be >= 1");
        }
        if self.r_choices.is_empty() || self.r_choices.contains(&0) {
            return fail("r choices must be nonempty and positive");
        }
        if self.d_choices.is_empty() || self.d_choices.contains(&0) {
            return fail("d choices must be nonempty and positive");
        }
        let (g0, g1) = self.gamma_range;
        if !(g0 > 0.0 && g0 <= g1 && g1.is_finite()) {
            return fail("gamma range must satisfy 0 < lo <= hi");
        }
        if self.s_range.0 == 0 || self.s_range.0 > self.s_range.1 {
            return fail("s range must satisfy 1 <= lo <= hi");
        }
        if let Some((lo, hi)) = self.w_range {
            if lo == 0 || lo > hi {
                return fail("w range must satisfy 1 <= lo <= hi");
            }
        }
        if self.folds == 0 {
            return fail("need at least one fold");
        }
        Ok(())
    }

    /// Draws `budget` configs from the search stream, in order.
    pub fn sample(&self, base: &RunConfig) -> Result<Vec<RunConfig>> {
        self.validate()?;
        let mut rng = SeededStream::new(self.seed, streams::SEARCH);
        let log_uniform = |rng: &mut SeededStream, lo: f64, hi: f64| {
            if lo == hi {
                lo
            } else {
                rng.uniform_range(lo.ln(), hi.ln()).exp()
            }
        };
        (0..self.budget)
            .map(|_| {
                let w = match self.w_range {
                    Some((lo, hi)) => rng.uniform_int(lo, hi),
                    None => base.w,
                };
                let legal_d: Vec<usize> = self.d_choices.iter().copied().filter(|&d| d < w).collect();
                if legal_d.is_empty() {
                    return Err(Error::Config(format!("no d choice is below w = {w}")));
                }
                let gamma = log_uniform(&mut rng, self.gamma_range.0, self.gamma_range.1);
                let s = log_uniform(&mut rng, self.s_range.0 as f64, self.s_range.1 as f64).round() as usize;
                let r = self.r_choices[rng.uniform_int(0, self.r_choices.len() - 1)];
                let d = legal_d[rng.uniform_int(0, legal_d.len() - 1)];
                Ok(RunConfig {
                    w,
                    d,
                    s: s.clamp(self.s_range.0, self.s_range.1),
                    gamma,
                    r,
                    ..base.clone()
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub index: usize,
    pub config: RunConfig,
    /// `None` where the fold failed.
    pub fold_mse: Vec<Option<f64>>,
    pub mean_mse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: RunConfig,
    pub best_index: usize,
    pub table: Vec<ScoreRow>,
}

/// Mean validation MSE of `config` across the folds of `warmup`.
fn score(warmup: &RawSeries, folds: &[Fold], index: usize, config: RunConfig) -> ScoreRow {
    let mut fold_mse = Vec::with_capacity(folds.len());
    let mut error = None;
    for fold in folds {
        let result = warmup
            .slice(0, fold.validation.end)
            .map_err(Error::from)
            .and_then(|s| run_online_split(&s, fold.train.end, &config));
        match result {
            Ok(rep) if rep.mse.is_finite() => fold_mse.push(Some(rep.mse)),
            Ok(rep) => {
                fold_mse.push(None);
                error.get_or_insert_with(|| format!("non-finite fold MSE {}", rep.mse));
            }
            Err(e) => {
                fold_mse.push(None);
                error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let mean_mse = if error.is_none() {
        Some(fold_mse.iter().flatten().sum::<f64>() / folds.len() as f64)
    } else {
        None
    };
    ScoreRow {
        index,
        config,
        fold_mse,
        mean_mse,
        error,
    }
}

/// Lower mean wins; ties go to the cheaper model (smaller s, then r), then to
/// the earlier sample.
fn rank_rows(a: &ScoreRow, b: &ScoreRow) -> Ordering {
    let (ma, mb) = (a.mean_mse.unwrap_or(f64::INFINITY), b.mean_mse.unwrap_or(f64::INFINITY));
    ma.total_cmp(&mb)
        .then(a.config.s.cmp(&b.config.s))
        .then(a.config.r.cmp(&b.config.r))
        .then(a.index.cmp(&b.index))
}

/// Scores an explicit list of configs; the search entry point samples first.
pub fn evaluate_configs(warmup: &RawSeries, configs: Vec<RunConfig>, folds: usize) -> Result<SearchResult> {
    let min_train = configs.iter().map(|c| c.w + 1).min().unwrap_or(1);
    let splits = rolling_cv_split(warmup.len(), folds, min_train)?;
    let table: Vec<ScoreRow> = configs
        .into_par_iter()
        .enumerate()
        .map(|(i, c)| score(warmup, &splits, i, c))
        .collect();
    let best_index = pick_best(&table)?;
    Ok(SearchResult {
        best: table[best_index].config.clone(),
        best_index,
        table,
    })
}

fn pick_best(table: &[ScoreRow]) -> Result<usize> {
    table
        .iter()
        .filter(|r| r.mean_mse.is_some())
        .min_by(|a, b| rank_rows(a, b))
        .map(|r| r.index)
        .ok_or_else(|| {
            let failures: Vec<String> = table
                .iter()
                .map(|r| format!("#{}: {}", r.index, r.error.as_deref().unwrap_or("unknown")))
                .collect();
            Error::AllFailed(failures.join("; "))
        })
}

pub fn random_search(warmup: &RawSeries, base: &RunConfig, space: &SearchSpace) -> Result<SearchResult> {
    let configs = space.sample(base)?;
    evaluate_configs(warmup, configs, space.folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    W,
    S,
    Gamma,
    R,
    D,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::W => "w",
            SweepParam::S => "s",
            SweepParam::Gamma => "gamma",
            SweepParam::R => "r",
            SweepParam::D => "d",
        }
    }

    /// `base` with this parameter set to `value`.
    pub fn apply(self, base: &RunConfig, value: f64) -> Result<RunConfig> {
        let as_count = |v: f64| {
            if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{} needs a positive integer, got {v}", self.as_str())))
            }
        };
        let mut cfg = base.clone();
        match self {
            SweepParam::W => cfg.w = as_count(value)?,
            SweepParam::S => cfg.s = as_count(value)?,
            SweepParam::R => cfg.r = as_count(value)?,
            SweepParam::D => cfg.d = as_count(value)?,
            SweepParam::Gamma => cfg.gamma = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "w" => Ok(SweepParam::W),
            "s" => Ok(SweepParam::S),
            "gamma" => Ok(SweepParam::Gamma),
            "r" => Ok(SweepParam::R),
            "d" => Ok(SweepParam::D),
            other => Err(Error::Config(format!(
                "unknown sweep parameter '{other}' (expected w, s, gamma, r or d)"
            ))),
        }
    }
}

pub const SWEEP_HORIZONS: [usize; 3] = [1, 24, 48];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub baseline: RunConfig,
    pub horizons: Vec<usize>,
}

impl SweepSpec {
    pub fn new(param: SweepParam, values: Vec<f64>, baseline: RunConfig) -> Self {
        Self {
            param,
            values,
            baseline,
            horizons: SWEEP_HORIZONS.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.baseline.validate()?;
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::Config("sweep horizons must be nonempty and positive".into()));
        }
        for &v in &self.values {
            self.param.apply(&self.baseline, v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub param: SweepParam,
    pub value: f64,
    pub horizon: usize,
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    pub error: Option<String>,
}

impl SweepCell {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

/// One run per (value, horizon); failures land in the grid instead of aborting.
pub fn sensitivity_sweep(series: &RawSeries, spec: &SweepSpec) -> Result<Vec<SweepCell>> {
    spec.validate()?;
    let cells: Vec<(f64, usize)> = spec
        .values
        .iter()
        .flat_map(|&v| spec.horizons.iter().map(move |&h| (v, h)))
        .collect();
    Ok(cells
        .into_par_iter()
        .map(|(value, horizon)| {
            let run = spec.param.apply(&spec.baseline, value).and_then(|cfg| {
                crate::pipeline::run_online(series, &RunConfig { horizon, ..cfg })
            });
            let (mse, mae, error) = match run {
                Ok(rep) => {
                    let last = rep.per_horizon.last().filter(|m| m.horizon == horizon);
                    match last {
                        Some(m) => (Some(m.mse), Some(m.mae), None),
                        None => (None, None, Some(format!("no matured forecasts at H={horizon}"))),
                    }
                }
                Err(e) => (None, None, Some(e.to_string())),
            };
            SweepCell {
                param: spec.param,
                value,
                horizon,
                mse,
                mae,
                error,
            }
        })
        .collect())
}
