//! Plot-ready run artifacts and their loaders.
//!
//! Every file written here can be read back by the matching `load_*`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Method, RunConfig};
use crate::error::{Error, Result};
use crate::pipeline::{EvalReport, HorizonMetrics, StepRecord, TelemetryRecord, TimingSummary};
use crate::tune::{ScoreRow, SweepCell, SweepParam};

pub const SUMMARY_FILE: &str = "summary.json";
pub const STEPS_FILE: &str = "steps.csv";
pub const CUMULATIVE_FILE: &str = "cumulative.csv";
pub const TELEMETRY_FILE: &str = "telemetry.csv";

/// Separator for the modulus list inside one telemetry CSV cell.
const LIST_SEP: char = ';';

/// Summary JSON of one run. `config` echoes the fully resolved settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub source: String,
    pub config: RunConfig,
    pub mse: f64,
    pub mae: f64,
    pub per_horizon: Vec<HorizonMetrics>,
    pub warmup_len: usize,
    pub online_len: usize,
    pub slides: u64,
    pub total_sample_exposures: u64,
    pub lift_evaluations: u64,
    pub reinit_count: u64,
    pub max_spectral_radius: Option<f64>,
    pub max_imag_residue: f64,
    pub imag_warnings: usize,
    pub normalizer_mean: Vec<f64>,
    pub normalizer_std: Vec<f64>,
    pub wall_time_seconds: f64,
    pub timing: TimingSummary,
    pub steps_file: String,
    pub cumulative_file: String,
    pub telemetry_file: String,
}

impl Summary {
    pub fn from_report(report: &EvalReport, source: impl Into<String>) -> Self {
        Self {
            method: report.method,
            source: source.into(),
            config: report.config.clone(),
            mse: report.mse,
            mae: report.mae,
            per_horizon: report.per_horizon.clone(),
            warmup_len: report.warmup_len,
            online_len: report.online_len,
            slides: report.slides,
            total_sample_exposures: report.total_sample_exposures,
            lift_evaluations: report.lift_evaluations,
            reinit_count: report.reinit_count,
            max_spectral_radius: report.max_spectral_radius(),
            max_imag_residue: report.max_imag_residue,
            imag_warnings: report.imag_warnings,
            normalizer_mean: report.normalizer.mean.clone(),
            normalizer_std: report.normalizer.std.clone(),
            wall_time_seconds: report.wall_time_seconds,
            timing: report.timing(),
            steps_file: STEPS_FILE.into(),
            cumulative_file: CUMULATIVE_FILE.into(),
            telemetry_file: TELEMETRY_FILE.into(),
        }
    }
}

/// One `(step, horizon, feature)` entry of the per-step CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: usize,
    pub horizon: usize,
    pub feature: String,
    pub prediction: f64,
    pub truth: f64,
    pub sq_err: f64,
    pub abs_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeRow {
    pub step: usize,
    pub cumulative_mse: f64,
}

/// Paths of the files written by [`write_run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub summary: PathBuf,
    pub steps: PathBuf,
    pub cumulative: PathBuf,
    pub telemetry: PathBuf,
}

impl RunArtifacts {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            summary: dir.join(SUMMARY_FILE),
            steps: dir.join(STEPS_FILE),
            cumulative: dir.join(CUMULATIVE_FILE),
            telemetry: dir.join(TELEMETRY_FILE),
        }
    }
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// A writer that has already emitted `header`; rows are written headerless so
/// empty files still carry their columns.
fn csv_writer<S: AsRef<str>>(path: &Path, header: &[S]) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    wtr.write_record(header.iter().map(|h| h.as_ref()))?;
    Ok(wtr)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv_reader(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Writes all four run artifacts into `dir`, creating it if needed.
pub fn write_run(report: &EvalReport, dir: &Path, source: &str, feature_names: &[String]) -> Result<RunArtifacts> {
    create_dir(dir)?;
    let paths = RunArtifacts::in_dir(dir);
    write_steps(&paths.steps, &report.records, feature_names)?;
    write_cumulative(&paths.cumulative, &report.records, &report.cumulative_mse)?;
    write_telemetry(&paths.telemetry, &report.telemetry)?;
    write_json(&paths.summary, &Summary::from_report(report, source))?;
    Ok(paths)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

pub fn load_summary(path: &Path) -> Result<Summary> {
    read_json(path)
}

pub fn write_steps(path: &Path, records: &[StepRecord], feature_names: &[String]) -> Result<()> {
    let mut wtr = csv_writer(path, &["step", "horizon", "feature", "prediction", "truth", "sq_err", "abs_err"])?;
    for rec in records {
        for h in 0..rec.matured_horizons() {
            for j in 0..rec.predictions.nrows() {
                let (pred, truth) = (rec.predictions[(j, h)], rec.truth[(j, h)]);
                let e = pred - truth;
                let name = feature_names.get(j).cloned().unwrap_or_else(|| format!("x{j}"));
                wtr.serialize(StepRow {
                    step: rec.step,
                    horizon: h + 1,
                    feature: name,
                    prediction: pred,
                    truth,
                    sq_err: e * e,
                    abs_err: e.abs(),
                })?;
            }
        }
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn load_steps(path: &Path) -> Result<Vec<StepRow>> {
    read_rows(path)
}

pub fn write_cumulative(path: &Path, records: &[StepRecord], curve: &[f64]) -> Result<()> {
    if records.len() != curve.len() {
        return Err(Error::Config(format!(
            "{} records but {} curve points",
            records.len(),
            curve.len()
        )));
    }
    let mut wtr = csv_writer(path, &["step", "cumulative_mse"])?;
    for (rec, &c) in records.iter().zip(curve) {
        wtr.serialize(CumulativeRow {
            step: rec.step,
            cumulative_mse: c,
        })?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn load_cumulative(path: &Path) -> Result<Vec<CumulativeRow>> {
    read_rows(path)
}

#[derive(Serialize, Deserialize)]
struct TelemetryRow {
    step: usize,
    spectral_radius: f64,
    condition_estimate: f64,
    rank: usize,
    max_imag_residue: f64,
    step_seconds: f64,
    moduli: String,
}

pub fn write_telemetry(path: &Path, telemetry: &[TelemetryRecord]) -> Result<()> {
    let mut wtr = csv_writer(
        path,
        &[
            "step",
            "spectral_radius",
            "condition_estimate",
            "rank",
            "max_imag_residue",
            "step_seconds",
            "moduli",
        ],
    )?;
    for t in telemetry {
        let moduli: Vec<String> = t.moduli.iter().map(|m| m.to_string()).collect();
        wtr.serialize(TelemetryRow {
            step: t.step,
            spectral_radius: t.spectral_radius,
            condition_estimate: t.condition_estimate,
            rank: t.rank,
            max_imag_residue: t.max_imag_residue,
            step_seconds: t.step_seconds,
            moduli: moduli.join(&LIST_SEP.to_string()),
        })?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn load_telemetry(path: &Path) -> Result<Vec<TelemetryRecord>> {
    let rows: Vec<TelemetryRow> = read_rows(path)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let moduli = if r.moduli.is_empty() {
                Vec::new()
            } else {
                r.moduli
                    .split(LIST_SEP)
                    .map(|m| {
                        m.parse::<f64>().map_err(|e| Error::Parse {
                            path: path.into(),
                            row: i + 2,
                            column: "moduli".into(),
                            message: e.to_string(),
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?
            };
            Ok(TelemetryRecord {
                step: r.step,
                spectral_radius: r.spectral_radius,
                condition_estimate: r.condition_estimate,
                rank: r.rank,
                max_imag_residue: r.max_imag_residue,
                step_seconds: r.step_seconds,
                moduli,
            })
        })
        .collect()
}

/// A score-table line as stored on disk: the searched fields only.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTableRow {
    pub index: usize,
    pub w: usize,
    pub d: usize,
    pub s: usize,
    pub gamma: f64,
    pub r: usize,
    pub fold_mse: Vec<Option<f64>>,
    pub mean_mse: Option<f64>,
    pub error: Option<String>,
}

impl From<&ScoreRow> for ScoreTableRow {
    fn from(row: &ScoreRow) -> Self {
        Self {
            index: row.index,
            w: row.config.w,
            d: row.config.d,
            s: row.config.s,
            gamma: row.config.gamma,
            r: row.config.r,
            fold_mse: row.fold_mse.clone(),
            mean_mse: row.mean_mse,
            error: row.error.clone(),
        }
    }
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Columns: `index, w, d, s, gamma, r, fold1_mse.., mean_mse, error`.
pub fn write_score_table(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    let folds = rows.iter().map(|r| r.fold_mse.len()).max().unwrap_or(0);
    let mut header: Vec<String> = ["index", "w", "d", "s", "gamma", "r"].map(String::from).to_vec();
    header.extend((1..=folds).map(|k| format!("fold{k}_mse")));
    header.extend(["mean_mse".to_string(), "error".to_string()]);
    let mut wtr = csv_writer(path, &header)?;
    for row in rows {
        let c = &row.config;
        let mut rec = vec![
            row.index.to_string(),
            c.w.to_string(),
            c.d.to_string(),
            c.s.to_string(),
            c.gamma.to_string(),
            c.r.to_string(),
        ];
        rec.extend((0..folds).map(|k| opt_cell(row.fold_mse.get(k).copied().flatten())));
        rec.push(opt_cell(row.mean_mse));
        rec.push(row.error.clone().unwrap_or_default());
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn load_score_table(path: &Path) -> Result<Vec<ScoreTableRow>> {
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers()?.clone();
    let folds = header.len().checked_sub(8).ok_or_else(|| Error::Data {
        path: path.into(),
        message: format!("score table needs at least 8 columns, found {}", header.len()),
    })?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = |k: usize| rec.get(k).unwrap_or("");
        let parse_err = |k: usize, msg: String| Error::Parse {
            path: path.into(),
            row: i + 2,
            column: header.get(k).unwrap_or("?").to_string(),
            message: msg,
        };
        let int = |k: usize| cell(k).parse::<usize>().map_err(|e| parse_err(k, e.to_string()));
        let real = |k: usize| cell(k).parse::<f64>().map_err(|e| parse_err(k, e.to_string()));
        let opt_real = |k: usize| if cell(k).is_empty() { Ok(None) } else { real(k).map(Some) };
        let fold_mse = (0..folds).map(|f| opt_real(6 + f)).collect::<Result<Vec<_>>>()?;
        let error = cell(7 + folds);
        out.push(ScoreTableRow {
            index: int(0)?,
            w: int(1)?,
            d: int(2)?,
            s: int(3)?,
            gamma: real(4)?,
            r: int(5)?,
            fold_mse,
            mean_mse: opt_real(6 + folds)?,
            error: (!error.is_empty()).then(|| error.to_string()),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: SweepParam,
    pub value: f64,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    pub error: Option<String>,
}

impl From<&SweepCell> for SweepRow {
    fn from(c: &SweepCell) -> Self {
        Self {
            parameter: c.param,
            value: c.value,
            horizon: c.horizon,
            mse: c.mse,
            mae: c.mae,
            error: c.error.clone(),
        }
    }
}

pub fn write_sweep_grid(path: &Path, cells: &[SweepCell]) -> Result<()> {
    let mut wtr = csv_writer(path, &["parameter", "value", "H", "mse", "mae", "error"])?;
    for c in cells {
        wtr.serialize(SweepRow::from(c))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn load_sweep_grid(path: &Path) -> Result<Vec<SweepRow>> {
    read_rows(path)
}
