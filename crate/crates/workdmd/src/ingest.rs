//! CSV datasets and named synthetic streams.

use std::f64::consts::PI;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use workdmd_core::series::{gen_synthetic, presets, RawSeries, SinusoidMix, SyntheticKind, SyntheticSpec, Tone};

use crate::error::{Error, Result};

const TIMESTAMP_HEADERS: [&str; 4] = ["date", "datetime", "time", "timestamp"];

const DATETIME_FORMATS: [&str; 4] = [
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%dT%H:%M:%S",
    "%Y/%m/%d %H:%M",
];

/// Whether the first column holds timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimestampColumn {
    Yes,
    No,
    /// Yes when the first header is one of `date`, `datetime`, `time`, `timestamp`.
    Detect,
}

/// Parses a timestamp cell into seconds since the Unix epoch.
///
/// Accepts integers (taken as-is), RFC 3339, and the common
/// `YYYY-MM-DD[ HH:MM[:SS]]` layouts used by benchmark CSVs.
pub fn parse_timestamp(cell: &str) -> Option<i64> {
    let cell = cell.trim();
    if let Ok(v) = cell.parse::<i64>() {
        return Some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(cell) {
        return Some(dt.timestamp());
    }
    for fmt in DATETIME_FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(cell, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(cell, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp())
}

/// Loads a header-first CSV into a feature-major series, preserving column order.
///
/// Empty cells are rejected: no imputation is attempted.
pub fn load_csv(path: impl AsRef<Path>, timestamps: TimestampColumn) -> Result<RawSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let data_err = |message: String| Error::Data {
        path: path.to_path_buf(),
        message,
    };
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(data_err("empty file (no header row)".into()));
    }
    let has_ts = match timestamps {
        TimestampColumn::Yes => true,
        TimestampColumn::No => false,
        TimestampColumn::Detect => TIMESTAMP_HEADERS.contains(&headers[0].to_ascii_lowercase().as_str()),
    };
    let first = usize::from(has_ts);
    let names = headers[first..].to_vec();
    if names.is_empty() {
        return Err(data_err("no feature columns".into()));
    }

    let mut stamps = Vec::new();
    let mut flat = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        // header is line 1
        let row = i + 2;
        if record.len() != headers.len() {
            return Err(data_err(format!(
                "row {row} has {} fields, header has {}",
                record.len(),
                headers.len()
            )));
        }
        if has_ts {
            let cell = &record[0];
            let ts = parse_timestamp(cell).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                row,
                column: headers[0].clone(),
                message: format!("cannot parse timestamp '{cell}'"),
            })?;
            stamps.push(ts);
        }
        for (k, name) in names.iter().enumerate() {
            let cell = record[first + k].trim();
            let message = if cell.is_empty() {
                Some("missing value".to_string())
            } else {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => {
                        flat.push(v);
                        None
                    }
                    _ => Some(format!("cannot parse '{cell}' as a finite number")),
                }
            };
            if let Some(message) = message {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    column: name.clone(),
                    message,
                });
            }
        }
    }
    let p = names.len();
    let t = flat.len() / p;
    if t == 0 {
        return Err(data_err("no data rows".into()));
    }
    let values = DMatrix::from_column_slice(p, t, &flat);
    if let Some(i) = stamps.windows(2).position(|w| w[1] <= w[0]) {
        return Err(data_err(format!(
            "timestamps not strictly increasing at row {}",
            i + 3
        )));
    }
    Ok(RawSeries::new(values, has_ts.then_some(stamps), names)?)
}

/// Writes a series as CSV, with a leading `timestamp` column when present.
pub fn write_csv(path: impl AsRef<Path>, series: &RawSeries) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let ts = series.timestamps();
    let mut header: Vec<String> = Vec::new();
    if ts.is_some() {
        header.push("timestamp".into());
    }
    header.extend(series.feature_names().iter().cloned());
    w.write_record(&header)?;
    for t in 0..series.len() {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        if let Some(ts) = ts {
            row.push(ts[t].to_string());
        }
        row.extend(series.values().column(t).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Named synthetic streams used by the CLI and the acceptance runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SynthPreset {
    /// One tone, period 24.
    Sinusoid,
    /// Tones of period 24 and 60.
    TwoTone,
    /// Product-modulated pair of tones (a nonlinear stream).
    Modulated,
    /// 2-D rotation by π/8 per step.
    Rotation,
    /// Period-24 tone whose mean jumps by 3 at mid-stream.
    RegimeShift,
    /// Three loosely coupled tones, one per feature, with light noise.
    ThreeFeature,
}

impl SynthPreset {
    pub fn spec(self, len: usize, seed: u64) -> SyntheticSpec {
        let mut spec = match self {
            SynthPreset::Sinusoid => presets::tones(&[24.0], len),
            SynthPreset::TwoTone => presets::tones(&[24.0, 60.0], len),
            SynthPreset::Modulated => SyntheticSpec {
                // sin(a) sin(b) = (cos(a-b) - cos(a+b)) / 2
                kind: SyntheticKind::SinusoidMix(SinusoidMix {
                    tones: vec![vec![
                        Tone::new(0.5, 1.0 / 24.0 - 1.0 / 60.0, PI / 2.0),
                        Tone::new(-0.5, 1.0 / 24.0 + 1.0 / 60.0, PI / 2.0),
                        Tone::new(0.3, 1.0 / 12.0, 0.0),
                    ]],
                    offsets: vec![0.0],
                }),
                len,
                noise_std: 0.0,
                seed,
            },
            SynthPreset::Rotation => presets::rotation(PI / 8.0, len),
            SynthPreset::RegimeShift => presets::mean_shift(24.0, 3.0, len / 2, len),
            SynthPreset::ThreeFeature => SyntheticSpec {
                kind: SyntheticKind::SinusoidMix(SinusoidMix {
                    tones: vec![
                        vec![Tone::new(1.0, 1.0 / 24.0, 0.0), Tone::new(0.3, 1.0 / 7.0, 0.4)],
                        vec![Tone::new(0.8, 1.0 / 30.0, 1.0)],
                        vec![Tone::new(0.5, 1.0 / 24.0, 2.0), Tone::new(0.5, 1.0 / 11.0, 0.0)],
                    ],
                    offsets: vec![0.0, 1.0, -0.5],
                }),
                len,
                noise_std: 0.05,
                seed,
            },
        };
        spec.seed = seed;
        spec
    }

    pub fn generate(self, len: usize, seed: u64) -> Result<RawSeries> {
        Ok(gen_synthetic(&self.spec(len, seed))?)
    }
}
