//! Command-line front end. Exit codes: 0 success, 1 runtime failure, 2 usage.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use workdmd_core::series::RawSeries;

use crate::config::{FrequencyVariance, Method, MetricsSpace, RunConfig};
use crate::error::{Error, Result};
use crate::ingest::{load_csv, SynthPreset, TimestampColumn};
use crate::oracle::{compare_oracle, OracleConfig, OracleStream};
use crate::pipeline::run_method;
use crate::report::{self, read_json, write_json};
use crate::tune::{random_search, sensitivity_sweep, SearchSpace, SweepParam, SweepSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const DEFAULT_SYNTH_LEN: usize = 2000;

#[derive(Debug, Parser)]
#[command(name = "workdmd", version, about = "Windowed online random-kernel DMD forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Online evaluation of one configuration.
    Run(RunArgs),
    /// Random search with rolling cross-validation on the warm-up segment.
    Tune(TuneArgs),
    /// One-parameter sensitivity sweep across horizons.
    Sweep(SweepArgs),
    /// Recursive operator update versus batch solve.
    CompareOracle(OracleArgs),
}

/// Data source, hyperparameters and output shared by run, tune and sweep.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV dataset (header row; optional leading timestamp column).
    #[arg(long, conflicts_with = "synth")]
    pub data: Option<PathBuf>,
    /// Built-in synthetic stream.
    #[arg(long, value_enum)]
    pub synth: Option<SynthPreset>,
    /// Length of the synthetic stream.
    #[arg(long = "T")]
    pub len: Option<usize>,
    /// Sliding window length.
    #[arg(long)]
    pub w: Option<usize>,
    /// Delay-embedding depth.
    #[arg(long)]
    pub d: Option<usize>,
    /// Number of random Fourier features.
    #[arg(long)]
    pub s: Option<usize>,
    /// Gaussian kernel width.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Requested POD rank.
    #[arg(long)]
    pub r: Option<usize>,
    /// Forecast horizon in steps.
    #[arg(long = "H")]
    pub horizon: Option<usize>,
    /// Refit the decoder every N steps (0: never).
    #[arg(long)]
    pub decoder_period: Option<usize>,
    /// Recompute the POD basis every N steps.
    #[arg(long)]
    pub pod_period: Option<usize>,
    /// Rebuild the operator by batch every N slides (0: never).
    #[arg(long)]
    pub refresh_period: Option<usize>,
    /// Seed for the feature map.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub metrics_space: Option<MetricsSpace>,
    /// Fraction of the stream used for warm-up.
    #[arg(long)]
    pub warmup_ratio: Option<f64>,
    /// Ridge term relative to the Gram matrix norm.
    #[arg(long)]
    pub epsilon_scale: Option<f64>,
    /// Variance of the feature frequencies.
    #[arg(long, value_enum)]
    pub frequency_variance: Option<FrequencyVariance>,
    /// Forecaster to evaluate.
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Output directory for artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of sampled configurations.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Cross-validation folds.
    #[arg(long)]
    pub folds: Option<usize>,
    /// JSON search space; `--budget` and `--folds` override it.
    #[arg(long)]
    pub space: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Hyperparameter to vary.
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Comma-separated values for the swept parameter.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Comma-separated horizons.
    #[arg(long, value_delimiter = ',', default_values_t = crate::tune::SWEEP_HORIZONS)]
    pub horizons: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    /// Stream to replay.
    #[arg(long, value_enum, default_value = "three-feature")]
    pub stream: OracleStream,
    /// Number of slides to check.
    #[arg(long)]
    pub slides: Option<usize>,
    /// Sliding window length.
    #[arg(long)]
    pub w: Option<usize>,
    /// Delay-embedding depth.
    #[arg(long)]
    pub d: Option<usize>,
    /// Number of random Fourier features.
    #[arg(long)]
    pub s: Option<usize>,
    /// Gaussian kernel width.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Seed for the feature map.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ridge term relative to the Gram matrix norm.
    #[arg(long)]
    pub epsilon_scale: Option<f64>,
    /// Rebuild the operator by batch every N slides (0: never).
    #[arg(long)]
    pub refresh_period: Option<usize>,
    /// Maximum relative deviation that passes.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Write the report JSON here as well.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// The `--config` file: data source, run settings, output and method.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfigFile {
    pub data: Option<PathBuf>,
    pub synth: Option<SynthPreset>,
    #[serde(rename = "T")]
    pub len: Option<usize>,
    pub out: Option<PathBuf>,
    pub method: Option<Method>,
    pub w: Option<usize>,
    pub d: Option<usize>,
    pub s: Option<usize>,
    pub gamma: Option<f64>,
    pub r: Option<usize>,
    #[serde(rename = "H")]
    pub horizon: Option<usize>,
    pub decoder_period: Option<usize>,
    pub pod_period: Option<usize>,
    pub refresh_period: Option<usize>,
    pub seed: Option<u64>,
    pub metrics_space: Option<MetricsSpace>,
    pub warmup_ratio: Option<f64>,
    pub epsilon_scale: Option<f64>,
    pub frequency_variance: Option<FrequencyVariance>,
}

/// Where the series comes from, for loading and for the summary echo.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Csv(PathBuf),
    Synth { preset: SynthPreset, len: usize, seed: u64 },
}

impl Source {
    pub fn describe(&self) -> String {
        match self {
            Source::Csv(p) => p.display().to_string(),
            Source::Synth { preset, len, seed } => {
                let name = clap::ValueEnum::to_possible_value(preset).map(|v| v.get_name().to_string());
                format!("synth:{}:T={len}:seed={seed}", name.unwrap_or_default())
            }
        }
    }

    pub fn load(&self) -> Result<RawSeries> {
        match self {
            Source::Csv(p) => load_csv(p, TimestampColumn::Detect),
            Source::Synth { preset, len, seed } => preset.generate(*len, *seed),
        }
    }
}

/// Flags merged over the config file over defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub source: Option<Source>,
    pub run: RunConfig,
    pub method: Method,
    pub out: Option<PathBuf>,
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<Resolved> {
        let file = match &self.config {
            Some(path) => read_json::<CliConfigFile>(path).map_err(|e| match e {
                Error::Json(j) => Error::Config(format!("{}: {j}", path.display())),
                other => other,
            })?,
            None => CliConfigFile::default(),
        };
        let base = RunConfig::default();
        let run = RunConfig {
            w: self.w.or(file.w).unwrap_or(base.w),
            d: self.d.or(file.d).unwrap_or(base.d),
            s: self.s.or(file.s).unwrap_or(base.s),
            gamma: self.gamma.or(file.gamma).unwrap_or(base.gamma),
            r: self.r.or(file.r).unwrap_or(base.r),
            horizon: self.horizon.or(file.horizon).unwrap_or(base.horizon),
            decoder_period: self.decoder_period.or(file.decoder_period).unwrap_or(base.decoder_period),
            pod_period: self.pod_period.or(file.pod_period).unwrap_or(base.pod_period),
            refresh_period: self.refresh_period.or(file.refresh_period).unwrap_or(base.refresh_period),
            seed: self.seed.or(file.seed).unwrap_or(base.seed),
            metrics_space: self.metrics_space.or(file.metrics_space).unwrap_or(base.metrics_space),
            warmup_ratio: self.warmup_ratio.or(file.warmup_ratio).unwrap_or(base.warmup_ratio),
            epsilon_scale: self.epsilon_scale.or(file.epsilon_scale).unwrap_or(base.epsilon_scale),
            frequency_variance: self
                .frequency_variance
                .or(file.frequency_variance)
                .unwrap_or(base.frequency_variance),
        };
        run.validate()?;
        // a flag of either kind replaces both source fields from the file
        let (data, synth) = if self.data.is_some() || self.synth.is_some() {
            (self.data.clone(), self.synth)
        } else {
            (file.data, file.synth)
        };
        let source = match (data, synth) {
            (Some(_), Some(_)) => return Err(Error::Config("give either data or synth, not both".into())),
            (Some(p), None) => Some(Source::Csv(p)),
            (None, Some(preset)) => Some(Source::Synth {
                preset,
                len: self.len.or(file.len).unwrap_or(DEFAULT_SYNTH_LEN),
                seed: run.seed,
            }),
            (None, None) => None,
        };
        Ok(Resolved {
            source,
            run,
            method: self.method.or(file.method).unwrap_or_default(),
            out: self.out.clone().or(file.out),
        })
    }
}

impl Resolved {
    fn require_source(&self) -> Result<&Source> {
        self.source
            .as_ref()
            .ok_or_else(|| Error::Config("no input: pass --data or --synth".into()))
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    step: Option<usize>,
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: ErrorBody<'a>,
}

fn emit_error(err: &mut dyn Write, kind: &str, message: String, step: Option<usize>) {
    let body = ErrorJson {
        error: ErrorBody { kind, message, step },
    };
    let text = serde_json::to_string(&body).unwrap_or_else(|_| r#"{"error":{"kind":"internal"}}"#.into());
    let _ = writeln!(err, "{text}");
}

fn exit_code(e: &Error) -> i32 {
    if e.is_usage() {
        EXIT_USAGE
    } else {
        EXIT_RUNTIME
    }
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

/// Parses `args` (program name first) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return EXIT_OK;
            }
            emit_error(err, "usage", e.render().to_string().trim().to_string(), None);
            return EXIT_USAGE;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let step = match &e {
                Error::Step { step, .. } => Some(*step),
                _ => None,
            };
            emit_error(err, e.kind(), e.to_string(), step);
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Run(a) => cmd_run(&a, out),
        Command::Tune(a) => cmd_tune(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
        Command::CompareOracle(a) => cmd_compare_oracle(&a, out),
    }
}

fn out_dir(resolved: Option<&PathBuf>) -> PathBuf {
    resolved.cloned().unwrap_or_else(|| PathBuf::from("."))
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<i32> {
    let resolved = args.common.resolve()?;
    let source = resolved.require_source()?;
    let series = source.load()?;
    let (warm, _) = workdmd_core::series::split_warmup(&series, resolved.run.warmup_ratio)?;
    let rep = run_method(&series, warm.len(), &resolved.run, resolved.method)?;
    let dir = out_dir(resolved.out.as_ref());
    let paths = report::write_run(&rep, &dir, &source.describe(), series.feature_names())?;
    print_json(out, &report::load_summary(&paths.summary)?)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TuneOutput {
    pub best: RunConfig,
    pub best_index: usize,
    pub best_mean_mse: Option<f64>,
    pub evaluated: usize,
    pub failed: usize,
}

pub fn cmd_tune(args: &TuneArgs, out: &mut dyn Write) -> Result<i32> {
    let resolved = args.common.resolve()?;
    let series = resolved.require_source()?.load()?;
    let (warm, _) = workdmd_core::series::split_warmup(&series, resolved.run.warmup_ratio)?;
    let mut space: SearchSpace = match &args.space {
        Some(p) => read_json(p).map_err(|e| match e {
            Error::Json(j) => Error::Config(format!("{}: {j}", p.display())),
            other => other,
        })?,
        None => SearchSpace {
            seed: resolved.run.seed,
            ..Default::default()
        },
    };
    if let Some(b) = args.budget {
        space.budget = b;
    }
    if let Some(f) = args.folds {
        space.folds = f;
    }
    let result = random_search(&warm, &resolved.run, &space)?;
    let dir = out_dir(resolved.out.as_ref());
    report::create_dir(&dir)?;
    report::write_score_table(&dir.join("scores.csv"), &result.table)?;
    write_json(&dir.join("best_config.json"), &result.best)?;
    print_json(
        out,
        &TuneOutput {
            best: result.best.clone(),
            best_index: result.best_index,
            best_mean_mse: result.table[result.best_index].mean_mse,
            evaluated: result.table.len(),
            failed: result.table.iter().filter(|r| r.mean_mse.is_none()).count(),
        },
    )?;
    Ok(EXIT_OK)
}

pub fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<i32> {
    let resolved = args.common.resolve()?;
    let series = resolved.require_source()?.load()?;
    let spec = SweepSpec {
        horizons: args.horizons.clone(),
        ..SweepSpec::new(args.param, args.values.clone(), resolved.run.clone())
    };
    let cells = sensitivity_sweep(&series, &spec)?;
    let dir = out_dir(resolved.out.as_ref());
    report::create_dir(&dir)?;
    let path = dir.join(format!("sweep_{}.csv", args.param));
    report::write_sweep_grid(&path, &cells)?;
    let rows: Vec<report::SweepRow> = cells.iter().map(report::SweepRow::from).collect();
    print_json(out, &rows)?;
    if cells.iter().any(|c| c.succeeded()) {
        Ok(EXIT_OK)
    } else {
        Err(Error::AllFailed(format!("every cell of the {} sweep failed", args.param)))
    }
}

pub fn cmd_compare_oracle(args: &OracleArgs, out: &mut dyn Write) -> Result<i32> {
    let base = OracleConfig::default();
    let cfg = OracleConfig {
        stream: args.stream,
        w: args.w.unwrap_or(base.w),
        d: args.d.unwrap_or(base.d),
        s: args.s.unwrap_or(base.s),
        gamma: args.gamma.unwrap_or(base.gamma),
        slides: args.slides.unwrap_or(base.slides),
        seed: args.seed.unwrap_or(base.seed),
        epsilon_scale: args.epsilon_scale.unwrap_or(base.epsilon_scale),
        refresh_period: args.refresh_period.unwrap_or(base.refresh_period),
        frequency_variance: base.frequency_variance,
        tolerance: args.tolerance.unwrap_or(base.tolerance),
    };
    let rep = compare_oracle(&cfg)?;
    if let Some(dir) = &args.out {
        report::create_dir(dir)?;
        write_json(&dir.join("oracle.json"), &rep)?;
    }
    print_json(out, &rep)?;
    if rep.passed {
        Ok(EXIT_OK)
    } else {
        Err(Error::Step {
            step: rep.worst_step,
            source: workdmd_core::Error::InvalidParameter(format!(
                "deviation from batch solve above {:e}: P {:e}, A {:e} ({} rebuilds)",
                cfg.tolerance, rep.max_rel_dev_p, rep.max_rel_dev_a, rep.reinit_count
            )),
        })
    }
}

