//! Evaluation harness around `workdmd-core`: dataset ingest, the online
//! protocol, batch DMD baseline, hyperparameter search, sensitivity sweeps,
//! report files and state checkpoints.

pub mod batch;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod ingest;
pub mod oracle;
pub mod pipeline;
pub mod report;
pub mod tune;

pub use config::{Method, MetricsSpace, RunConfig};
pub use error::{Error, Result};
pub use pipeline::{run_online, run_online_split, EvalReport};
