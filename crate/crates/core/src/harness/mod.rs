//! Benchmark harness: dataset ingestion, session execution with resumable
//! trace persistence, the frames metric, per-category runtime/call/token
//! accounting, and report assembly.

mod bench;
mod config;
mod dataset;
mod inspect;
mod metrics;
mod report;

pub use bench::{run_benchmark, BenchOutcome};
pub use config::{load_config, parse_config, BackendKind, EngineConfig};
pub use dataset::{load_dataset, Sample};
pub use inspect::inspect_trace;
pub use metrics::{frames_metric, judge_answer};
pub use report::{build_report, render_table, Report, SampleRow};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("dataset row {row}: {message}")]
    ParseError { row: usize, message: String },
    #[error("duplicate sample id {id:?} at row {row}")]
    DuplicateId { row: usize, id: String },
    #[error("answer {answer} out of range for {count} options")]
    OutOfRange { answer: usize, count: usize },
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error(transparent)]
    Trace(#[from] crate::trace::TraceError),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
