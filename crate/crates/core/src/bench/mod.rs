//! Synthetic workloads and the retrieval timing harness.

mod config;
mod fprate;
mod harness;
mod synth;
mod workload;

use thiserror::Error;

pub use config::{parse_config, BenchConfig};
pub use fprate::{fp_rate_experiment, full_bucket_match_rate, FpRateParams, FpRateResult};
pub use harness::{read_report, run_benchmark, write_report, write_report_to, Algorithm, BenchOptions, BenchReport, BenchRow, REPORT_HEADER};
pub use synth::{synth_forest, ForestSpec};
pub use workload::{gen_workload, Query, WorkloadSpec};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("cannot sample queries from an empty forest")]
    EmptyForest,
    #[error("index: {0}")]
    Index(#[from] crate::index::IndexError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: std::path::PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("line {line}: {message}")]
    Config { line: usize, message: String },
}
