//! Experiment harness: configuration, seed fan-out, artifact layout, and
//! baseline agents.

pub mod baselines;
pub mod config;
pub mod contribution;
pub mod metrics;
pub mod runner;

pub use baselines::{run_mfec, run_random, MfecAgent, MfecConfig};
pub use config::{resolve_out_dir, AgentKind, ExperimentConfig, ResolvedExperiment, Task};
pub use contribution::{contribution_metric, running_contribution, TracePoint};
pub use metrics::{
    read_episodes_csv, read_steps_csv, Aggregate, Manifest, SeedSummary, Summary,
    CSV_SCHEMA_VERSION, EPISODES_HEADER, STEPS_HEADER,
};
pub use runner::{
    build_env, render_summary, run_experiment, run_seed, summarize_dir, SeedOutcome,
    SummarizeReport,
};

use crate::agent::AgentError;
use crate::diffnum::DiffnumError;

#[derive(thiserror::Error, Debug)]
pub enum HarnessError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config field {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("malformed csv {path} line {line}: {reason}")]
    Csv {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("contribution trace is empty")]
    EmptyTrace,
    #[error("summary mismatch: {0}")]
    SummaryMismatch(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Graph(#[from] DiffnumError),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 1 for runtime
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Parse(_) | HarnessError::InvalidConfig { .. } => 2,
            HarnessError::Agent(AgentError::InvalidConfig { .. }) => 2,
            _ => 1,
        }
    }
}
