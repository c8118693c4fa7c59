//! Batch front end for the `uav-wpcn` planner: loads scenario files, runs
//! the solvers and writes reports, trajectories, schedules and traces.

pub mod commands;
pub mod output;
pub mod scenario;

pub use commands::{Artifacts, Context, Flags, Method, SweepRow, Trace};
pub use scenario::{ScenarioFile, SolverOverrides};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error(transparent)]
    Core(#[from] uav_wpcn::error::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Process exit code: 2 for unusable input, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            _ => 1,
        }
    }
}

/// Exit code for a run that finished but whose solver stopped before
/// reaching its tolerance.
pub const EXIT_NOT_CONVERGED: i32 = 3;
