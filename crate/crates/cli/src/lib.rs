//! Command-line front end of the simulator: configuration files, scenario
//! presets and per-run metric export.

pub mod config;
pub mod export;
pub mod scenario;

pub use config::{parse_strategy, RunConfig, ScenarioOptions};
pub use scenario::{run_scenario, ArmResult, Scenario};

/// Failures of the command-line front end.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, missing file or a configuration value out of range.
    #[error("config error at {path}: {msg}")]
    Config { path: String, msg: String },
    /// A simulation step failed.
    #[error("simulation failed: {0}")]
    Sim(hflsim_core::Error),
    /// Writing results failed.
    #[error("cannot write {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Builds a configuration error.
    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        CliError::Config { path: path.into(), msg: msg.into() }
    }

    /// Process exit code: 2 for configuration problems, 3 for runtime faults.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Sim(_) | CliError::Io { .. } => 3,
        }
    }
}

impl From<hflsim_core::Error> for CliError {
    fn from(e: hflsim_core::Error) -> Self {
        match e {
            hflsim_core::Error::Config { path, msg } => CliError::Config { path, msg },
            other => CliError::Sim(other),
        }
    }
}
