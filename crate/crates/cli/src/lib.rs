//! Command implementations behind the `spikegrad` binary.

pub mod commands;
pub mod config;
pub mod presets;

pub use commands::{
    cmd_analyze, cmd_eval, cmd_gen_synthetic, cmd_train, AnalyzeMode, TrainSummary,
};
pub use config::RunConfig;

/// Exit code 2 for configuration problems, 1 for everything else.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] spikegrad::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}
