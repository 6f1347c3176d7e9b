//! Experiment runner behind the `drsel` binary.

pub mod bench;
pub mod run;
pub mod spec;
pub mod sweep;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad spec, config or flags; exit status 2.
    #[error("{0}")]
    Config(String),
    /// Anything that fails after the inputs were accepted; exit status 3.
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}
