use thiserror::Error;

use crate::config::Scenario;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("{scenario} ({context}): {source}")]
    Scenario {
        scenario: Scenario,
        context: String,
        #[source]
        source: tsv_core::Error,
    },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("writing output: {0}")]
    Output(String),
}

impl LabError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config { .. } | LabError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

/// Attach scenario context to library errors.
pub(crate) trait Context<T> {
    fn context(self, scenario: Scenario, what: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for tsv_core::Result<T> {
    fn context(self, scenario: Scenario, what: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| LabError::Scenario { scenario, context: what(), source })
    }
}
