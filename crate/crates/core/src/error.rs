use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("mode {0} is not registered")]
    UnregisteredMode(usize),
    #[error("mode `{name}` has the wrong kind: expected {expected}")]
    ModeKind {
        name: String,
        expected: &'static str,
    },
    #[error("states belong to different mode registries")]
    RegistryMismatch,
    #[error("cannot normalize a zero-norm state")]
    Normalization,
    #[error("protocol sequencing error: {0}")]
    Sequencing(String),
    #[error("stage `{stage}` exhausted {attempts} attempts without a herald")]
    AttemptsExhausted { stage: String, attempts: u64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
