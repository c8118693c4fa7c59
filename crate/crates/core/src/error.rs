use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The schedule does not tile the flight period or disagrees with the
    /// trajectory it is paired with.
    #[error("structural mismatch: {0}")]
    Structure(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("allocation problem has no decision variables (zero hover budget and no flight slots)")]
    EmptyProblem,

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("solver failure: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;
