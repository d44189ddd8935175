use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssistError {
    /// A scenario invariant does not hold; `path` names the offending field.
    #[error("invalid scenario at `{path}`: {msg}")]
    InvalidScenario { path: String, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown goal `{0}`")]
    UnknownGoal(String),

    /// Every remaining robot goal is restricted for the given user goal.
    #[error("deadlock: no permitted robot goal for user goal `{0}`")]
    Deadlock(String),

    #[error("value iteration did not converge within {0} sweeps")]
    NonConvergence(usize),

    #[error("instance too large to enumerate: {0}")]
    SizeCap(String),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),
}

pub type Result<T> = std::result::Result<T, AssistError>;

pub(crate) fn invalid(path: impl Into<String>, msg: impl Into<String>) -> AssistError {
    AssistError::InvalidScenario {
        path: path.into(),
        msg: msg.into(),
    }
}
