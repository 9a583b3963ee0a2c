use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-range caller input.
    #[error("invalid input: {0}")]
    Input(String),

    /// Schema violation while loading a file; `pointer` is a JSON pointer.
    #[error("invalid input at {pointer}: {message}")]
    Schema { pointer: String, message: String },

    /// An exhaustive routine was asked to enumerate more than it allows.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// The operation's precondition does not hold (e.g. rounding a cyclic support).
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("degenerate instance: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn schema(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) | Error::Schema { .. } | Error::Precondition(_) | Error::Io(_) => 2,
            Error::Infeasible(_) | Error::Degenerate(_) => 3,
            Error::Capacity(_) => 4,
            Error::Numeric(_) => 5,
        }
    }
}
