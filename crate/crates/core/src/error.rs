use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("facility `{name}` at ({lat}, {lon}) projects outside the grid")]
    Projection { name: String, lat: f64, lon: f64 },

    #[error("episode is over; call reset before stepping again")]
    EpisodeOver,

    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },

    #[error("unknown agent `{0}`")]
    UnknownAgent(String),

    #[error("invalid action code {0}; expected 0..=4")]
    InvalidAction(i64),

    #[error("missing action for agent `{0}`")]
    MissingAction(String),

    #[error("policy failed at step {step}: {message}")]
    Policy { step: u32, message: String },

    #[error("corrupt trace record at line {line}: {message}")]
    CorruptTrace { line: usize, message: String },

    #[error("trace version mismatch: {0}")]
    TraceVersion(String),

    #[error("cannot summarize an empty result set")]
    EmptyResults,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation { field: field.into(), message: message.into() }
    }

    /// True for errors caused by bad input configuration rather than a
    /// runtime failure.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Parse { .. } | Error::Validation { .. } | Error::Projection { .. })
    }
}
