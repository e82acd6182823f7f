use std::fmt;

/// Errors raised anywhere in the navigation stack.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes are incompatible with an operation.
    Shape { op: &'static str, detail: String },
    /// A primitive name that the tape does not know.
    UnsupportedPrimitive(String),
    /// A call violated a documented precondition.
    Contract(String),
    /// A variable does not belong to the tape it was used with.
    Graph(String),
    /// A forward pass produced a NaN or infinity.
    NonFinite { what: &'static str, index: usize },
    /// Scene generation gave up after the retry budget.
    GenerationFailed { attempts: usize },
    /// Two points are not connected through free space.
    Unreachable,
    /// No start/target pair fits the requested difficulty band.
    TierInfeasible { tier: &'static str, attempts: usize },
    /// Malformed serialized input (scene, checkpoint, config).
    Parse(String),
    /// Configuration failed validation.
    Config(String),
    /// A checkpoint for a required configuration was not found.
    MissingCheckpoint(String),
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, detail } => write!(f, "{op}: dimension mismatch: {detail}"),
            Error::UnsupportedPrimitive(name) => write!(f, "unsupported primitive `{name}`"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Graph(msg) => write!(f, "graph error: {msg}"),
            Error::NonFinite { what, index } => {
                write!(f, "non-finite value in {what} at index {index}")
            }
            Error::GenerationFailed { attempts } => {
                write!(f, "scene generation failed after {attempts} attempts")
            }
            Error::Unreachable => write!(f, "target unreachable through free space"),
            Error::TierInfeasible { tier, attempts } => {
                write!(f, "no {tier} episode found after {attempts} attempts")
            }
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
            Error::Config(msg) => write!(f, "invalid config: {msg}"),
            Error::MissingCheckpoint(name) => write!(f, "missing checkpoint for config `{name}`"),
            Error::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Shape { op, detail: detail.into() }
}
