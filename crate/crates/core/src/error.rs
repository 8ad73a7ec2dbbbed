use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SummError {
    /// A caller-supplied argument violated a precondition.
    #[error("invalid input: {0}")]
    Input(String),

    /// A summary domain or enumeration grew past a representable or configured size.
    #[error("{what} is too large ({magnitude})")]
    Sizing { what: String, magnitude: String },

    /// Malformed dataset or spec document.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Well-formed input whose content cannot be used.
    #[error("data error: {0}")]
    Data(String),

    /// A configuration (split, grid, search) cannot be satisfied.
    #[error("configuration error: {0}")]
    Config(String),

    /// Broken internal invariant, e.g. a counted cell without a parameter.
    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl SummError {
    pub(crate) fn sizing(what: impl Into<String>, magnitude: impl ToString) -> Self {
        SummError::Sizing {
            what: what.into(),
            magnitude: magnitude.to_string(),
        }
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            SummError::Input(_) => "input",
            SummError::Sizing { .. } => "sizing",
            SummError::Parse { .. } => "parse",
            SummError::Data(_) => "data",
            SummError::Config(_) => "config",
            SummError::Internal(_) => "internal",
            SummError::Io(_) => "io",
        }
    }

    /// Prefix the message with context, keeping the variant.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            SummError::Input(m) => SummError::Input(format!("{ctx}: {m}")),
            SummError::Sizing { what, magnitude } => SummError::Sizing {
                what: format!("{ctx}: {what}"),
                magnitude,
            },
            SummError::Parse { line, message } => SummError::Parse {
                line,
                message: format!("{ctx}: {message}"),
            },
            SummError::Data(m) => SummError::Data(format!("{ctx}: {m}")),
            SummError::Config(m) => SummError::Config(format!("{ctx}: {m}")),
            SummError::Internal(m) => SummError::Internal(format!("{ctx}: {m}")),
            SummError::Io(m) => SummError::Io(format!("{ctx}: {m}")),
        }
    }
}

impl From<std::io::Error> for SummError {
    fn from(e: std::io::Error) -> Self {
        SummError::Io(e.to_string())
    }
}

pub type Result<T, E = SummError> = std::result::Result<T, E>;
