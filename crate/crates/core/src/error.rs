use thiserror::Error;

/// Errors shared across the estimation pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("state outside phase space: {0}")]
    Domain(String),

    #[error("unsupported system for this operation: {0}")]
    Unsupported(String),

    #[error("insufficient data: need {needed}, have {have}{}", context_suffix(.context))]
    InsufficientData {
        needed: usize,
        have: usize,
        context: String,
    },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("value outside interpolable range: {0}")]
    Range(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn fit(msg: impl Into<String>) -> Self {
        Error::Fit(msg.into())
    }

    pub fn insufficient(needed: usize, have: usize, context: impl Into<String>) -> Self {
        Error::InsufficientData {
            needed,
            have,
            context: context.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
