use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("forward cache does not belong to these parameters: {0}")]
    StaleCache(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("malformed {what} at byte offset {offset}: {reason}")]
    Format {
        what: &'static str,
        offset: u64,
        reason: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Divergence { epoch: usize, reason: String },

    #[error("run {run}: {source}")]
    Run {
        run: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(
    context: &'static str,
    expected: impl ToString,
    found: impl ToString,
) -> Result<T> {
    Err(Error::Shape {
        context,
        expected: expected.to_string(),
        found: found.to_string(),
    })
}
