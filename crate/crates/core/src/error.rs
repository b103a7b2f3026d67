use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function it was passed to.
    #[error("domain error: {0}")]
    Domain(String),

    /// A test configuration violates one of its structural constraints.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing moment: {what} for m = {m}")]
    MissingMoment { what: &'static str, m: usize },

    #[error("malformed event system: {0}")]
    MalformedSystem(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    NonNumeric {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("zero pooled variance for gene(s): {}", .genes.join(", "))]
    ZeroVariance { genes: Vec<String> },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a failure while
    /// running; the CLI maps these to exit code 2.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::ZeroVariance { .. })
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
