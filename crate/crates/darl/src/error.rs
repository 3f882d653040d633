use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. Variants map onto the failure classes the
/// pipeline distinguishes: bad inputs, shape mismatches, and numerical
/// blow-ups (the latter get their own CLI exit code).
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed csv: {0}")]
    Csv(String),

    #[error("ingestion: {0}")]
    Ingest(String),

    #[error("ticker {ticker} rejected: {missing_pct:.1}% missing exceeds the {limit_pct:.1}% limit")]
    TickerRejected {
        ticker: String,
        missing_pct: f64,
        limit_pct: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("episode is done; reset before stepping")]
    EpisodeDone,
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
