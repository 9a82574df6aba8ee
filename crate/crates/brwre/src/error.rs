use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    /// theta*kappa'(theta) - kappa(theta) stays negative on the whole
    /// expandable bracket; the tilt parameter does not exist for this model.
    #[error("no interior minimizer: {0}")]
    NoInteriorMinimizer(String),
    #[error("numeric overflow: {0}")]
    Numeric(String),
    /// Estimates exist but too many cells dropped / spread too large.
    #[error("under-resolved: {0}")]
    UnderResolved(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("report error: {0}")]
    Report(String),
}

impl Error {
    /// CLI exit code: 2 config, 3 under-resolved, 4 resource, 5 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::NoInteriorMinimizer(_) | Error::Numeric(_) => 2,
            Error::UnderResolved(_) => 3,
            Error::Resource(_) => 4,
            Error::Io(_) | Error::Report(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
