use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("singular projection at theta = {theta}: denominator {denominator:e} <= guard {guard:e}")]
    SingularProjection {
        theta: f64,
        denominator: f64,
        guard: f64,
    },
    #[error("no projection found: Newton failed from every bracket")]
    NoProjectionFound,
    #[error("solver initialization failed: residual norm {residual:e} never dropped below 1e-2")]
    InitializationFailed { residual: f64 },
    #[error("non-finite stationarity residual")]
    NonFiniteResidual,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("race failed at t = {time} s: {source}")]
    RaceFailed {
        time: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("incomplete races: {0}")]
    IncompleteRaces(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::SingularProjection { .. } => "SingularProjection",
            Error::NoProjectionFound => "NoProjectionFound",
            Error::InitializationFailed { .. } => "InitializationFailed",
            Error::NonFiniteResidual => "NonFiniteResidual",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::RaceFailed { source, .. } => source.kind(),
            Error::IncompleteRaces(_) => "IncompleteRaces",
            Error::SchemaMismatch(_) => "SchemaMismatch",
            Error::Parse { .. } => "ParseError",
            Error::Config(_) => "ConfigError",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
