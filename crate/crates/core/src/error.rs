use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("need more observations than components (n = {n}, m = {m})")]
    TooFewObservations { n: usize, m: usize },

    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error("matrix power does not exist: {0}")]
    PowerDoesNotExist(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("complete separation: coefficient {index} diverged to {value:.3} (gradient {gradient:.2e})")]
    Separation { index: usize, value: f64, gradient: f64 },

    #[error("monotone partial likelihood: coefficient {index} diverged to {value:.3} (gradient {gradient:.2e})")]
    MonotoneLikelihood { index: usize, value: f64, gradient: f64 },

    #[error("no events in survival outcome")]
    NoEvents,

    #[error("class {0} has no observations")]
    EmptyClass(usize),

    #[error("too many failures in {stage}: {failed} of {total} exceeded the {cap:.0}% cap")]
    TooManyFailures {
        stage: String,
        failed: usize,
        total: usize,
        cap: f64,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: String,
        message: String,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerical procedures, as opposed to bad
    /// input or malformed files.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Degenerate(_)
                | Error::PowerDoesNotExist(_)
                | Error::Singular(_)
                | Error::Separation { .. }
                | Error::MonotoneLikelihood { .. }
                | Error::NoEvents
                | Error::EmptyClass(_)
                | Error::TooManyFailures { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Parse {
            line,
            column: String::new(),
            message: e.to_string(),
        }
    }
}
