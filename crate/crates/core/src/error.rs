use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("{n_sites} sites exceeds the dense oracle limit of {limit}")]
    OracleLimit { n_sites: usize, limit: usize },

    #[error("invalid Pauli label {0:?}")]
    InvalidLabel(String),

    #[error("observable has no terms")]
    EmptyObservable,

    #[error("identity string is not allowed here")]
    IdentityString,

    #[error("coefficient for {label} has imaginary part {imag:e} (operator not Hermitian)")]
    NonHermitian { label: String, imag: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("solver exhausted {max_steps} steps before reaching t = {t_end}")]
    StepLimit { max_steps: usize, t_end: f64 },

    #[error("step size underflow at t = {0}")]
    StepUnderflow(f64),

    #[error("malformed {what} at line {line}: {msg}")]
    Format {
        what: &'static str,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            what,
            line,
            msg: msg.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonHermitian { .. }
                | Error::NonFinite(_)
                | Error::StepLimit { .. }
                | Error::StepUnderflow(_)
        )
    }
}
