use core::fmt;

/// Crate-wide error type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A caller-supplied argument violated a precondition.
    InvalidArgument(&'static str),
    /// Two inputs that must agree in dimension did not.
    DimensionMismatch { expected: usize, got: usize },
    /// The input is valid but degenerate (e.g. all-zero samples).
    DegenerateInput(&'static str),
    /// A numerical operation failed (factorization, non-finite values).
    Numerical(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::DegenerateInput(msg) => write!(f, "degenerate input: {msg}"),
            Error::Numerical(msg) => write!(f, "numerical error: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
