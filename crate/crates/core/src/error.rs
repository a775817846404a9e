use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    NotSymmetric { max_asymmetry: f64, tol: f64 },
    NotPsd { min_eigenvalue: f64, tol: f64 },
    DimensionMismatch { expected: usize, got: usize },
    InvalidSpec(String),
    InvalidGrid(String),
    TooManyInvalidPaths { invalid: usize, total: usize },
    Misaligned(String),
    MissingAux(&'static str),
    /// The model has no closed-form characteristics.
    Structural(&'static str),
    TooFewLevels { needed: usize, got: usize },
    NotNested,
    InvalidArgument(String),
    /// No path ever reached the level that starts the strategy.
    NeverTriggered(String),
    /// Verdicts that contradict NFLVR => NA1 => NSA => NIP.
    ChainViolation(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NotSymmetric { max_asymmetry, tol } => {
                write!(f, "matrix not symmetric: max |c_ij - c_ji| = {max_asymmetry:e} > {tol:e}")
            }
            Error::NotPsd { min_eigenvalue, tol } => {
                write!(f, "matrix not positive semidefinite: eigenvalue {min_eigenvalue:e} < -{tol:e}")
            }
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::InvalidSpec(m) => write!(f, "invalid model spec: {m}"),
            Error::InvalidGrid(m) => write!(f, "invalid time grid: {m}"),
            Error::TooManyInvalidPaths { invalid, total } => {
                write!(f, "{invalid} of {total} paths invalid (more than 1%)")
            }
            Error::Misaligned(m) => write!(f, "inputs not aligned: {m}"),
            Error::MissingAux(name) => write!(f, "bundle lacks auxiliary series `{name}`"),
            Error::Structural(m) => write!(f, "structural model without closed-form characteristics: {m}"),
            Error::TooFewLevels { needed, got } => {
                write!(f, "need at least {needed} refinement levels, got {got}")
            }
            Error::NotNested => write!(f, "refinement grids are not nested"),
            Error::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            Error::NeverTriggered(m) => write!(f, "strategy never triggered: {m}"),
            Error::ChainViolation(m) => write!(f, "verdict chain violated: {m}"),
        }
    }
}

impl core::error::Error for Error {}
