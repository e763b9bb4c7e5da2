use alloc::string::String;
use core::fmt;

/// Failure modes shared by every solver in the crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Dimensions of the inputs do not agree.
    Shape(String),
    /// A parameter is outside its admissible range.
    InvalidParameter(String),
    /// Input contains NaN or infinity.
    NonFinite(String),
    /// The problem has no feasible point (for example single-class labels).
    Infeasible(String),
    /// A matrix that must be positive semidefinite is not.
    Conditioning(String),
    /// The requested computation exceeds the configured resource budget.
    Capacity(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(m) => write!(f, "shape mismatch: {m}"),
            Error::InvalidParameter(m) => write!(f, "invalid parameter: {m}"),
            Error::NonFinite(m) => write!(f, "non-finite input: {m}"),
            Error::Infeasible(m) => write!(f, "infeasible: {m}"),
            Error::Conditioning(m) => write!(f, "ill-conditioned: {m}"),
            Error::Capacity(m) => write!(f, "capacity exceeded: {m}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
