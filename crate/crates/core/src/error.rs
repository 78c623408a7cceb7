use core::fmt;

/// Failure while constructing or transforming a model.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    /// A physical or design parameter is outside its valid range.
    InvalidParameter { name: &'static str, value: f64 },
    /// Matrix or vector dimensions do not line up.
    DimensionMismatch {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// A weight matrix failed its definiteness requirement.
    NotDefinite { name: &'static str },
    /// The (A, C) pair does not allow the requested observer design.
    Unobservable { rank: usize, required: usize },
    /// Requested observer poles are unusable.
    InvalidPoles(&'static str),
    /// A linear system that should be regular turned out singular.
    Singular(&'static str),
    /// Feature not covered by this implementation.
    Unsupported(&'static str),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::InvalidParameter { name, value } => {
                write!(f, "invalid parameter {name} = {value}")
            }
            ModelError::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(
                f,
                "dimension mismatch for {what}: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            ModelError::NotDefinite { name } => {
                write!(f, "{name} does not satisfy its definiteness requirement")
            }
            ModelError::Unobservable { rank, required } => write!(
                f,
                "pair is not observable: observability rank {rank} < {required}"
            ),
            ModelError::InvalidPoles(msg) => write!(f, "invalid observer poles: {msg}"),
            ModelError::Singular(what) => write!(f, "singular system in {what}"),
            ModelError::Unsupported(what) => write!(f, "unsupported: {what}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ModelError {}

pub(crate) fn check_dims(
    what: &'static str,
    expected: (usize, usize),
    found: (usize, usize),
) -> Result<(), ModelError> {
    if expected == found {
        Ok(())
    } else {
        Err(ModelError::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
