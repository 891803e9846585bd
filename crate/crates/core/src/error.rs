use thiserror::Error;

/// Errors raised by the simulator and the estimation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is not Hermitian (max |A - A^H| = {deviation:.3e})")]
    NonHermitian { deviation: f64 },

    #[error("bin {index} has zero probability but derivative {derivative:.3e}")]
    DegenerateBin { index: usize, derivative: f64 },

    #[error("probability derivative does not sum to zero (sum = {sum:.3e})")]
    InvalidDerivative { sum: f64 },

    #[error("Fisher information vanishes on every scan point")]
    FlatInformation,

    #[error("integration failed: {reason} (dt = {dt:.3e}, last refinement difference = {difference:.3e})")]
    Integration {
        reason: String,
        dt: f64,
        difference: f64,
    },

    #[error("{atoms} atoms exceed the full-basis cap of {cap}")]
    TooManyAtoms { atoms: usize, cap: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate abscissae in linear fit")]
    DegenerateFit,

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
