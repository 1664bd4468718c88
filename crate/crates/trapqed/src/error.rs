//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by basis construction, operator assembly and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("Hilbert-space dimension overflow: (2*{n_vib})^{n_atoms} exceeds usize")]
    DimensionOverflow { n_atoms: usize, n_vib: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("3D dipole-dipole kernel is singular at zero separation")]
    SingularKernel,

    #[error("coincident trap centers for atoms {0} and {1} in 3D geometry")]
    CoincidentCenters(usize, usize),

    #[error(
        "sine kernel argument changes sign across the DVR node excursions \
         (atoms {0} and {1}); operator ordering of |s| is undefined here"
    )]
    SignFlip(usize, usize),

    #[error("singular steady-state system: {nullity} dark direction(s) detected")]
    SingularSteadyState { nullity: usize },

    #[error("linear system is singular (zero pivot at column {0})")]
    SingularSystem(usize),

    #[error("eigensolver failed to converge after {0} iterations")]
    EigenNonConvergence(usize),

    #[error("transmission operators are undefined for zero Rabi frequency")]
    ZeroRabi,

    #[error("operation requires {expected:?} geometry")]
    WrongGeometry { expected: &'static str },

    #[error("quadrature average did not converge: doubling the order changed the result by {0}")]
    QuadratureNotConverged(f64),

    #[error("missing DVR grid for atom {0}")]
    MissingGrid(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
