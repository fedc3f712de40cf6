use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not skew-symmetric (defect {defect:e})")]
    NotSkew { defect: f64 },

    #[error("operator is not positive definite: {0}")]
    Definiteness(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("frame is not orthonormal (defect {defect:e})")]
    NotOrthonormal { defect: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unsupported inertia specification: {0}")]
    UnsupportedSpec(String),

    #[error("step size underflow at t = {t} (h = {h:e})")]
    Stiffness { t: f64, h: f64 },

    #[error("constraint drift {defect:e} exceeds limit at t = {t}")]
    ConstraintDrift { t: f64, defect: f64 },

    #[error("degenerate tangent basis: {0}")]
    DegenerateBasis(String),

    #[error("field evaluation failed at t = {t}: {source}")]
    Integration { t: f64, source: Box<Error> },
}

impl Error {
    /// True for errors caused by the numerical state (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Definiteness(_)
                | Error::Singular(_)
                | Error::Stiffness { .. }
                | Error::ConstraintDrift { .. }
                | Error::DegenerateBasis(_)
                | Error::Integration { .. }
        )
    }
}
