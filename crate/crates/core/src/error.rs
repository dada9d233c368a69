use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time index {t} out of range (need {min} <= t <= {max})")]
    IndexOutOfRange { t: usize, min: usize, max: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("matrix is identically zero in {0}")]
    ZeroMatrix(&'static str),

    #[error("rank collapsed below 1 in {0}")]
    RankCollapse(&'static str),

    #[error("update is numerically singular (reciprocal condition {reciprocal_condition:e})")]
    SingularUpdate { reciprocal_condition: f64 },

    #[error("operator state became non-finite after update {step}; rebuild by batch")]
    ReinitRequired { step: u64 },

    #[error("eigenvector matrix is numerically singular (condition estimate {condition:e})")]
    SingularEigenvectors { condition: f64 },

    #[error("{0} did not converge")]
    NoConvergence(&'static str),

    #[error("linear system is unstable (spectral radius {spectral_radius} > {limit})")]
    Unstable { spectral_radius: f64, limit: f64 },

    #[error("matrix is not positive definite in {0}")]
    NotPositiveDefinite(&'static str),
}

pub(crate) fn ensure_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
