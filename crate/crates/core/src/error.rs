use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("undefined projection: cannot project the zero vector onto a sphere")]
    UndefinedProjection,

    #[error("entropy singularity: overlap q = {q} is outside the admissible domain")]
    EntropySingularity { q: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error(
        "secular equation did not converge after {iterations} iterations \
         (bracket mu in [{mu_lo:e}, {mu_hi:e}], norm gap {norm_gap:e})"
    )]
    SecularNonConvergence {
        mu_lo: f64,
        mu_hi: f64,
        iterations: usize,
        norm_gap: f64,
    },

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("all {restarts} restarts failed to ascend: {detail}")]
    OptimizationFailed { restarts: usize, detail: String },

    #[error(
        "fixed point inconsistency: closed form {closed_form} vs iteration {iterated} \
         (difference {difference:e})"
    )]
    FixedPointInconsistency {
        closed_form: f64,
        iterated: f64,
        difference: f64,
    },

    #[error("all Monte Carlo weights underflowed; use a larger noise level or a smaller dimension")]
    WeightUnderflow,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
