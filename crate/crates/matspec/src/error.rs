//! Crate-wide error type.

/// Errors produced by validation, numerical preconditions, and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix is not Hermitian: max |H[{row}][{col}] - conj(H[{col}][{row}])| = {max_asymmetry:.3e}")]
    NotHermitian {
        max_asymmetry: f64,
        row: usize,
        col: usize,
    },

    #[error(
        "matrix is not positive semidefinite: eigenvalue {eigenvalue:.6e} below -{tolerance:.3e}"
    )]
    NotPsd { eigenvalue: f64, tolerance: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precision limit: {0}")]
    Precision(String),

    #[error("ill-conditioned {context}: condition number {cond:.3e}")]
    IllConditioned { context: String, cond: f64 },

    #[error("extrapolation did not converge: {0}")]
    NonConvergent(String),

    #[error("quadrature failed in {context}: error estimate {estimate:.3e}")]
    Quadrature { context: String, estimate: f64 },

    #[error("evaluation error at x = {location}: {context}")]
    Evaluation { location: f64, context: String },

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("exceptional point at x = {x}: {context}")]
    ExceptionalPoint { x: f64, context: String },

    #[error("tag family does not span: {0}")]
    SpanningFailure(String),

    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error("scenario generation failed after {retries} retries (seed {seed}): {context}")]
    Generation {
        retries: u32,
        seed: u64,
        context: String,
    },

    #[error("sample budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
