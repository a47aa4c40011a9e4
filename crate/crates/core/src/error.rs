use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid weights: {0}")]
    Weights(String),

    #[error("covariates are not centered: weighted mean norm {0:e}")]
    NotCentered(f64),

    #[error("covariate second moment is degenerate: smallest eigenvalue {lambda:e} below tolerance {tol:e}")]
    DegenerateCovariates { lambda: f64, tol: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("coupling puts mass {mass:e} on atom pair ({i}, {j}) where the product measure vanishes")]
    Infeasible { i: usize, j: usize, mass: f64 },

    #[error("Newton solve for row {row} did not converge after {iters} iterations (residual {residual:e})")]
    NewtonDiverged {
        row: usize,
        iters: usize,
        residual: f64,
    },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
