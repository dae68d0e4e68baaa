use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FracError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("h'' is singular at z = {z} for s = {s}")]
    SingularPoint { s: f64, z: f64 },

    #[error("root finding did not converge: bracket [{lo:e}, {hi:e}], residual {residual:e}")]
    RootNotConverged { lo: f64, hi: f64, residual: f64 },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("ellipticity violated at node {node}: eigenvalues [{min_eig}, {max_eig}] not within [{lambda}, {cap}]")]
    Ellipticity {
        node: usize,
        min_eig: f64,
        max_eig: f64,
        lambda: f64,
        cap: f64,
    },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("experiment failed: {0}")]
    Experiment(String),
}

impl FracError {
    /// True for errors caused by bad input rather than numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            FracError::InvalidParameter(_) | FracError::Precondition(_) | FracError::Ellipticity { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, FracError>;
