use thiserror::Error;

/// Errors raised by the numerical kernels, the tree and the FMM driver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FmmError {
    /// An argument lies outside the domain where the function is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Source and field rings coincide (or nearly so) and the kernel is singular.
    #[error("singular kernel: {0}")]
    Singular(String),

    /// A recursion lost all significant digits (underflow or overflow).
    #[error("precision loss: {0}")]
    PrecisionLoss(String),

    /// Adaptive quadrature did not reach its tolerance within the budget.
    #[error("quadrature did not converge: {0}")]
    Convergence(String),

    /// Invalid run or evaluation parameters.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for FmmError {
    fn from(e: std::io::Error) -> Self {
        FmmError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FmmError>;
