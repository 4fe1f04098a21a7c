use thiserror::Error;

#[derive(Debug, Error)]
pub enum TeraError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid tensorization scheme: {0}")]
    Scheme(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("SVD did not converge for a {rows}x{cols} matrix")]
    SvdNonConvergence { rows: usize, cols: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TeraError>;
