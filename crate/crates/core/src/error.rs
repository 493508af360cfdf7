use geomrl_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("degenerate frame: {0}")]
    DegenerateFrame(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl GeomError {
    /// Non-finite values anywhere in a forward or backward pass.
    pub fn is_numeric(&self) -> bool {
        matches!(self, GeomError::Tensor(TensorError::NonFinite { .. }))
    }
}

pub type Result<T, E = GeomError> = std::result::Result<T, E>;
