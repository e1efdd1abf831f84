use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("shape {shape:?} does not match {len} values")]
    Length { shape: Vec<usize>, len: usize },

    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("no gradient for parameter `{0}`")]
    MissingGradient(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("{0}")]
    Contract(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
