use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op} expects a 2-D tensor, got shape {shape:?}")]
    NotMatrix { op: &'static str, shape: Vec<usize> },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("token id {token} is outside the vocabulary (size {vocab})")]
    OutOfVocab { token: usize, vocab: usize },
    #[error("sequence of length {len} exceeds context length {context}")]
    ContextOverflow { len: usize, context: usize },
    #[error("layer index {index} out of range for a {n_layers}-layer model")]
    LayerIndex { index: usize, n_layers: usize },
    #[error("rotary embedding needs an even head dimension, got {0}")]
    OddHeadDim(usize),
    #[error("non-finite value in {name}")]
    NonFinite { name: String },
    #[error("loss became non-finite at step {step}")]
    Diverged { step: usize },
    #[error("reference L-inf difference at n={n} is zero; cannot normalize")]
    DegenerateReference { n: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the numbers themselves (NaN/Inf), as
    /// opposed to bad input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::Diverged { .. })
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("magic mismatch: expected \"COGCKPT1\", found {found:?}")]
    BadMagic { found: Vec<u8> },
    #[error("truncated file: needed {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("tensor {name}: header shape {header:?} does not match model shape {expected:?}")]
    ShapeMismatch {
        name: String,
        header: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("tensor {name}: dtype {found} does not match model precision {expected}")]
    Dtype {
        name: String,
        found: String,
        expected: String,
    },
    #[error("tensor {0} missing from checkpoint")]
    MissingTensor(String),
    #[error("unexpected tensor {0} in checkpoint")]
    UnknownTensor(String),
}
