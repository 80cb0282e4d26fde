use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unknown preset `{name}`; valid presets are: {valid}")]
    UnknownPreset { name: String, valid: String },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("two-cluster sparsity needs exactly 2 components (got {0}); use sparsity_hg instead")]
    NotTwoCluster(usize),

    #[error("point is off the embedded manifold (residual norm {residual:e})")]
    OffManifold { residual: f64 },

    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),

    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("invalid sweep specification: {0}")]
    InvalidSpec(String),

    #[error("unknown factor `{0}`; expected one of prior, mu1, sigma_pair")]
    UnknownFactor(String),

    #[error("every grid point failed ({0} points)")]
    AllPointsFailed(usize),

    #[error("dataset schema: {0}")]
    Schema(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
