use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The advanced flow map folded over at some node (det ∇X ≤ 0). Usually
    /// means `dt` is too large for the current velocity gradients.
    #[error("flow map lost bijectivity at node {node} (det = {det:e})")]
    BijectivityLost { node: usize, det: f64 },

    #[error("map inversion did not converge at node {node} (residual = {residual:e})")]
    NoConvergence { node: usize, residual: f64 },

    #[error("step {step} (replica {replica}, copy {copy}): {source}")]
    Step {
        step: u64,
        replica: usize,
        copy: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {field}: {constraint}")]
    Config { field: String, constraint: String },

    #[error("grid mismatch: expected n = {expected}, found n = {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("bad snapshot {}: {reason}", path.display())]
    Snapshot { path: PathBuf, reason: String },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            constraint: constraint.into(),
        }
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::BijectivityLost { .. } => "bijectivity_lost",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Step { source, .. } => source.kind(),
            Error::Config { .. } => "config",
            Error::GridMismatch { .. } => "grid_mismatch",
            Error::Snapshot { .. } => "snapshot",
            Error::Checkpoint(_) => "checkpoint",
            Error::NonFinite(_) => "non_finite",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
