use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("case parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid network: {0}")]
    Validation(String),

    #[error("zero-impedance branch {from}-{to}")]
    ZeroImpedance { from: usize, to: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("power flow did not converge after {iterations} iterations (max mismatch {mismatch:.3e})")]
    NonConvergence { iterations: usize, mismatch: f64 },

    #[error("singular Jacobian at iteration {0}")]
    SingularJacobian(usize),

    #[error("{failed} of {total} snapshots failed to converge")]
    ConvergenceRate { failed: usize, total: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("non-finite {what} at epoch {epoch}, batch {batch}")]
    NonFinite { what: String, epoch: usize, batch: usize },

    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),

    #[error("all {0} search trials diverged")]
    SearchDiverged(usize),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
