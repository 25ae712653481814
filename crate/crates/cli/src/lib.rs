//! Command-line pipeline: data generation, attack generation, training,
//! evaluation and the three-regime ablation.

pub mod commands;
pub mod config;
pub mod logging;
pub mod pipeline;

use std::fmt;

/// Process-level failure, mapped to an exit code.
#[derive(Debug)]
pub enum Failure {
    /// Invalid configuration or arguments. Exit code 2.
    Config(String),
    /// A pipeline stage failed at run time. Exit code 3.
    Stage { stage: &'static str, message: String },
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Stage { .. } => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Stage { stage, message } => write!(f, "stage '{stage}' failed: {message}"),
        }
    }
}

impl std::error::Error for Failure {}

/// Tags an error with the stage it came from. Core configuration errors stay
/// configuration errors.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T> StageExt<T> for gridshield_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|e| match e {
            gridshield_core::Error::Config(m) => Failure::Config(m),
            e => Failure::Stage {
                stage,
                message: e.to_string(),
            },
        })
    }
}

impl<T> StageExt<T> for std::io::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure::Stage {
            stage,
            message: e.to_string(),
        })
    }
}

impl<T> StageExt<T> for serde_json::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure::Stage {
            stage,
            message: e.to_string(),
        })
    }
}
