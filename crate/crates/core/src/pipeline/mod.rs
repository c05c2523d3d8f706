//! Config-driven pipeline: render, segment, merge, profile and back-project,
//! each stage reading and writing files under one output directory.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::*;
pub use config::{ConfigError, PipelineConfig, RawConfig};
pub use report::{
    plot_profile, read_plan, InstanceProfileReport, InstanceRecord, InstancesFile, PlanReport, ProfileReport,
    RenderReport, TimingReport,
};

/// Failure of a pipeline command, classified by process exit code.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(crate::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl RunError {
    /// Library errors raised after the inputs were validated are bugs,
    /// everything else points at the input data.
    pub(crate) fn from_lib(e: crate::Error) -> Self {
        match e {
            crate::Error::InvalidArgument(msg) => RunError::Internal(msg),
            other => RunError::Input(other),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Input(_) => 3,
            RunError::Internal(_) => 4,
        }
    }
}
