//! Command-line orchestration of the motion-scaffold stages.

pub mod config;
pub mod error;
pub mod noise;
pub mod stages;

pub use config::{ModelChoice, PipelineConfig};
pub use error::CliError;
pub use stages::{run_stage, Stage};
