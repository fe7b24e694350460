use motion_scaffold::compositor::CompositorError;
use motion_scaffold::fusion::FusionError;
use motion_scaffold::latent::LatentError;
use motion_scaffold::motion_script::ScriptError;
use motion_scaffold::raster::RasterError;
use motion_scaffold::reason::ReasonError;
use motion_scaffold::trajectory::TrajectoryError;
use motion_scaffold::transport::TransportError;
use thiserror::Error;

/// Every failure the tool reports. Each source module owns one family of
/// exit codes (its tens digit); the units digit refines the kind.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Compositor(#[from] CompositorError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Latent(#[from] LatentError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Reason(#[from] ReasonError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::MissingInput(_) => 4,
            CliError::Script(ScriptError::Syntax(_)) => 10,
            CliError::Script(ScriptError::Validation { .. }) => 11,
            CliError::Script(ScriptError::DegenerateTimeline { .. }) => 12,
            CliError::Trajectory(TrajectoryError::Script(_)) => 11,
            CliError::Trajectory(_) => 20,
            CliError::Compositor(CompositorError::Trajectory(_)) => 20,
            CliError::Compositor(_) => 30,
            CliError::Raster(_) => 31,
            CliError::Latent(LatentError::Io { .. }) => 41,
            CliError::Latent(LatentError::BadMagic(_) | LatentError::Truncated { .. } | LatentError::Format(_)) => 42,
            CliError::Latent(_) => 40,
            CliError::Fusion(FusionError::Model(_)) => 51,
            CliError::Fusion(_) => 50,
            CliError::Reason(ReasonError::FixtureMiss { .. }) => 61,
            CliError::Reason(ReasonError::Malformed { .. } | ReasonError::ImageDecode { .. }) => 62,
            CliError::Reason(ReasonError::Script { .. }) => 63,
            CliError::Reason(ReasonError::Backend(_)) | CliError::Transport(_) => 64,
            CliError::Reason(_) => 60,
            CliError::Io { .. } => 70,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::MissingInput(_) => "missing_input",
            CliError::Script(ScriptError::Syntax(_)) => "script_syntax",
            CliError::Script(ScriptError::DegenerateTimeline { .. }) => "degenerate_timeline",
            CliError::Script(_) | CliError::Trajectory(TrajectoryError::Script(_)) => "script_validation",
            CliError::Trajectory(_) | CliError::Compositor(CompositorError::Trajectory(_)) => "trajectory",
            CliError::Compositor(_) => "compositor",
            CliError::Raster(_) => "raster",
            CliError::Latent(LatentError::Io { .. }) => "latent_io",
            CliError::Latent(LatentError::BadMagic(_) | LatentError::Truncated { .. } | LatentError::Format(_)) => {
                "latent_format"
            }
            CliError::Latent(_) => "latent",
            CliError::Fusion(FusionError::Model(_)) => "model",
            CliError::Fusion(_) => "fusion",
            CliError::Reason(ReasonError::FixtureMiss { .. }) => "fixture_miss",
            CliError::Reason(ReasonError::Malformed { .. } | ReasonError::ImageDecode { .. }) => "malformed_response",
            CliError::Reason(ReasonError::Script { .. }) => "director_script",
            CliError::Reason(ReasonError::Backend(_)) | CliError::Transport(_) => "backend",
            CliError::Reason(_) => "reason",
            CliError::Io { .. } => "io",
        }
    }

    /// One line, `error: code=N kind=K msg="..."`, with the message escaped
    /// as a JSON string.
    pub fn line(&self) -> String {
        format!(
            "error: code={} kind={} msg={}",
            self.exit_code(),
            self.kind(),
            serde_json::Value::String(self.to_string())
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_line_is_parseable() {
        let e = CliError::Script(ScriptError::Validation {
            path: "fps".into(),
            message: "0 must be > 0 \"really\"".into(),
        });
        let line = e.line();
        assert!(line.starts_with("error: code=11 kind=script_validation msg=\""));
        let msg = line.split_once("msg=").unwrap().1;
        let parsed: String = serde_json::from_str(msg).unwrap();
        assert!(parsed.contains("\"really\""));
    }

    #[test]
    fn families_are_distinct_per_module() {
        let codes = [
            CliError::Usage(String::new()).exit_code(),
            CliError::Script(ScriptError::Syntax(String::new())).exit_code() / 10,
            CliError::Compositor(CompositorError::Unfillable).exit_code() / 10,
            CliError::Latent(LatentError::NonFinite(0)).exit_code() / 10,
            CliError::Fusion(FusionError::InvalidSteps).exit_code() / 10,
            CliError::Reason(ReasonError::NoLabels).exit_code() / 10,
        ];
        let unique: std::collections::HashSet<_> = codes.iter().collect();
        assert_eq!(unique.len(), codes.len());
    }
}
