//! Run configuration: a flat `key = value` file layered under command-line
//! flags.
//!
//! ```text
//! # comments and blank lines are ignored
//! out = run/two_body
//! codec = block:4:4:4
//! sigma_min = 0.6
//! entities = ball, crate
//! ```
//!
//! Keys match the long flag names, with `-` and `_` interchangeable. Unknown
//! keys are errors. Relative paths in a file resolve against the file's
//! directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use motion_scaffold::fusion::DEFAULT_SIGMA_MIN;
use motion_scaffold::latent::CodecSpec;
use motion_scaffold::reason::FixtureMode;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    /// Closed-form field that transports every state to a target latent.
    Oracle,
    /// Zero velocity everywhere.
    Zero,
    /// Velocity from the endpoint.
    Remote,
}

impl FromStr for ModelChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(ModelChoice::Oracle),
            "zero" => Ok(ModelChoice::Zero),
            "remote" => Ok(ModelChoice::Remote),
            other => Err(format!("unknown model '{other}' (oracle|zero|remote)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub script: Option<PathBuf>,
    pub assets: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
    pub out: PathBuf,
    pub width: usize,
    pub height: usize,
    /// Overrides the script's `total_frames`.
    pub frames: Option<usize>,
    pub steps: usize,
    pub sigma_min: f64,
    pub dilation: usize,
    pub seed: u64,
    pub codec: CodecSpec,
    pub mode: FixtureMode,
    pub endpoint: Option<String>,
    pub prompt: Option<String>,
    pub entities: Vec<String>,
    pub model: ModelChoice,
    /// Oracle target latent; the encoded scaffold when absent.
    pub target: Option<PathBuf>,
    pub inject: bool,
    /// `fuse` inputs.
    pub latent: Option<PathBuf>,
    pub velocity: Option<PathBuf>,
    pub sigma: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            script: None,
            assets: None,
            fixtures: None,
            out: PathBuf::from("out"),
            width: 64,
            height: 64,
            frames: None,
            steps: 32,
            sigma_min: DEFAULT_SIGMA_MIN,
            dilation: 1,
            seed: 0,
            codec: CodecSpec::block(4, 4, 4).expect("default codec is valid"),
            mode: FixtureMode::Replay,
            endpoint: None,
            prompt: None,
            entities: Vec::new(),
            model: ModelChoice::Oracle,
            target: None,
            inject: true,
            latent: None,
            velocity: None,
            sigma: None,
        }
    }
}

const PATH_KEYS: [&str; 7] = ["script", "assets", "fixtures", "out", "target", "latent", "velocity"];

fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_")
}

/// Parses a flat `key = value` document.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
        pairs.push((normalize_key(key), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Reads a config file, resolving relative paths against its directory.
pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut pairs = parse_pairs(&text)?;
    for (key, value) in &mut pairs {
        if PATH_KEYS.contains(&key.as_str()) && Path::new(value.as_str()).is_relative() {
            *value = base.join(value.as_str()).display().to_string();
        }
    }
    Ok(pairs)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Config(format!("{key} = '{value}': {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("{key} = '{value}': expected true or false"))),
    }
}

impl PipelineConfig {
    /// Applies `pairs` in order; later pairs win.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self, CliError> {
        let mut latest: BTreeMap<String, &str> = BTreeMap::new();
        for (key, value) in pairs {
            latest.insert(normalize_key(key), value.as_str());
        }
        let mut cfg = PipelineConfig::default();
        for (key, value) in latest {
            let k = key.as_str();
            match k {
                "script" => cfg.script = Some(value.into()),
                "assets" => cfg.assets = Some(value.into()),
                "fixtures" => cfg.fixtures = Some(value.into()),
                "out" => cfg.out = value.into(),
                "width" => cfg.width = parse(k, value)?,
                "height" => cfg.height = parse(k, value)?,
                "frames" => cfg.frames = Some(parse(k, value)?),
                "steps" => cfg.steps = parse(k, value)?,
                "sigma_min" => cfg.sigma_min = parse(k, value)?,
                "dilation" => cfg.dilation = parse(k, value)?,
                "seed" => cfg.seed = parse(k, value)?,
                "codec" => cfg.codec = parse(k, value)?,
                "mode" => cfg.mode = parse(k, value)?,
                "endpoint" => cfg.endpoint = Some(value.to_string()),
                "prompt" => cfg.prompt = Some(value.to_string()),
                "entities" => {
                    cfg.entities = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(str::to_string)
                        .collect()
                }
                "model" => cfg.model = parse(k, value)?,
                "target" => cfg.target = Some(value.into()),
                "inject" => cfg.inject = parse_bool(k, value)?,
                "latent" => cfg.latent = Some(value.into()),
                "velocity" => cfg.velocity = Some(value.into()),
                "sigma" => cfg.sigma = Some(parse(k, value)?),
                _ => return Err(CliError::Config(format!("unknown key '{key}'"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.width == 0 || self.height == 0 {
            return bad(format!("render size {}x{} must be positive", self.width, self.height));
        }
        if self.steps == 0 {
            return bad("steps must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.sigma_min) {
            return bad(format!("sigma_min {} outside [0, 1]", self.sigma_min));
        }
        if let Some(s) = self.sigma {
            if !(0.0..=1.0).contains(&s) {
                return bad(format!("sigma {s} outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn latent_dir(&self) -> PathBuf {
        self.out.join("latent")
    }
}
