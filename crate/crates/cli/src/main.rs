use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use motion_scaffold_cli::config::read_config_file;
use motion_scaffold_cli::{run_stage, CliError, PipelineConfig, Stage};

#[derive(Parser)]
#[command(name = "motion-scaffold", version, about = "Physics motion scripts to coarse scaffolds and guided samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Check a motion script
    Validate,
    /// Dump per-frame entity states
    Plan,
    /// Render the coarse scaffold video
    Render,
    /// Encode the scaffold to the reference latent
    Encode,
    /// Downsample occupancy to the latent mask
    Mask,
    /// Apply one injection to given latents (debugging)
    Fuse,
    /// Run the sampler with scaffold injection
    Sample,
    /// Run the reasoning stage through fixtures
    Reason,
    /// Run every stage
    Pipeline,
}

impl From<Command> for Stage {
    fn from(c: Command) -> Self {
        match c {
            Command::Validate => Stage::Validate,
            Command::Plan => Stage::Plan,
            Command::Render => Stage::Render,
            Command::Encode => Stage::Encode,
            Command::Mask => Stage::Mask,
            Command::Fuse => Stage::Fuse,
            Command::Sample => Stage::Sample,
            Command::Reason => Stage::Reason,
            Command::Pipeline => Stage::Pipeline,
        }
    }
}

/// Values are checked after the config file and flags are merged.
#[derive(Args)]
struct Flags {
    /// Flat key=value config file; flags override it
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    script: Option<String>,
    #[arg(long, global = true, value_name = "DIR")]
    assets: Option<String>,
    #[arg(long, global = true, value_name = "DIR")]
    fixtures: Option<String>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<String>,
    #[arg(long, global = true, value_name = "INT")]
    width: Option<String>,
    #[arg(long, global = true, value_name = "INT")]
    height: Option<String>,
    /// Override the script's total_frames
    #[arg(long, global = true, value_name = "INT")]
    frames: Option<String>,
    #[arg(long, global = true, value_name = "INT")]
    steps: Option<String>,
    #[arg(long, global = true, value_name = "FLOAT")]
    sigma_min: Option<String>,
    #[arg(long, global = true, value_name = "INT")]
    dilation: Option<String>,
    #[arg(long, global = true, value_name = "UINT")]
    seed: Option<String>,
    /// identity | block:SS:TS:C
    #[arg(long, global = true, value_name = "SPEC")]
    codec: Option<String>,
    /// record | replay | passthrough
    #[arg(long, global = true, value_name = "MODE")]
    mode: Option<String>,
    #[arg(long, global = true, value_name = "URL")]
    endpoint: Option<String>,
    /// User prompt for the reasoning stage
    #[arg(long, global = true, value_name = "TEXT")]
    prompt: Option<String>,
    /// Comma-separated entity labels
    #[arg(long, global = true, value_name = "LIST")]
    entities: Option<String>,
    /// oracle | zero | remote
    #[arg(long, global = true, value_name = "NAME")]
    model: Option<String>,
    /// Oracle target latent (defaults to the scaffold latent)
    #[arg(long, global = true, value_name = "PATH")]
    target: Option<String>,
    /// Sample without scaffold injection
    #[arg(long, global = true)]
    no_inject: bool,
    /// fuse: state latent
    #[arg(long, global = true, value_name = "PATH")]
    latent: Option<String>,
    /// fuse: velocity latent
    #[arg(long, global = true, value_name = "PATH")]
    velocity: Option<String>,
    /// fuse: noise level
    #[arg(long, global = true, value_name = "FLOAT")]
    sigma: Option<String>,
}

impl Flags {
    fn pairs(&self) -> Vec<(String, String)> {
        let named = [
            ("script", &self.script),
            ("assets", &self.assets),
            ("fixtures", &self.fixtures),
            ("out", &self.out),
            ("width", &self.width),
            ("height", &self.height),
            ("frames", &self.frames),
            ("steps", &self.steps),
            ("sigma_min", &self.sigma_min),
            ("dilation", &self.dilation),
            ("seed", &self.seed),
            ("codec", &self.codec),
            ("mode", &self.mode),
            ("endpoint", &self.endpoint),
            ("prompt", &self.prompt),
            ("entities", &self.entities),
            ("model", &self.model),
            ("target", &self.target),
            ("latent", &self.latent),
            ("velocity", &self.velocity),
            ("sigma", &self.sigma),
        ];
        let mut pairs: Vec<(String, String)> = named
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v)))
            .collect();
        if self.no_inject {
            pairs.push(("inject".into(), "false".into()));
        }
        pairs
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    let mut pairs = match &cli.flags.config {
        Some(path) => read_config_file(path)?,
        None => Vec::new(),
    };
    pairs.extend(cli.flags.pairs());
    let cfg = PipelineConfig::from_pairs(&pairs)?;
    run_stage(cli.command.into(), &cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            let err = CliError::Usage(e.kind().to_string());
            eprintln!("{}", err.line());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", err.line());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
