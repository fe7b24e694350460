//! Stage entry points. Stages talk only through files under the output
//! directory, so a chain of separate invocations writes the same bytes as
//! `pipeline`:
//!
//! ```text
//! out/
//!   reason/            trace.json, keyframe_NN.ppm, mask_NN_KK.pgm
//!   script.json        director output (reason) or a copy of --script
//!   assets/            background.ppm, <entity>.ppm, <entity>.mask.pgm
//!   states.tsv         per-frame entity states
//!   frames/            frame_NNNNN.ppm, mask_NNNNN.pgm
//!   latent/            x0_ref.phyl, mask.phyl, init_noise.phyl, sample.phyl, fused.phyl
//!   refined/           frame_NNNNN.ppm decoded from the sample
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use motion_scaffold::compositor::{frame_file_name, render_coarse, CoarseVideo, CompositorError, EntityAsset};
use motion_scaffold::fusion::{
    inject_scaffold, make_schedule, oracle_velocity_model, sample, Conditioning, InjectionConfig, RemoteModel,
    ScheduleKind, VelocityModel, ZeroModel,
};
use motion_scaffold::latent::{decode_latent, downsample_mask, encode_coarse, LatentMask, LatentTensor};
use motion_scaffold::motion_script::{parse_script, serialize_script, MotionScript};
use motion_scaffold::raster::Raster;
use motion_scaffold::reason::{direct_motion, run_reason, Backend, FixtureStore, ReasonTrace};
use motion_scaffold::trajectory::plan_frames;
use motion_scaffold::transport::{HttpTransport, Offline, Transport};

use crate::config::{ModelChoice, PipelineConfig};
use crate::error::CliError;
use crate::noise::init_noise;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Validate,
    Plan,
    Render,
    Encode,
    Mask,
    Fuse,
    Sample,
    Reason,
    Pipeline,
}

impl FromStr for Stage {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "validate" => Stage::Validate,
            "plan" => Stage::Plan,
            "render" => Stage::Render,
            "encode" => Stage::Encode,
            "mask" => Stage::Mask,
            "fuse" => Stage::Fuse,
            "sample" => Stage::Sample,
            "reason" => Stage::Reason,
            "pipeline" => Stage::Pipeline,
            other => return Err(CliError::Usage(format!("unknown command '{other}'"))),
        })
    }
}

pub const SCRIPT_FILE: &str = "script.json";
pub const STATES_FILE: &str = "states.tsv";
pub const BACKGROUND_FILE: &str = "background.ppm";
pub const X0_REF_FILE: &str = "x0_ref.phyl";
pub const MASK_FILE: &str = "mask.phyl";
pub const NOISE_FILE: &str = "init_noise.phyl";
pub const SAMPLE_FILE: &str = "sample.phyl";
pub const FUSED_FILE: &str = "fused.phyl";

pub fn crop_file(entity_id: &str) -> String {
    format!("{entity_id}.ppm")
}

pub fn crop_mask_file(entity_id: &str) -> String {
    format!("{entity_id}.mask.pgm")
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Empties `dir` so stale files from an earlier, longer run cannot leak in.
fn fresh_dir(dir: &Path) -> Result<(), CliError> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    create_dir(dir)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn require(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingInput(format!("{what} not found at {}", path.display())))
    }
}

fn script_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.script.clone().unwrap_or_else(|| cfg.out.join(SCRIPT_FILE))
}

fn assets_dir(cfg: &PipelineConfig) -> PathBuf {
    cfg.assets.clone().unwrap_or_else(|| cfg.out.join("assets"))
}

/// Reads the script and applies the `frames` override.
pub fn load_script(cfg: &PipelineConfig) -> Result<MotionScript, CliError> {
    let path = script_path(cfg);
    require(&path, "motion script")?;
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let mut script = parse_script(&text)?;
    if let Some(frames) = cfg.frames {
        script.total_frames = frames;
        script.validate()?;
    }
    Ok(script)
}

pub fn validate(cfg: &PipelineConfig) -> Result<String, CliError> {
    let script = load_script(cfg)?;
    Ok(format!(
        "ok: {} entities, {} milestones, {} frames at {} fps",
        script.entities.len(),
        script.milestone_count,
        script.total_frames,
        script.fps
    ))
}

pub fn plan(cfg: &PipelineConfig) -> Result<String, CliError> {
    let script = load_script(cfg)?;
    let table = plan_frames(&script)?;
    let path = cfg.out.join(STATES_FILE);
    write_file(&path, &table.to_tsv())?;
    Ok(format!("wrote {} frames to {}", table.frames(), path.display()))
}

pub fn load_assets(dir: &Path, script: &MotionScript) -> Result<(Vec<EntityAsset>, Raster), CliError> {
    let background = dir.join(BACKGROUND_FILE);
    require(&background, "background keyframe")?;
    let background = Raster::read(&background)?;
    let assets = script
        .entities
        .iter()
        .map(|e| {
            let crop = dir.join(crop_file(&e.entity_id));
            let mask = dir.join(crop_mask_file(&e.entity_id));
            if !crop.exists() || !mask.exists() {
                return Err(CliError::Compositor(CompositorError::MissingAsset(e.entity_id.clone())));
            }
            Ok(EntityAsset::new(e.entity_id.clone(), Raster::read(&crop)?, Raster::read(&mask)?)?)
        })
        .collect::<Result<_, _>>()?;
    Ok((assets, background))
}

pub fn render(cfg: &PipelineConfig) -> Result<String, CliError> {
    let script = load_script(cfg)?;
    let (assets, background) = load_assets(&assets_dir(cfg), &script)?;
    let video = render_coarse(&script, &assets, &background, cfg.width, cfg.height)?;
    let dir = cfg.out.join("frames");
    fresh_dir(&dir)?;
    video.write_dir(&dir)?;
    Ok(format!("rendered {} frames to {}", video.len(), dir.display()))
}

fn read_video(cfg: &PipelineConfig) -> Result<CoarseVideo, CliError> {
    let dir = cfg.out.join("frames");
    require(&dir.join(frame_file_name(0)), "rendered frames")?;
    // playback rate plays no part in encoding
    Ok(CoarseVideo::read_dir(&dir, 1.0)?)
}

pub fn encode(cfg: &PipelineConfig) -> Result<String, CliError> {
    let video = read_video(cfg)?;
    let latent = encode_coarse(&video, &cfg.codec)?;
    let path = cfg.latent_dir().join(X0_REF_FILE);
    create_dir(&cfg.latent_dir())?;
    latent.write(&path)?;
    Ok(format!("encoded {:?} with {} to {}", latent.shape(), cfg.codec, path.display()))
}

pub fn mask(cfg: &PipelineConfig) -> Result<String, CliError> {
    let video = read_video(cfg)?;
    let mask = downsample_mask(&video.occupancy, &cfg.codec, cfg.dilation)?;
    let path = cfg.latent_dir().join(MASK_FILE);
    create_dir(&cfg.latent_dir())?;
    mask.write(&path)?;
    Ok(format!(
        "latent mask {:?} with {} active cells to {}",
        mask.shape(),
        mask.count_active(),
        path.display()
    ))
}

fn read_latent(path: &Path, what: &str) -> Result<LatentTensor, CliError> {
    require(path, what)?;
    Ok(LatentTensor::read(path)?)
}

fn read_injection(cfg: &PipelineConfig) -> Result<InjectionConfig, CliError> {
    let reference = read_latent(&cfg.latent_dir().join(X0_REF_FILE), "scaffold latent")?;
    let mask_path = cfg.latent_dir().join(MASK_FILE);
    require(&mask_path, "latent mask")?;
    let mask = LatentMask::read(&mask_path)?;
    Ok(InjectionConfig::new(cfg.sigma_min, mask, reference)?)
}

fn transport(cfg: &PipelineConfig) -> Box<dyn Transport> {
    match &cfg.endpoint {
        Some(url) => Box::new(HttpTransport::new(url.clone())),
        None => Box::new(Offline),
    }
}

/// Single injection on provided latents at `sigma`.
pub fn fuse(cfg: &PipelineConfig) -> Result<String, CliError> {
    let missing = |k: &str| CliError::MissingInput(format!("fuse needs --{k}"));
    let x = read_latent(cfg.latent.as_ref().ok_or_else(|| missing("latent"))?, "state latent")?;
    let v = read_latent(cfg.velocity.as_ref().ok_or_else(|| missing("velocity"))?, "velocity latent")?;
    let sigma = cfg.sigma.ok_or_else(|| missing("sigma"))?;
    let injection = read_injection(cfg)?;
    let fused = inject_scaffold(&x, sigma, &v, &injection)?;
    let path = cfg.latent_dir().join(FUSED_FILE);
    fused.write(&path)?;
    Ok(format!("fused at sigma {sigma} to {}", path.display()))
}

pub fn sample_stage(cfg: &PipelineConfig) -> Result<String, CliError> {
    let reference = read_latent(&cfg.latent_dir().join(X0_REF_FILE), "scaffold latent")?;
    let model: Box<dyn VelocityModel> = match cfg.model {
        ModelChoice::Oracle => {
            let target = match &cfg.target {
                Some(path) => read_latent(path, "oracle target")?,
                None => reference.clone(),
            };
            Box::new(oracle_velocity_model(target))
        }
        ModelChoice::Zero => Box::new(ZeroModel),
        ModelChoice::Remote => {
            let url = cfg
                .endpoint
                .clone()
                .ok_or_else(|| CliError::MissingInput("remote model needs --endpoint".into()))?;
            Box::new(RemoteModel::new(HttpTransport::new(url)))
        }
    };
    let injection = if cfg.inject { Some(read_injection(cfg)?) } else { None };

    let noise = init_noise(reference.shape(), cfg.seed);
    create_dir(&cfg.latent_dir())?;
    noise.write(cfg.latent_dir().join(NOISE_FILE))?;
    let schedule = make_schedule(cfg.steps, ScheduleKind::Linear)?;
    let cond = Conditioning {
        prompt: cfg.prompt.clone(),
    };
    let out = sample(&noise, model.as_ref(), &schedule, injection.as_ref(), &cond)?;
    let path = cfg.latent_dir().join(SAMPLE_FILE);
    out.write(&path)?;

    // decode what was written, so a rerun from files matches
    let stored = LatentTensor::read(&path)?;
    let dir = cfg.out.join("refined");
    fresh_dir(&dir)?;
    for (t, frame) in decode_latent(&stored, &cfg.codec)?.iter().enumerate() {
        frame.write(dir.join(frame_file_name(t)))?;
    }
    Ok(format!(
        "sampled {} steps ({}) to {}",
        cfg.steps,
        if injection.is_some() { "with scaffold" } else { "no injection" },
        path.display()
    ))
}

pub fn reason(cfg: &PipelineConfig) -> Result<String, CliError> {
    let prompt = cfg
        .prompt
        .as_deref()
        .ok_or_else(|| CliError::MissingInput("reason needs --prompt".into()))?;
    if cfg.entities.is_empty() {
        return Err(CliError::MissingInput("reason needs --entities".into()));
    }
    let fixtures = cfg
        .fixtures
        .as_ref()
        .ok_or_else(|| CliError::MissingInput("reason needs --fixtures".into()))?;
    let store = FixtureStore::new(fixtures, cfg.mode);
    let transport = transport(cfg);
    let backend = Backend::new(transport.as_ref(), &store);

    let trace = run_reason(prompt, &cfg.entities, backend)?;
    trace.write_dir(&cfg.out.join("reason"))?;
    let script = direct_motion(&trace, backend)?;
    write_file(&cfg.out.join(SCRIPT_FILE), &serialize_script(&script))?;
    write_assets(&trace, &cfg.out.join("assets"))?;
    Ok(format!(
        "reasoned {} states for {} entities",
        trace.milestones(),
        trace.entity_labels.len()
    ))
}

/// Cuts entity crops from the first keyframe, which also serves as the
/// background key.
fn write_assets(trace: &ReasonTrace, dir: &Path) -> Result<(), CliError> {
    fresh_dir(dir)?;
    let key = &trace.keyframes[0];
    key.write(dir.join(BACKGROUND_FILE))?;
    for (label, mask) in trace.entity_labels.iter().zip(&trace.entity_masks[0]) {
        let asset = EntityAsset::extract(label, key, mask)?
            .ok_or_else(|| CliError::Compositor(CompositorError::MissingAsset(label.clone())))?;
        asset.crop.write(dir.join(crop_file(label)))?;
        asset.mask.write(dir.join(crop_mask_file(label)))?;
    }
    Ok(())
}

/// The whole chain. Starts from reasoning when a prompt is configured,
/// otherwise from `--script` and `--assets`. Every stage reads the files the
/// previous one wrote.
pub fn pipeline(cfg: &PipelineConfig) -> Result<String, CliError> {
    let mut lines = Vec::new();
    let mut cfg = cfg.clone();
    if cfg.prompt.is_some() {
        lines.push(reason(&cfg)?);
        cfg.script = None;
        cfg.assets = None;
    } else {
        let script = load_script(&cfg)?;
        write_file(&cfg.out.join(SCRIPT_FILE), &serialize_script(&script))?;
        cfg.script = None;
        cfg.frames = None;
    }
    for stage in [plan, render, encode, mask, sample_stage] {
        lines.push(stage(&cfg)?);
    }
    Ok(lines.join("\n"))
}

pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<String, CliError> {
    match stage {
        Stage::Validate => validate(cfg),
        Stage::Plan => plan(cfg),
        Stage::Render => render(cfg),
        Stage::Encode => encode(cfg),
        Stage::Mask => mask(cfg),
        Stage::Fuse => fuse(cfg),
        Stage::Sample => sample_stage(cfg),
        Stage::Reason => reason(cfg),
        Stage::Pipeline => pipeline(cfg),
    }
}
