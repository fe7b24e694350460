//! Structured motion scripts: the per-entity plan of primitive kinds and
//! milestone states that drives scaffold rendering.
//!
//! Scripts are exchanged as JSON documents:
//!
//! ```json
//! {
//!   "milestone_count": 2,
//!   "total_frames": 16,
//!   "fps": 8.0,
//!   "milestone_frames": [0, 15],
//!   "entities": [
//!     {
//!       "entity_id": "ball",
//!       "kind": "Linear",
//!       "z_order": 0,
//!       "params": { "gravity": [0.0, 0.4], "amplitude": 0.05, "cycles": 1 },
//!       "milestones": [
//!         { "x": 0.2, "y": 0.5, "s": 1.0, "r": 0.0, "alpha": 1.0 },
//!         { "x": 0.8, "y": 0.5, "s": 1.0, "r": 0.0, "alpha": 1.0 }
//!       ]
//!     }
//!   ]
//! }
//! ```
//!
//! `milestone_frames`, `z_order` and `params` (and each of its keys) are
//! optional on input. Unknown keys are rejected. Parsing never repairs a
//! document: any out-of-range value is reported with the path of the
//! offending field.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScriptError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("validation error at {path}: {message}")]
    Validation { path: String, message: String },
    #[error("degenerate timeline: {milestones} milestones cannot be placed on {frames} frames")]
    DegenerateTimeline { milestones: usize, frames: usize },
}

impl ScriptError {
    fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        ScriptError::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Field path of a validation error.
    pub fn path(&self) -> Option<&str> {
        match self {
            ScriptError::Validation { path, .. } => Some(path),
            _ => None,
        }
    }
}

/// Per-milestone entity state in normalized image coordinates.
///
/// The origin is the top-left corner and `y` grows downward. `r` is in
/// radians, positive clockwise on screen, and is never wrapped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateVector {
    pub x: f64,
    pub y: f64,
    pub s: f64,
    pub r: f64,
    pub alpha: f64,
}

impl StateVector {
    pub fn new(x: f64, y: f64, s: f64, r: f64, alpha: f64) -> Self {
        Self { x, y, s, r, alpha }
    }

    /// A fully opaque, unscaled, unrotated state at `(x, y)`.
    pub fn at(x: f64, y: f64) -> Self {
        Self::new(x, y, 1.0, 0.0, 1.0)
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Checks the state invariants, reporting violations under `path`.
    pub fn validate(&self, path: &str) -> Result<(), ScriptError> {
        let fields = [
            ("x", self.x),
            ("y", self.y),
            ("s", self.s),
            ("r", self.r),
            ("alpha", self.alpha),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(ScriptError::invalid(
                    format!("{path}.{name}"),
                    format!("{value} is not finite"),
                ));
            }
        }
        for (name, value) in [("x", self.x), ("y", self.y), ("alpha", self.alpha)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ScriptError::invalid(
                    format!("{path}.{name}"),
                    format!("{value} outside [0, 1]"),
                ));
            }
        }
        if self.s <= 0.0 {
            return Err(ScriptError::invalid(
                format!("{path}.s"),
                format!("scale {} must be > 0", self.s),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrimitiveKind {
    Linear,
    Ballistic,
    Drifting,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 3] = [
        PrimitiveKind::Linear,
        PrimitiveKind::Ballistic,
        PrimitiveKind::Drifting,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveKind::Linear => "Linear",
            PrimitiveKind::Ballistic => "Ballistic",
            PrimitiveKind::Drifting => "Drifting",
        }
    }
}

impl fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PrimitiveKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PrimitiveKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown primitive kind '{s}'"))
    }
}

/// User-settable primitive parameters. Only the fields relevant to an
/// entity's kind are used; the rest keep their defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimitiveConfig {
    /// Ballistic acceleration, normalized units per second squared.
    pub gravity: Vec2,
    /// Drifting sway amplitude as a fraction of segment length.
    pub amplitude: f64,
    /// Drifting sway cycles per segment.
    pub cycles: u32,
}

impl Default for PrimitiveConfig {
    fn default() -> Self {
        Self {
            gravity: Vec2::new(0.0, 0.4),
            amplitude: 0.05,
            cycles: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityPlan {
    pub entity_id: String,
    pub kind: PrimitiveKind,
    pub milestones: Vec<StateVector>,
    /// Draw priority; lower values are drawn first.
    pub z_order: i64,
    pub config: PrimitiveConfig,
}

impl EntityPlan {
    pub fn new(entity_id: impl Into<String>, kind: PrimitiveKind, milestones: Vec<StateVector>) -> Self {
        Self {
            entity_id: entity_id.into(),
            kind,
            milestones,
            z_order: 0,
            config: PrimitiveConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionScript {
    pub entities: Vec<EntityPlan>,
    pub milestone_count: usize,
    pub total_frames: usize,
    pub milestone_frames: Option<Vec<usize>>,
    pub fps: f64,
}

impl MotionScript {
    pub fn entity(&self, id: &str) -> Option<&EntityPlan> {
        self.entities.iter().find(|e| e.entity_id == id)
    }

    /// Entities in compositing order: ascending `z_order`, ties broken by
    /// `entity_id`.
    pub fn draw_order(&self) -> Vec<&EntityPlan> {
        let mut order: Vec<&EntityPlan> = self.entities.iter().collect();
        order.sort_by(|a, b| {
            a.z_order
                .cmp(&b.z_order)
                .then_with(|| a.entity_id.cmp(&b.entity_id))
        });
        order
    }

    pub fn validate(&self) -> Result<(), ScriptError> {
        if self.milestone_count < 2 {
            return Err(ScriptError::invalid(
                "milestone_count",
                format!("{} must be >= 2", self.milestone_count),
            ));
        }
        if self.total_frames < self.milestone_count {
            return Err(ScriptError::invalid(
                "total_frames",
                format!(
                    "{} must be >= milestone_count ({})",
                    self.total_frames, self.milestone_count
                ),
            ));
        }
        if !self.fps.is_finite() || self.fps <= 0.0 {
            return Err(ScriptError::invalid("fps", format!("{} must be > 0", self.fps)));
        }
        if let Some(frames) = &self.milestone_frames {
            validate_milestone_frames(frames, self.milestone_count, self.total_frames)?;
        }

        let mut seen = HashSet::new();
        for (k, entity) in self.entities.iter().enumerate() {
            let base = format!("entities[{k}]");
            if entity.entity_id.is_empty() {
                return Err(ScriptError::invalid(format!("{base}.entity_id"), "must not be empty"));
            }
            if !seen.insert(entity.entity_id.as_str()) {
                return Err(ScriptError::invalid(
                    format!("{base}.entity_id"),
                    format!("duplicate entity_id '{}'", entity.entity_id),
                ));
            }
            if entity.milestones.len() != self.milestone_count {
                return Err(ScriptError::invalid(
                    format!("{base}.milestones"),
                    format!(
                        "entity '{}' has {} milestones, script declares {}",
                        entity.entity_id,
                        entity.milestones.len(),
                        self.milestone_count
                    ),
                ));
            }
            for (i, state) in entity.milestones.iter().enumerate() {
                state.validate(&format!("{base}.milestones[{i}]"))?;
            }
            let cfg = &entity.config;
            if !cfg.gravity.is_finite() {
                return Err(ScriptError::invalid(format!("{base}.params.gravity"), "must be finite"));
            }
            if !cfg.amplitude.is_finite() || cfg.amplitude < 0.0 {
                return Err(ScriptError::invalid(
                    format!("{base}.params.amplitude"),
                    format!("{} must be finite and >= 0", cfg.amplitude),
                ));
            }
            if cfg.cycles < 1 {
                return Err(ScriptError::invalid(format!("{base}.params.cycles"), "must be >= 1"));
            }
        }
        Ok(())
    }
}

fn validate_milestone_frames(frames: &[usize], count: usize, total: usize) -> Result<(), ScriptError> {
    if frames.len() != count {
        return Err(ScriptError::invalid(
            "milestone_frames",
            format!("has {} entries, milestone_count is {count}", frames.len()),
        ));
    }
    if frames[0] != 0 {
        return Err(ScriptError::invalid("milestone_frames[0]", format!("{} must be 0", frames[0])));
    }
    for i in 1..frames.len() {
        if frames[i] <= frames[i - 1] {
            return Err(ScriptError::invalid(
                format!("milestone_frames[{i}]"),
                format!("{} is not greater than {}", frames[i], frames[i - 1]),
            ));
        }
    }
    let last = frames.len() - 1;
    if frames[last] != total - 1 {
        return Err(ScriptError::invalid(
            format!("milestone_frames[{last}]"),
            format!("{} must equal total_frames - 1 ({})", frames[last], total - 1),
        ));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptDoc {
    milestone_count: i64,
    total_frames: i64,
    fps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    milestone_frames: Option<Vec<i64>>,
    entities: Vec<EntityDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityDoc {
    entity_id: String,
    kind: String,
    #[serde(default)]
    z_order: i64,
    #[serde(default)]
    params: ParamsDoc,
    milestones: Vec<StateVector>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gravity: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cycles: Option<i64>,
}

fn non_negative(value: i64, path: &str) -> Result<usize, ScriptError> {
    usize::try_from(value).map_err(|_| ScriptError::invalid(path, format!("{value} must be >= 0")))
}

pub fn parse_script(text: &str) -> Result<MotionScript, ScriptError> {
    let doc: ScriptDoc = serde_json::from_str(text).map_err(|e| ScriptError::Syntax(e.to_string()))?;

    let milestone_count = non_negative(doc.milestone_count, "milestone_count")?;
    let total_frames = non_negative(doc.total_frames, "total_frames")?;
    let milestone_frames = match doc.milestone_frames {
        None => None,
        Some(frames) => Some(
            frames
                .into_iter()
                .enumerate()
                .map(|(i, f)| non_negative(f, &format!("milestone_frames[{i}]")))
                .collect::<Result<Vec<_>, _>>()?,
        ),
    };

    let mut entities = Vec::with_capacity(doc.entities.len());
    for (k, e) in doc.entities.into_iter().enumerate() {
        let kind = e.kind.parse::<PrimitiveKind>().map_err(|msg| {
            ScriptError::invalid(format!("entities[{k}].kind"), format!("entity '{}': {msg}", e.entity_id))
        })?;
        let defaults = PrimitiveConfig::default();
        let cycles = match e.params.cycles {
            None => defaults.cycles,
            Some(c) => u32::try_from(c).map_err(|_| {
                ScriptError::invalid(format!("entities[{k}].params.cycles"), format!("{c} must be >= 1"))
            })?,
        };
        let config = PrimitiveConfig {
            gravity: e.params.gravity.map(Vec2::from).unwrap_or(defaults.gravity),
            amplitude: e.params.amplitude.unwrap_or(defaults.amplitude),
            cycles,
        };
        entities.push(EntityPlan {
            entity_id: e.entity_id,
            kind,
            milestones: e.milestones,
            z_order: e.z_order,
            config,
        });
    }

    let script = MotionScript {
        entities,
        milestone_count,
        total_frames,
        milestone_frames,
        fps: doc.fps,
    };
    script.validate()?;
    Ok(script)
}

/// Serializes a valid script. Reals are written in shortest round-trip
/// form, so `parse_script(&serialize_script(s)) == s` holds exactly.
pub fn serialize_script(script: &MotionScript) -> String {
    let doc = ScriptDoc {
        milestone_count: script.milestone_count as i64,
        total_frames: script.total_frames as i64,
        fps: script.fps,
        milestone_frames: script
            .milestone_frames
            .as_ref()
            .map(|f| f.iter().map(|&v| v as i64).collect()),
        entities: script
            .entities
            .iter()
            .map(|e| EntityDoc {
                entity_id: e.entity_id.clone(),
                kind: e.kind.name().to_string(),
                z_order: e.z_order,
                params: ParamsDoc {
                    gravity: Some(e.config.gravity.into()),
                    amplitude: Some(e.config.amplitude),
                    cycles: Some(e.config.cycles as i64),
                },
                milestones: e.milestones.clone(),
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("script document serializes");
    out.push('\n');
    out
}

/// Frame index of each milestone. Explicit `milestone_frames` win;
/// otherwise milestones are spread uniformly with round-half-up.
pub fn resolve_timeline(script: &MotionScript) -> Result<Vec<usize>, ScriptError> {
    if let Some(frames) = &script.milestone_frames {
        return Ok(frames.clone());
    }
    uniform_timeline(script.milestone_count, script.total_frames)
}

pub fn uniform_timeline(milestones: usize, frames: usize) -> Result<Vec<usize>, ScriptError> {
    if milestones < 2 || frames < milestones {
        return Err(ScriptError::DegenerateTimeline { milestones, frames });
    }
    let span = (frames - 1) as u128;
    let gaps = (milestones - 1) as u128;
    Ok((0..milestones as u128)
        .map(|i| ((2 * i * span + gaps) / (2 * gaps)) as usize)
        .collect())
}
