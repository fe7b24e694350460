//! Reasoning stage client: state-sequence prompting, keyframe synthesis with
//! visual feedback, entity segmentation and motion direction, all through a
//! record/replay [`FixtureStore`].
//!
//! Wire requests carry `{template_version, role, prompt, images, labels}`.
//! Responses per role:
//!
//! | role            | response                                  |
//! |-----------------|-------------------------------------------|
//! | `state_prompts` | `{"states": [string]}`                    |
//! | `t2i`           | `{"image": base64 PPM}`                   |
//! | `edit`          | `{"edit": string, "image": base64 PPM}`   |
//! | `segment`       | `{"masks": [base64 PGM]}`                 |
//! | `direct_motion` | `{"script": document (string or object)}` |

pub mod fixture;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::compositor::MASK_THRESHOLD;
use crate::motion_script::{parse_script, MotionScript, ScriptError};
use crate::raster::{Raster, RasterError};
use crate::transport::{decode_image_b64, encode_image_b64, Transport, TransportError};

pub use fixture::{canonical_json, digest_value, FixtureMode, FixtureStore, Role, WireRequest};

#[derive(Debug, Error)]
pub enum ReasonError {
    #[error("backend error: {0}")]
    Backend(#[from] TransportError),
    #[error("fixture miss for {role} request {digest}")]
    FixtureMiss { digest: String, role: Role },
    #[error("malformed response {digest}: {message}")]
    Malformed { digest: String, message: String },
    #[error("image decode error in response {digest}: {source}")]
    ImageDecode {
        digest: String,
        #[source]
        source: RasterError,
    },
    #[error("mask {index} is {got:?}, keyframe is {expected:?}")]
    MaskShape {
        index: usize,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("segmentation needs at least one entity label")]
    NoLabels,
    #[error("motion script from response {digest} rejected: {source}")]
    Script {
        digest: String,
        #[source]
        source: ScriptError,
    },
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

impl ReasonError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        ReasonError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

/// A versioned prompt template with `{name}` placeholders.
#[derive(Debug, Clone, Copy)]
pub struct PromptTemplate {
    pub name: &'static str,
    pub version: u32,
    pub text: &'static str,
}

impl PromptTemplate {
    /// `name/vN+<first 12 hex of SHA-256 of the text>`; editing a template
    /// changes every digest that uses it.
    pub fn version_tag(&self) -> String {
        let hash = hex::encode(Sha256::digest(self.text.as_bytes()));
        format!("{}/v{}+{}", self.name, self.version, &hash[..12])
    }

    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        vars.iter().fold(self.text.to_string(), |text, (key, value)| {
            text.replace(&format!("{{{key}}}"), value)
        })
    }
}

pub const STATE_PROMPTS_TEMPLATE: PromptTemplate = PromptTemplate {
    name: "state_prompts",
    version: 1,
    text: include_str!("templates/state_prompts.v1.txt"),
};
pub const T2I_TEMPLATE: PromptTemplate = PromptTemplate {
    name: "t2i",
    version: 1,
    text: include_str!("templates/t2i.v1.txt"),
};
pub const EDIT_TEMPLATE: PromptTemplate = PromptTemplate {
    name: "edit",
    version: 1,
    text: include_str!("templates/edit.v1.txt"),
};
pub const SEGMENT_TEMPLATE: PromptTemplate = PromptTemplate {
    name: "segment",
    version: 1,
    text: include_str!("templates/segment.v1.txt"),
};
pub const DIRECT_MOTION_TEMPLATE: PromptTemplate = PromptTemplate {
    name: "direct_motion",
    version: 1,
    text: include_str!("templates/direct_motion.v1.txt"),
};

/// Transport plus fixture store; every call goes through the store.
#[derive(Clone, Copy)]
pub struct Backend<'a> {
    pub transport: &'a dyn Transport,
    pub store: &'a FixtureStore,
}

impl<'a> Backend<'a> {
    pub fn new(transport: &'a dyn Transport, store: &'a FixtureStore) -> Self {
        Self { transport, store }
    }

    fn call(&self, request: &WireRequest) -> Result<(String, Value), ReasonError> {
        self.store.call(self.transport, request)
    }
}

fn request(template: &PromptTemplate, role: Role, prompt: String, images: Vec<String>, labels: Vec<String>) -> WireRequest {
    WireRequest {
        template_version: template.version_tag(),
        role,
        prompt,
        images,
        labels,
    }
}

fn field<'v>(digest: &str, response: &'v Value, name: &str) -> Result<&'v Value, ReasonError> {
    response.get(name).ok_or_else(|| ReasonError::Malformed {
        digest: digest.to_string(),
        message: format!("missing field '{name}'"),
    })
}

fn string_field(digest: &str, response: &Value, name: &str) -> Result<String, ReasonError> {
    field(digest, response, name)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| ReasonError::Malformed {
            digest: digest.to_string(),
            message: format!("field '{name}' is not a string"),
        })
}

fn image_from(digest: &str, encoded: &str) -> Result<Raster, ReasonError> {
    decode_image_b64(encoded).map_err(|source| ReasonError::ImageDecode {
        digest: digest.to_string(),
        source,
    })
}

fn color_image(digest: &str, response: &Value) -> Result<Raster, ReasonError> {
    let image = image_from(digest, &string_field(digest, response, "image")?)?;
    if image.channels() != 3 {
        return Err(ReasonError::ImageDecode {
            digest: digest.to_string(),
            source: RasterError::Decode("keyframe must be a color (P6) image".into()),
        });
    }
    Ok(image)
}

/// Asks the reasoning model for the ordered key-state descriptions.
pub fn build_state_prompts(user_prompt: &str, backend: Backend<'_>) -> Result<Vec<String>, ReasonError> {
    let tpl = STATE_PROMPTS_TEMPLATE;
    let req = request(
        &tpl,
        Role::StatePrompts,
        tpl.render(&[("user_prompt", user_prompt)]),
        vec![],
        vec![],
    );
    let (digest, response) = backend.call(&req)?;
    let malformed = |message: String| ReasonError::Malformed {
        digest: digest.clone(),
        message,
    };
    let states = field(&digest, &response, "states")?
        .as_array()
        .ok_or_else(|| malformed("'states' is not an array".into()))?
        .iter()
        .map(|s| s.as_str().map(str::to_string))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| malformed("'states' must hold strings".into()))?;
    if states.len() < 2 {
        return Err(malformed(format!("{} states returned, need at least 2", states.len())));
    }
    Ok(states)
}

/// First keyframe from text; later keyframes by editing the previous one
/// with an instruction the model writes after seeing it.
pub fn next_keyframe(
    prev_keyframe: Option<&Raster>,
    state_prompt: &str,
    backend: Backend<'_>,
) -> Result<(Raster, Option<String>), ReasonError> {
    match prev_keyframe {
        None => {
            let tpl = T2I_TEMPLATE;
            let req = request(&tpl, Role::T2i, tpl.render(&[("state_prompt", state_prompt)]), vec![], vec![]);
            let (digest, response) = backend.call(&req)?;
            Ok((color_image(&digest, &response)?, None))
        }
        Some(prev) => {
            let tpl = EDIT_TEMPLATE;
            let req = request(
                &tpl,
                Role::Edit,
                tpl.render(&[("state_prompt", state_prompt)]),
                vec![encode_image_b64(prev)],
                vec![],
            );
            let (digest, response) = backend.call(&req)?;
            let edit = string_field(&digest, &response, "edit")?;
            let image = color_image(&digest, &response)?;
            if image.dims() != prev.dims() {
                return Err(ReasonError::Malformed {
                    digest,
                    message: format!("edited keyframe is {:?}, previous is {:?}", image.dims(), prev.dims()),
                });
            }
            Ok((image, Some(edit)))
        }
    }
}

/// One binary mask per label, at keyframe resolution.
pub fn segment_entities(keyframe: &Raster, labels: &[String], backend: Backend<'_>) -> Result<Vec<Raster>, ReasonError> {
    if labels.is_empty() {
        return Err(ReasonError::NoLabels);
    }
    let tpl = SEGMENT_TEMPLATE;
    let req = request(
        &tpl,
        Role::Segment,
        tpl.render(&[("labels", &labels.join("\n"))]),
        vec![encode_image_b64(keyframe)],
        labels.to_vec(),
    );
    let (digest, response) = backend.call(&req)?;
    let encoded = field(&digest, &response, "masks")?
        .as_array()
        .ok_or_else(|| ReasonError::Malformed {
            digest: digest.clone(),
            message: "'masks' is not an array".into(),
        })?;
    if encoded.len() != labels.len() {
        return Err(ReasonError::Malformed {
            digest,
            message: format!("{} masks for {} labels", encoded.len(), labels.len()),
        });
    }
    encoded
        .iter()
        .enumerate()
        .map(|(index, value)| {
            let text = value.as_str().ok_or_else(|| ReasonError::Malformed {
                digest: digest.clone(),
                message: format!("mask {index} is not a string"),
            })?;
            let mask = image_from(&digest, text)?;
            if mask.dims() != keyframe.dims() {
                return Err(ReasonError::MaskShape {
                    index,
                    expected: keyframe.dims(),
                    got: mask.dims(),
                });
            }
            let gray = if mask.channels() == 1 {
                mask
            } else {
                let (w, h) = mask.dims();
                let data = (0..w * h).map(|i| mask.data()[i * 3]).collect();
                Raster::new(w, h, 1, data).expect("channel slice is in range")
            };
            Ok(gray.binarize(MASK_THRESHOLD))
        })
        .collect()
}

/// Transcript of the reasoning stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ReasonTrace {
    pub user_prompt: String,
    pub state_prompts: Vec<String>,
    /// Instructions for keyframes 2..L.
    pub edit_instructions: Vec<String>,
    pub keyframes: Vec<Raster>,
    pub entity_labels: Vec<String>,
    /// `entity_masks[i][k]` is the mask of entity `k` in keyframe `i`.
    pub entity_masks: Vec<Vec<Raster>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceDoc {
    user_prompt: String,
    state_prompts: Vec<String>,
    edit_instructions: Vec<String>,
    entity_labels: Vec<String>,
    keyframes: Vec<String>,
    entity_masks: Vec<Vec<String>>,
}

impl ReasonTrace {
    pub fn milestones(&self) -> usize {
        self.state_prompts.len()
    }

    pub fn validate(&self) -> Result<(), ReasonError> {
        let l = self.state_prompts.len();
        let bad = |m: String| Err(ReasonError::InvalidTrace(m));
        if l < 2 {
            return bad(format!("{l} state prompts, need at least 2"));
        }
        if self.edit_instructions.len() != l - 1 {
            return bad(format!("{} edit instructions for {l} states", self.edit_instructions.len()));
        }
        if self.keyframes.len() != l || self.entity_masks.len() != l {
            return bad("keyframes and masks must cover every state".into());
        }
        if self.entity_masks.iter().any(|m| m.len() != self.entity_labels.len()) {
            return bad("every keyframe needs one mask per entity".into());
        }
        Ok(())
    }

    fn keyframe_name(i: usize) -> String {
        format!("keyframe_{:02}.ppm", i + 1)
    }

    fn mask_name(i: usize, k: usize) -> String {
        format!("mask_{:02}_{:02}.pgm", i + 1, k)
    }

    /// Writes `trace.json` plus keyframe and mask images.
    pub fn write_dir(&self, dir: &Path) -> Result<(), ReasonError> {
        fs::create_dir_all(dir).map_err(|e| ReasonError::io(dir, e))?;
        let doc = TraceDoc {
            user_prompt: self.user_prompt.clone(),
            state_prompts: self.state_prompts.clone(),
            edit_instructions: self.edit_instructions.clone(),
            entity_labels: self.entity_labels.clone(),
            keyframes: (0..self.keyframes.len()).map(Self::keyframe_name).collect(),
            entity_masks: self
                .entity_masks
                .iter()
                .enumerate()
                .map(|(i, masks)| (0..masks.len()).map(|k| Self::mask_name(i, k)).collect())
                .collect(),
        };
        let write_image = |name: &str, image: &Raster| {
            let path = dir.join(name);
            image.write(&path).map_err(|e| ReasonError::io(&path, e))
        };
        for (i, kf) in self.keyframes.iter().enumerate() {
            write_image(&doc.keyframes[i], kf)?;
            for (k, mask) in self.entity_masks[i].iter().enumerate() {
                write_image(&doc.entity_masks[i][k], mask)?;
            }
        }
        let path = dir.join("trace.json");
        fs::write(&path, serde_json::to_string_pretty(&doc).unwrap() + "\n").map_err(|e| ReasonError::io(&path, e))
    }

    pub fn read_dir(dir: &Path) -> Result<ReasonTrace, ReasonError> {
        let path = dir.join("trace.json");
        let text = fs::read_to_string(&path).map_err(|e| ReasonError::io(&path, e))?;
        let doc: TraceDoc = serde_json::from_str(&text).map_err(|e| ReasonError::InvalidTrace(e.to_string()))?;
        let read_image = |name: &String| {
            let p: PathBuf = dir.join(name);
            Raster::read(&p).map_err(|e| ReasonError::io(&p, e))
        };
        let trace = ReasonTrace {
            keyframes: doc.keyframes.iter().map(read_image).collect::<Result<_, _>>()?,
            entity_masks: doc
                .entity_masks
                .iter()
                .map(|row| row.iter().map(read_image).collect::<Result<_, _>>())
                .collect::<Result<_, _>>()?,
            user_prompt: doc.user_prompt,
            state_prompts: doc.state_prompts,
            edit_instructions: doc.edit_instructions,
            entity_labels: doc.entity_labels,
        };
        trace.validate()?;
        Ok(trace)
    }
}

/// Runs state prompting, keyframe synthesis and segmentation.
pub fn run_reason(user_prompt: &str, labels: &[String], backend: Backend<'_>) -> Result<ReasonTrace, ReasonError> {
    let state_prompts = build_state_prompts(user_prompt, backend)?;
    let mut keyframes: Vec<Raster> = Vec::with_capacity(state_prompts.len());
    let mut edit_instructions = Vec::new();
    let mut entity_masks = Vec::new();
    for prompt in &state_prompts {
        let (keyframe, edit) = next_keyframe(keyframes.last(), prompt, backend)?;
        edit_instructions.extend(edit);
        entity_masks.push(segment_entities(&keyframe, labels, backend)?);
        keyframes.push(keyframe);
    }
    let trace = ReasonTrace {
        user_prompt: user_prompt.to_string(),
        state_prompts,
        edit_instructions,
        keyframes,
        entity_labels: labels.to_vec(),
        entity_masks,
    };
    trace.validate()?;
    Ok(trace)
}

/// Asks the motion director for the script. The reply is parsed strictly;
/// a rejected script carries the response digest.
pub fn direct_motion(trace: &ReasonTrace, backend: Backend<'_>) -> Result<MotionScript, ReasonError> {
    trace.validate()?;
    let tpl = DIRECT_MOTION_TEMPLATE;
    let numbered: Vec<String> = trace
        .state_prompts
        .iter()
        .enumerate()
        .map(|(i, p)| format!("{}. {p}", i + 1))
        .collect();
    let prompt = tpl.render(&[
        ("user_prompt", &trace.user_prompt),
        ("state_prompts", &numbered.join("\n")),
        ("labels", &trace.entity_labels.join(", ")),
    ]);
    let images = trace
        .keyframes
        .iter()
        .map(encode_image_b64)
        .chain(trace.entity_masks.iter().flatten().map(encode_image_b64))
        .collect();
    let req = request(&tpl, Role::DirectMotion, prompt, images, trace.entity_labels.clone());
    let (digest, response) = backend.call(&req)?;
    let text = match field(&digest, &response, "script")? {
        Value::String(s) => s.clone(),
        other @ Value::Object(_) => other.to_string(),
        _ => {
            return Err(ReasonError::Malformed {
                digest,
                message: "'script' must be a document".into(),
            })
        }
    };
    let script = parse_script(&text).map_err(|source| ReasonError::Script {
        digest: digest.clone(),
        source,
    })?;
    if script.milestone_count != trace.milestones() {
        return Err(ReasonError::Script {
            digest,
            source: ScriptError::Validation {
                path: "milestone_count".into(),
                message: format!(
                    "script has {} milestones, reasoning produced {}",
                    script.milestone_count,
                    trace.milestones()
                ),
            },
        });
    }
    Ok(script)
}
