//! Records the `two_body` fixture set from a synthetic backend that draws
//! flat-shaded keyframes and answers every reasoning role deterministically.
//!
//! ```text
//! cargo run -p motion-scaffold-cli --example record_two_body
//! ```

use std::path::Path;

use motion_scaffold::raster::Raster;
use motion_scaffold::reason::{direct_motion, run_reason, Backend, FixtureMode, FixtureStore};
use motion_scaffold::transport::{encode_image_b64, Transport, TransportError};
use motion_scaffold_cli::config::read_config_file;
use motion_scaffold_cli::PipelineConfig;
use serde_json::{json, Value};

const SIZE: usize = 64;

const STATES: [&str; 3] = [
    "The ball rests low on the left while the crate sits at the left edge.",
    "The ball is at the top of its arc in the middle as the crate slides under it.",
    "The ball comes down on the right and the crate stops at the right edge.",
];

/// Normalized (x, y) per milestone.
const BALL: [(f64, f64); 3] = [(0.2, 0.7), (0.5, 0.35), (0.8, 0.7)];
const CRATE: [(f64, f64); 3] = [(0.2, 0.85), (0.5, 0.85), (0.8, 0.85)];

fn pixel(p: (f64, f64)) -> (f64, f64) {
    (p.0 * (SIZE - 1) as f64, p.1 * (SIZE - 1) as f64)
}

fn in_ball(i: usize, x: usize, y: usize) -> bool {
    let (cx, cy) = pixel(BALL[i]);
    let (dx, dy) = (x as f64 - cx, y as f64 - cy);
    dx * dx + dy * dy <= 25.0
}

fn in_crate(i: usize, x: usize, y: usize) -> bool {
    let (cx, cy) = pixel(CRATE[i]);
    (x as f64 - cx).abs() <= 5.0 && (y as f64 - cy).abs() <= 4.0
}

fn keyframe(i: usize) -> Raster {
    let mut img = Raster::filled(SIZE, SIZE, 3, 0.0);
    for y in 0..SIZE {
        for x in 0..SIZE {
            let t = y as f64 / (SIZE - 1) as f64;
            let mut rgb = if t < 0.9 {
                [0.55 + 0.3 * t, 0.7 + 0.2 * t, 0.95 - 0.3 * t]
            } else {
                [0.35, 0.6, 0.3]
            };
            if in_crate(i, x, y) {
                rgb = [0.55, 0.35, 0.15];
            }
            if in_ball(i, x, y) {
                rgb = [0.9, 0.1, 0.1];
            }
            for (c, v) in rgb.iter().enumerate() {
                img.set(x, y, c, *v);
            }
        }
    }
    img.quantized()
}

fn mask(i: usize, label: &str) -> Raster {
    let mut m = Raster::filled(SIZE, SIZE, 1, 0.0);
    for y in 0..SIZE {
        for x in 0..SIZE {
            let on = match label {
                // the ball is drawn on top, so it hides part of the crate
                "ball" => in_ball(i, x, y),
                "crate" => in_crate(i, x, y) && !in_ball(i, x, y),
                _ => false,
            };
            if on {
                m.set(x, y, 0, 1.0);
            }
        }
    }
    m
}

fn state(p: (f64, f64)) -> Value {
    json!({"x": p.0, "y": p.1, "s": 1.0, "r": 0.0, "alpha": 1.0})
}

fn script() -> Value {
    json!({
        "milestone_count": 3,
        "total_frames": 24,
        "fps": 12.0,
        "entities": [
            {"entity_id": "ball", "kind": "Ballistic", "z_order": 1,
             "params": {"gravity": [0.0, 0.4]},
             "milestones": BALL.iter().map(|&p| state(p)).collect::<Vec<_>>()},
            {"entity_id": "crate", "kind": "Linear", "z_order": 0,
             "milestones": CRATE.iter().map(|&p| state(p)).collect::<Vec<_>>()}
        ]
    })
}

struct SyntheticScene {
    encoded: Vec<String>,
}

impl SyntheticScene {
    fn new() -> Self {
        Self {
            encoded: (0..3).map(|i| encode_image_b64(&keyframe(i))).collect(),
        }
    }

    fn state_index(prompt: &str) -> Result<usize, TransportError> {
        STATES.iter().position(|s| prompt.contains(s)).ok_or_else(|| bad("unknown state prompt"))
    }
}

fn bad(message: &str) -> TransportError {
    TransportError::BadResponse {
        endpoint: "synthetic".into(),
        message: message.into(),
    }
}

impl Transport for SyntheticScene {
    fn exchange(&self, request: &Value) -> Result<Value, TransportError> {
        let prompt = request["prompt"].as_str().unwrap_or_default();
        Ok(match request["role"].as_str().unwrap_or_default() {
            "state_prompts" => json!({"states": STATES}),
            "t2i" => json!({"image": self.encoded[Self::state_index(prompt)?]}),
            "edit" => {
                let i = Self::state_index(prompt)?;
                json!({"edit": format!("Move the scene forward: {}", STATES[i]), "image": self.encoded[i]})
            }
            "segment" => {
                let image = request["images"][0].as_str().unwrap_or_default();
                let i = self.encoded.iter().position(|e| e == image).ok_or_else(|| bad("unknown keyframe"))?;
                let masks: Vec<String> = request["labels"]
                    .as_array()
                    .ok_or_else(|| bad("labels missing"))?
                    .iter()
                    .map(|l| encode_image_b64(&mask(i, l.as_str().unwrap_or_default())))
                    .collect();
                json!({"masks": masks})
            }
            "direct_motion" => json!({"script": script()}),
            _ => return Err(bad("unknown role")),
        })
    }
}

fn main() {
    let conf = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/two_body/scenario.conf");
    let cfg = PipelineConfig::from_pairs(&read_config_file(&conf).expect("scenario config")).expect("valid config");
    let fixtures = cfg.fixtures.clone().expect("fixtures dir");
    let store = FixtureStore::new(&fixtures, FixtureMode::Record);
    let scene = SyntheticScene::new();
    let backend = Backend::new(&scene, &store);
    let before = store.len();
    let trace = run_reason(cfg.prompt.as_deref().expect("prompt"), &cfg.entities, backend).expect("reasoning");
    direct_motion(&trace, backend).expect("director");
    println!(
        "{} fixtures in {} ({} new)",
        store.len(),
        fixtures.display(),
        store.len() - before
    );
}
