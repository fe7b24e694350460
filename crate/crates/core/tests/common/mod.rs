#![allow(dead_code)]

use motion_scaffold::latent::{LatentMask, LatentTensor};
use motion_scaffold::motion_script::{EntityPlan, MotionScript, PrimitiveConfig, PrimitiveKind, StateVector};
use motion_scaffold::Vec2;
use proptest::prelude::*;

pub fn kind() -> impl Strategy<Value = PrimitiveKind> {
    prop::sample::select(PrimitiveKind::ALL.to_vec())
}

pub fn state() -> impl Strategy<Value = StateVector> {
    (0.0..=1.0f64, 0.0..=1.0f64, 0.05..4.0f64, -7.0..7.0f64, 0.0..=1.0f64)
        .prop_map(|(x, y, s, r, alpha)| StateVector::new(x, y, s, r, alpha))
}

pub fn config() -> impl Strategy<Value = PrimitiveConfig> {
    (-2.0..2.0f64, -2.0..2.0f64, 0.0..0.5f64, 1u32..5).prop_map(|(gx, gy, amplitude, cycles)| PrimitiveConfig {
        gravity: Vec2::new(gx, gy),
        amplitude,
        cycles,
    })
}

/// Strictly increasing frames from 0 to `total - 1`.
pub fn milestone_frames(count: usize, total: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::sample::subsequence((1..total - 1).collect::<Vec<_>>(), count - 2).prop_map(move |inner| {
        let mut frames = vec![0];
        frames.extend(inner);
        frames.push(total - 1);
        frames
    })
}

/// Random scripts that pass validation.
pub fn valid_script() -> impl Strategy<Value = MotionScript> {
    (2usize..6, 0usize..40, 1usize..4, 1.0..60.0f64, any::<bool>())
        .prop_flat_map(|(count, extra, n_entities, fps, explicit)| {
            let total = count + extra;
            let entity = (kind(), prop::collection::vec(state(), count), -3i64..3, config());
            let frames = if explicit {
                milestone_frames(count, total).prop_map(Some).boxed()
            } else {
                Just(None).boxed()
            };
            (
                Just(count),
                Just(total),
                Just(fps),
                frames,
                prop::collection::vec(entity, n_entities),
            )
        })
        .prop_map(|(count, total, fps, frames, entities)| MotionScript {
            entities: entities
                .into_iter()
                .enumerate()
                .map(|(k, (kind, milestones, z_order, config))| EntityPlan {
                    entity_id: format!("entity_{k}"),
                    kind,
                    milestones,
                    z_order,
                    config,
                })
                .collect(),
            milestone_count: count,
            total_frames: total,
            milestone_frames: frames,
            fps,
        })
}

pub fn tensor(shape: [usize; 4], scale: f64) -> impl Strategy<Value = LatentTensor> {
    let n: usize = shape.iter().product();
    prop::collection::vec(-scale..scale, n).prop_map(move |data| LatentTensor::new(shape, data).unwrap())
}

pub fn mask(frames: usize, height: usize, width: usize) -> impl Strategy<Value = LatentMask> {
    prop::collection::vec(any::<bool>(), frames * height * width)
        .prop_map(move |data| LatentMask::new(frames, height, width, data).unwrap())
}
