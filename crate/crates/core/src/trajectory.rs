//! Motion primitives and per-frame state synthesis.
//!
//! Each consecutive pair of milestones of an entity becomes a [`Segment`].
//! The segment's primitive is fitted to hit both endpoint positions, then
//! sampled once per frame. Scale, rotation and opacity interpolate linearly
//! in segment time.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::Vec2;
use crate::motion_script::{resolve_timeline, MotionScript, PrimitiveConfig, PrimitiveKind, ScriptError, StateVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("degenerate segment: duration {duration} must be > 0")]
    DegenerateSegment { duration: f64 },
    #[error("t = {t} outside segment domain [0, {duration}]")]
    OutOfDomain { t: f64, duration: f64 },
    #[error(transparent)]
    Script(#[from] ScriptError),
}

/// Fitted primitive parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrimitiveParams {
    Linear,
    Ballistic { gravity: Vec2, initial_velocity: Vec2 },
    Drifting { amplitude: f64, cycles: u32 },
}

impl PrimitiveParams {
    pub fn kind(&self) -> PrimitiveKind {
        match self {
            PrimitiveParams::Linear => PrimitiveKind::Linear,
            PrimitiveParams::Ballistic { .. } => PrimitiveKind::Ballistic,
            PrimitiveParams::Drifting { .. } => PrimitiveKind::Drifting,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start_state: StateVector,
    pub end_state: StateVector,
    pub start_frame: usize,
    pub end_frame: usize,
    pub kind: PrimitiveKind,
    pub params: PrimitiveParams,
}

impl Segment {
    pub fn duration(&self, fps: f64) -> f64 {
        (self.end_frame - self.start_frame) as f64 / fps
    }

    /// State at absolute frame `frame`, which must lie within the segment.
    pub fn state_at(&self, frame: usize, fps: f64) -> Result<StateVector, TrajectoryError> {
        if frame == self.end_frame {
            return Ok(self.end_state);
        }
        let duration = self.duration(fps);
        let t = (frame as f64 - self.start_frame as f64) / fps;
        let position = eval_position(
            &self.params,
            self.start_state.position(),
            self.end_state.position(),
            duration,
            t,
        )?;
        let u = (frame - self.start_frame) as f64 / (self.end_frame - self.start_frame) as f64;
        Ok(interp_state(&self.start_state, &self.end_state, u, position))
    }
}

/// Solves the primitive's free parameters so that the trajectory starts at
/// `c_start` and reaches `c_end` after `duration` seconds.
pub fn fit_primitive(
    kind: PrimitiveKind,
    c_start: Vec2,
    c_end: Vec2,
    duration: f64,
    config: &PrimitiveConfig,
) -> Result<PrimitiveParams, TrajectoryError> {
    if duration.is_nan() || duration <= 0.0 {
        return Err(TrajectoryError::DegenerateSegment { duration });
    }
    Ok(match kind {
        PrimitiveKind::Linear => PrimitiveParams::Linear,
        PrimitiveKind::Ballistic => {
            // c(T) = c0 + v0 T + g T^2 / 2 = c1
            let g = config.gravity;
            let initial_velocity = (c_end - c_start) * (1.0 / duration) - g * (0.5 * duration);
            PrimitiveParams::Ballistic {
                gravity: g,
                initial_velocity,
            }
        }
        PrimitiveKind::Drifting => PrimitiveParams::Drifting {
            amplitude: config.amplitude,
            cycles: config.cycles,
        },
    })
}

/// Position along a fitted primitive at segment time `t` seconds. The result
/// may leave the unit square.
pub fn eval_position(
    params: &PrimitiveParams,
    c_start: Vec2,
    c_end: Vec2,
    duration: f64,
    t: f64,
) -> Result<Vec2, TrajectoryError> {
    if duration.is_nan() || duration <= 0.0 {
        return Err(TrajectoryError::DegenerateSegment { duration });
    }
    if !(0.0..=duration).contains(&t) {
        return Err(TrajectoryError::OutOfDomain { t, duration });
    }
    let delta = c_end - c_start;
    let linear = c_start + delta * (t / duration);
    Ok(match *params {
        PrimitiveParams::Linear => linear,
        PrimitiveParams::Ballistic {
            gravity,
            initial_velocity,
        } => c_start + initial_velocity * t + gravity * (0.5 * t * t),
        PrimitiveParams::Drifting { amplitude, cycles } => {
            let length = delta.norm();
            let normal = if length == 0.0 {
                Vec2::new(0.0, -1.0)
            } else {
                Vec2::new(delta.y / length, -delta.x / length)
            };
            let sway = amplitude * length * (TAU * cycles as f64 * t / duration).sin();
            linear + normal * sway
        }
    })
}

/// Takes position from `position` and linearly blends `s`, `r`, `alpha`.
pub fn interp_state(start: &StateVector, end: &StateVector, u: f64, position: Vec2) -> StateVector {
    let lerp = |a: f64, b: f64| (1.0 - u) * a + u * b;
    StateVector {
        x: position.x,
        y: position.y,
        s: lerp(start.s, end.s),
        r: lerp(start.r, end.r),
        alpha: lerp(start.alpha, end.alpha),
    }
}

/// Dense per-frame, per-entity states. Entities keep script order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStateTable {
    frames: usize,
    entity_ids: Vec<String>,
    states: Vec<StateVector>,
}

impl FrameStateTable {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn entity_ids(&self) -> &[String] {
        &self.entity_ids
    }

    pub fn entity_index(&self, id: &str) -> Option<usize> {
        self.entity_ids.iter().position(|e| e == id)
    }

    pub fn get(&self, frame: usize, entity: usize) -> StateVector {
        self.states[frame * self.entity_ids.len() + entity]
    }

    /// Tab-separated dump: one header line, then one row per (frame, entity).
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("frame\tentity_id\tx\ty\ts\tr\talpha\n");
        for t in 0..self.frames {
            for (k, id) in self.entity_ids.iter().enumerate() {
                let s = self.get(t, k);
                writeln!(
                    out,
                    "{t}\t{id}\t{:.16e}\t{:.16e}\t{:.16e}\t{:.16e}\t{:.16e}",
                    s.x, s.y, s.s, s.r, s.alpha
                )
                .unwrap();
            }
        }
        out
    }
}

/// Builds the fitted segments of every entity, in script order.
pub fn build_segments(script: &MotionScript) -> Result<Vec<Vec<Segment>>, TrajectoryError> {
    script.validate()?;
    let timeline = resolve_timeline(script)?;
    script
        .entities
        .iter()
        .map(|entity| {
            timeline
                .windows(2)
                .zip(entity.milestones.windows(2))
                .map(|(frames, states)| {
                    let duration = (frames[1] - frames[0]) as f64 / script.fps;
                    let params = fit_primitive(
                        entity.kind,
                        states[0].position(),
                        states[1].position(),
                        duration,
                        &entity.config,
                    )?;
                    Ok(Segment {
                        start_state: states[0],
                        end_state: states[1],
                        start_frame: frames[0],
                        end_frame: frames[1],
                        kind: entity.kind,
                        params,
                    })
                })
                .collect()
        })
        .collect()
}

pub fn plan_frames(script: &MotionScript) -> Result<FrameStateTable, TrajectoryError> {
    let segments = build_segments(script)?;
    let frames = script.total_frames;
    let count = script.entities.len();
    let mut states = vec![StateVector::at(0.0, 0.0); frames * count];

    for (k, entity_segments) in segments.iter().enumerate() {
        let last = entity_segments.len() - 1;
        for (j, segment) in entity_segments.iter().enumerate() {
            // Shared boundary frames belong to the later segment.
            let stop = if j == last {
                segment.end_frame + 1
            } else {
                segment.end_frame
            };
            for frame in segment.start_frame..stop {
                states[frame * count + k] = segment.state_at(frame, script.fps)?;
            }
        }
    }

    Ok(FrameStateTable {
        frames,
        entity_ids: script.entities.iter().map(|e| e.entity_id.clone()).collect(),
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion_script::EntityPlan;

    const EPS: f64 = 1e-12;

    fn close(a: Vec2, b: Vec2, tol: f64) -> bool {
        (a - b).max_abs() <= tol
    }

    #[test]
    fn ballistic_fit_closed_form() {
        let cfg = PrimitiveConfig::default();
        let params = fit_primitive(
            PrimitiveKind::Ballistic,
            Vec2::new(0.2, 0.8),
            Vec2::new(0.8, 0.8),
            1.0,
            &cfg,
        )
        .unwrap();
        let PrimitiveParams::Ballistic { initial_velocity, .. } = params else {
            panic!("wrong kind");
        };
        assert!(close(initial_velocity, Vec2::new(0.6, -0.2), EPS));

        let mid = eval_position(&params, Vec2::new(0.2, 0.8), Vec2::new(0.8, 0.8), 1.0, 0.5).unwrap();
        assert!(close(mid, Vec2::new(0.5, 0.75), EPS), "{mid:?}");
    }

    #[test]
    fn zero_gravity_ballistic_is_linear() {
        let cfg = PrimitiveConfig {
            gravity: Vec2::ZERO,
            ..Default::default()
        };
        let (a, b) = (Vec2::new(0.1, 0.3), Vec2::new(0.7, 0.9));
        let params = fit_primitive(PrimitiveKind::Ballistic, a, b, 2.0, &cfg).unwrap();
        let PrimitiveParams::Ballistic { initial_velocity, .. } = params else {
            unreachable!()
        };
        assert!(close(initial_velocity, (b - a) * 0.5, EPS));
    }

    #[test]
    fn linear_and_drifting_examples() {
        let lin = fit_primitive(
            PrimitiveKind::Linear,
            Vec2::ZERO,
            Vec2::new(1.0, 1.0),
            1.0,
            &PrimitiveConfig::default(),
        )
        .unwrap();
        assert_eq!(lin, PrimitiveParams::Linear);
        let p = eval_position(&lin, Vec2::ZERO, Vec2::new(1.0, 1.0), 1.0, 0.5).unwrap();
        assert_eq!(p, Vec2::new(0.5, 0.5));

        let drift = PrimitiveParams::Drifting {
            amplitude: 0.1,
            cycles: 1,
        };
        let p = eval_position(&drift, Vec2::new(0.0, 0.5), Vec2::new(1.0, 0.5), 1.0, 0.25).unwrap();
        assert!(close(p, Vec2::new(0.25, 0.4), EPS), "{p:?}");
    }

    #[test]
    fn degenerate_and_out_of_domain() {
        let cfg = PrimitiveConfig::default();
        assert_eq!(
            fit_primitive(PrimitiveKind::Linear, Vec2::ZERO, Vec2::ZERO, 0.0, &cfg),
            Err(TrajectoryError::DegenerateSegment { duration: 0.0 })
        );
        assert!(matches!(
            eval_position(&PrimitiveParams::Linear, Vec2::ZERO, Vec2::ZERO, 1.0, 1.5),
            Err(TrajectoryError::OutOfDomain { .. })
        ));
        assert!(matches!(
            eval_position(&PrimitiveParams::Linear, Vec2::ZERO, Vec2::ZERO, 1.0, -0.1),
            Err(TrajectoryError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn interpolation_examples() {
        let start = StateVector::new(0.0, 0.0, 1.0, 0.0, 1.0);
        let end = StateVector::new(1.0, 1.0, 2.0, std::f64::consts::PI, 0.0);
        let pos = Vec2::new(0.3, 0.4);

        let at0 = interp_state(&start, &end, 0.0, pos);
        assert_eq!((at0.x, at0.y, at0.s, at0.r, at0.alpha), (0.3, 0.4, 1.0, 0.0, 1.0));

        let mid = interp_state(&start, &end, 0.5, pos);
        assert!((mid.s - 1.5).abs() < EPS);
        assert!((mid.r - std::f64::consts::FRAC_PI_2).abs() < EPS);
        assert!((mid.alpha - 0.5).abs() < EPS);

        let same = interp_state(&end, &end, 0.37, pos);
        assert_eq!((same.s, same.r, same.alpha), (end.s, end.r, end.alpha));
    }

    fn minimal_script() -> MotionScript {
        MotionScript {
            entities: vec![EntityPlan::new(
                "ball",
                PrimitiveKind::Linear,
                vec![StateVector::at(0.2, 0.5), StateVector::at(0.8, 0.5)],
            )],
            milestone_count: 2,
            total_frames: 16,
            milestone_frames: None,
            fps: 8.0,
        }
    }

    #[test]
    fn plan_minimal_linear() {
        let table = plan_frames(&minimal_script()).unwrap();
        assert_eq!(table.frames(), 16);
        let s = table.get(8, 0);
        assert!((s.x - (0.2 + 8.0 / 15.0 * 0.6)).abs() < EPS);
        assert!((s.x - 0.52).abs() < 1e-9);
        assert_eq!(table.get(0, 0), StateVector::at(0.2, 0.5));
        assert_eq!(table.get(15, 0), StateVector::at(0.8, 0.5));
    }

    #[test]
    fn ballistic_second_difference_matches_gravity() {
        let script = MotionScript {
            entities: vec![EntityPlan::new(
                "ball",
                PrimitiveKind::Ballistic,
                vec![
                    StateVector::at(0.1, 0.8),
                    StateVector::at(0.5, 0.3),
                    StateVector::at(0.9, 0.8),
                ],
            )],
            milestone_count: 3,
            total_frames: 25,
            milestone_frames: Some(vec![0, 10, 24]),
            fps: 12.0,
        };
        let table = plan_frames(&script).unwrap();
        let dt = 1.0 / script.fps;
        let g = PrimitiveConfig::default().gravity;
        for (lo, hi) in [(0usize, 10usize), (10, 24)] {
            for t in lo + 1..hi {
                let p = |f: usize| table.get(f, 0).position();
                let second = p(t + 1) - p(t) * 2.0 + p(t - 1);
                assert!(close(second, g * (dt * dt), 1e-6), "frame {t}: {second:?}");
            }
        }
        for (i, &f) in [0usize, 10, 24].iter().enumerate() {
            let got = table.get(f, 0);
            let want = script.entities[0].milestones[i];
            assert!(close(got.position(), want.position(), 1e-9));
        }
    }

    #[test]
    fn tsv_has_header_and_rows() {
        let tsv = plan_frames(&minimal_script()).unwrap().to_tsv();
        let lines: Vec<_> = tsv.lines().collect();
        assert_eq!(lines.len(), 17);
        assert_eq!(lines[0], "frame\tentity_id\tx\ty\ts\tr\talpha");
        assert!(lines[1].starts_with("0\tball\t2.0000000000000001e-1"));
    }
}
