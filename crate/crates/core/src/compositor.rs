//! Coarse scaffold rendering: per-entity similarity warps, occupancy maps,
//! background hole filling and ordered alpha-over compositing.
//!
//! A state `(x, y)` places the asset anchor at output pixel
//! `(x * (width - 1), y * (height - 1))`; the anchor itself sits at
//! `(ax * (crop_w - 1), ay * (crop_h - 1))` in crop pixels. Pixel centers
//! are at integer coordinates.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::Vec2;
use crate::motion_script::{MotionScript, StateVector};
use crate::raster::{Raster, RasterError};
use crate::trajectory::{plan_frames, TrajectoryError};

pub const MASK_THRESHOLD: f64 = 0.5;
const SMOOTHING_PASSES: usize = 8;

#[derive(Debug, Error)]
pub enum CompositorError {
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error("every pixel is a hole; nothing to inpaint from")]
    Unfillable,
    #[error("no asset for script entity '{0}'")]
    MissingAsset(String),
    #[error("invalid asset '{id}': {reason}")]
    InvalidAsset { id: String, reason: String },
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Appearance crop and binary mask of one entity, cut from the first
/// keyframe.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityAsset {
    pub entity_id: String,
    pub crop: Raster,
    pub mask: Raster,
    /// Crop-local normalized point that lands on the state position.
    pub anchor: Vec2,
}

impl EntityAsset {
    pub fn new(entity_id: impl Into<String>, crop: Raster, mask: Raster) -> Result<Self, CompositorError> {
        let asset = Self {
            entity_id: entity_id.into(),
            crop,
            mask,
            anchor: Vec2::new(0.5, 0.5),
        };
        asset.validate()?;
        Ok(asset)
    }

    pub fn validate(&self) -> Result<(), CompositorError> {
        let invalid = |reason: &str| CompositorError::InvalidAsset {
            id: self.entity_id.clone(),
            reason: reason.to_string(),
        };
        if self.crop.channels() != 3 {
            return Err(invalid("crop must have 3 channels"));
        }
        if self.mask.channels() != 1 {
            return Err(invalid("mask must have 1 channel"));
        }
        if self.crop.dims() != self.mask.dims() {
            return Err(invalid("crop and mask dimensions differ"));
        }
        if !self.mask.is_binary() {
            return Err(invalid("mask is not binary"));
        }
        Ok(())
    }

    /// Cuts the mask's bounding box out of `keyframe`. Returns `None` for an
    /// empty mask.
    pub fn extract(entity_id: &str, keyframe: &Raster, mask: &Raster) -> Result<Option<Self>, CompositorError> {
        check_dims(keyframe.dims(), mask.dims())?;
        let (w, h) = mask.dims();
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for y in 0..h {
            for x in 0..w {
                if mask.get(x, y, 0) >= MASK_THRESHOLD {
                    bbox = Some(match bbox {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        let Some((x0, y0, x1, y1)) = bbox else {
            return Ok(None);
        };
        let (cw, ch) = (x1 - x0 + 1, y1 - y0 + 1);
        let mut crop = Vec::with_capacity(cw * ch * 3);
        let mut cut = Vec::with_capacity(cw * ch);
        for y in y0..=y1 {
            for x in x0..=x1 {
                for c in 0..3 {
                    crop.push(keyframe.get(x, y, c.min(keyframe.channels() - 1)));
                }
                cut.push(if mask.get(x, y, 0) >= MASK_THRESHOLD { 1.0 } else { 0.0 });
            }
        }
        Ok(Some(EntityAsset::new(
            entity_id,
            Raster::new(cw, ch, 3, crop)?,
            Raster::new(cw, ch, 1, cut)?,
        )?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseVideo {
    pub frames: Vec<Raster>,
    pub occupancy: Vec<Raster>,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
}

impl CoarseVideo {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Writes `frame_%05d.ppm` and `mask_%05d.pgm` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), CompositorError> {
        fs::create_dir_all(dir).map_err(|source| RasterError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        for (t, (frame, occ)) in self.frames.iter().zip(&self.occupancy).enumerate() {
            frame.write(dir.join(frame_file_name(t)))?;
            occ.write(dir.join(mask_file_name(t)))?;
        }
        Ok(())
    }

    /// Reads consecutive frame/mask pairs starting at index 0.
    pub fn read_dir(dir: &Path, fps: f64) -> Result<CoarseVideo, CompositorError> {
        let mut frames = Vec::new();
        let mut occupancy = Vec::new();
        while dir.join(frame_file_name(frames.len())).exists() {
            let t = frames.len();
            frames.push(Raster::read(dir.join(frame_file_name(t)))?);
            occupancy.push(Raster::read(dir.join(mask_file_name(t)))?);
        }
        let (width, height) = frames.first().map(Raster::dims).unwrap_or((0, 0));
        for (f, m) in frames.iter().zip(&occupancy) {
            check_dims((width, height), f.dims())?;
            check_dims((width, height), m.dims())?;
        }
        Ok(CoarseVideo {
            frames,
            occupancy,
            width,
            height,
            fps,
        })
    }
}

pub fn frame_file_name(t: usize) -> String {
    format!("frame_{t:05}.ppm")
}

pub fn mask_file_name(t: usize) -> String {
    format!("mask_{t:05}.pgm")
}

fn check_dims(expected: (usize, usize), got: (usize, usize)) -> Result<(), CompositorError> {
    if expected != got {
        return Err(CompositorError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Bilinear sample with zero outside the raster.
fn sample_bilinear(src: &Raster, u: f64, v: f64, c: usize) -> f64 {
    let (w, h) = (src.width() as isize, src.height() as isize);
    let x0 = u.floor();
    let y0 = v.floor();
    let fx = u - x0;
    let fy = v - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let tap = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            src.get(x as usize, y as usize, c)
        }
    };
    let top = tap(x0, y0) * (1.0 - fx) + tap(x0 + 1, y0) * fx;
    let bottom = tap(x0, y0 + 1) * (1.0 - fx) + tap(x0 + 1, y0 + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Applies the state's similarity transform to the asset, producing a
/// full-canvas crop and a binarized mask.
pub fn warp_asset(asset: &EntityAsset, state: &StateVector, out_w: usize, out_h: usize) -> (Raster, Raster) {
    let mut crop = Raster::filled(out_w, out_h, 3, 0.0);
    let mut mask = Raster::filled(out_w, out_h, 1, 0.0);

    let (cw, ch) = asset.crop.dims();
    let center = Vec2::new(state.x * (out_w as f64 - 1.0), state.y * (out_h as f64 - 1.0));
    let anchor = Vec2::new(asset.anchor.x * (cw as f64 - 1.0), asset.anchor.y * (ch as f64 - 1.0));
    let (sin, cos) = state.r.sin_cos();
    let inv_s = 1.0 / state.s;

    // Output-space bounding box of the crop, with slack for the bilinear
    // footprint. cw + ch bounds the anchor-to-corner distance.
    let reach = (cw as f64 + ch as f64 + 2.0) * state.s;
    let lo_x = ((center.x - reach).floor().max(0.0)) as usize;
    let lo_y = ((center.y - reach).floor().max(0.0)) as usize;
    let hi_x = ((center.x + reach).ceil().min(out_w as f64 - 1.0)).max(-1.0);
    let hi_y = ((center.y + reach).ceil().min(out_h as f64 - 1.0)).max(-1.0);
    if hi_x < 0.0 || hi_y < 0.0 {
        return (crop, mask);
    }

    for py in lo_y..=hi_y as usize {
        for px in lo_x..=hi_x as usize {
            let dx = px as f64 - center.x;
            let dy = py as f64 - center.y;
            // inverse rotation, then inverse scale
            let u = anchor.x + (cos * dx + sin * dy) * inv_s;
            let v = anchor.y + (-sin * dx + cos * dy) * inv_s;
            if u <= -1.0 || v <= -1.0 || u >= cw as f64 || v >= ch as f64 {
                continue;
            }
            if sample_bilinear(&asset.mask, u, v, 0) >= MASK_THRESHOLD {
                mask.set(px, py, 0, 1.0);
            }
            for c in 0..3 {
                crop.set(px, py, c, sample_bilinear(&asset.crop, u, v, c));
            }
        }
    }
    (crop, mask)
}

/// Pixelwise union of binary masks on a `width` x `height` canvas.
pub fn occupancy_map(masks: &[&Raster], width: usize, height: usize) -> Result<Raster, CompositorError> {
    let mut out = Raster::filled(width, height, 1, 0.0);
    for mask in masks {
        check_dims((width, height), mask.dims())?;
        for y in 0..height {
            for x in 0..width {
                if mask.get(x, y, 0) >= MASK_THRESHOLD {
                    out.set(x, y, 0, 1.0);
                }
            }
        }
    }
    Ok(out)
}

/// Fills hole pixels by repeated 4-neighbor averaging from the known region,
/// then smooths the filled region. Non-hole pixels are returned unchanged.
pub fn inpaint_background(keyframe: &Raster, holes: &Raster) -> Result<Raster, CompositorError> {
    check_dims(keyframe.dims(), holes.dims())?;
    let (w, h) = keyframe.dims();
    let channels = keyframe.channels();
    let hole: Vec<bool> = holes.data().iter().map(|&v| v >= MASK_THRESHOLD).collect();
    if !hole.iter().any(|&b| b) {
        return Ok(keyframe.clone());
    }
    if hole.iter().all(|&b| b) {
        return Err(CompositorError::Unfillable);
    }

    let neighbors = |i: usize| {
        let (x, y) = (i % w, i / w);
        let mut n = [usize::MAX; 4];
        if x > 0 {
            n[0] = i - 1;
        }
        if x + 1 < w {
            n[1] = i + 1;
        }
        if y > 0 {
            n[2] = i - w;
        }
        if y + 1 < h {
            n[3] = i + w;
        }
        n
    };

    let mut values = keyframe.data().to_vec();
    let mut filled: Vec<bool> = hole.iter().map(|&b| !b).collect();
    let mut pending: Vec<usize> = (0..w * h).filter(|&i| hole[i]).collect();

    while !pending.is_empty() {
        let mut updates = Vec::new();
        for &i in &pending {
            let known: Vec<usize> = neighbors(i)
                .into_iter()
                .filter(|&j| j != usize::MAX && filled[j])
                .collect();
            if known.is_empty() {
                continue;
            }
            let mut px = vec![0.0; channels];
            for (c, slot) in px.iter_mut().enumerate() {
                *slot = known.iter().map(|&j| values[j * channels + c]).sum::<f64>() / known.len() as f64;
            }
            updates.push((i, px));
        }
        for (i, px) in &updates {
            values[i * channels..(i + 1) * channels].copy_from_slice(px);
            filled[*i] = true;
        }
        pending.retain(|&i| !filled[i]);
    }

    let hole_pixels: Vec<usize> = (0..w * h).filter(|&i| hole[i]).collect();
    for _ in 0..SMOOTHING_PASSES {
        let snapshot = values.clone();
        for &i in &hole_pixels {
            let around: Vec<usize> = neighbors(i).into_iter().filter(|&j| j != usize::MAX).collect();
            for c in 0..channels {
                values[i * channels + c] =
                    around.iter().map(|&j| snapshot[j * channels + c]).sum::<f64>() / around.len() as f64;
            }
        }
    }

    Ok(Raster::new(w, h, channels, values)?)
}

/// One warped entity ready for compositing.
#[derive(Debug, Clone, Copy)]
pub struct Layer<'a> {
    pub crop: &'a Raster,
    pub mask: &'a Raster,
    pub alpha: f64,
}

/// Alpha-over of `layers` (already in ascending z-order) onto `background`.
pub fn composite_frame(background: &Raster, layers: &[Layer<'_>]) -> Result<(Raster, Raster), CompositorError> {
    let dims = background.dims();
    for layer in layers {
        check_dims(dims, layer.crop.dims())?;
        check_dims(dims, layer.mask.dims())?;
    }
    let (w, h) = dims;
    let mut out = background.clone();
    for layer in layers {
        let a = layer.alpha;
        for y in 0..h {
            for x in 0..w {
                if layer.mask.get(x, y, 0) < MASK_THRESHOLD {
                    continue;
                }
                for c in 0..out.channels() {
                    let src = layer.crop.get(x, y, c.min(layer.crop.channels() - 1));
                    out.set(x, y, c, out.get(x, y, c) * (1.0 - a) + src * a);
                }
            }
        }
    }
    let masks: Vec<&Raster> = layers.iter().map(|l| l.mask).collect();
    let occupancy = occupancy_map(&masks, w, h)?;
    Ok((out, occupancy))
}

/// Renders the coarse scaffold video for `script`.
///
/// The background is inpainted once, from the union of the entities'
/// frame-0 footprints, and shared by every frame.
pub fn render_coarse(
    script: &MotionScript,
    assets: &[EntityAsset],
    background_key: &Raster,
    width: usize,
    height: usize,
) -> Result<CoarseVideo, CompositorError> {
    check_dims((width, height), background_key.dims())?;
    let table = plan_frames(script)?;

    let by_entity: Vec<&EntityAsset> = script
        .entities
        .iter()
        .map(|e| {
            assets
                .iter()
                .find(|a| a.entity_id == e.entity_id)
                .ok_or_else(|| CompositorError::MissingAsset(e.entity_id.clone()))
        })
        .collect::<Result<_, _>>()?;
    for asset in &by_entity {
        asset.validate()?;
    }

    let order: Vec<usize> = script
        .draw_order()
        .iter()
        .map(|e| table.entity_index(&e.entity_id).expect("entity in table"))
        .collect();

    let first: Vec<Raster> = (0..by_entity.len())
        .map(|k| warp_asset(by_entity[k], &table.get(0, k), width, height).1)
        .collect();
    let holes = occupancy_map(&first.iter().collect::<Vec<_>>(), width, height)?;
    let background = inpaint_background(background_key, &holes)?;

    let rendered: Vec<(Raster, Raster)> = (0..table.frames())
        .into_par_iter()
        .map(|t| {
            let warped: Vec<(Raster, Raster, f64)> = order
                .iter()
                .map(|&k| {
                    let state = table.get(t, k);
                    let (crop, mask) = warp_asset(by_entity[k], &state, width, height);
                    (crop, mask, state.alpha)
                })
                .collect();
            let layers: Vec<Layer<'_>> = warped
                .iter()
                .map(|(crop, mask, alpha)| Layer {
                    crop,
                    mask,
                    alpha: *alpha,
                })
                .collect();
            composite_frame(&background, &layers)
        })
        .collect::<Result<_, _>>()?;

    let (frames, occupancy) = rendered.into_iter().unzip();
    Ok(CoarseVideo {
        frames,
        occupancy,
        width,
        height,
        fps: script.fps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion_script::{EntityPlan, PrimitiveKind};

    fn block_asset(id: &str, side: usize) -> EntityAsset {
        EntityAsset::new(
            id,
            Raster::filled(side, side, 3, 1.0),
            Raster::filled(side, side, 1, 1.0),
        )
        .unwrap()
    }

    fn active(mask: &Raster) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                if mask.get(x, y, 0) == 1.0 {
                    v.push((x, y));
                }
            }
        }
        v
    }

    #[test]
    fn identity_warp_places_centered_block() {
        let (_, mask) = warp_asset(&block_asset("a", 4), &StateVector::at(0.5, 0.5), 8, 8);
        let px = active(&mask);
        assert_eq!(px.len(), 16);
        assert!(px.iter().all(|&(x, y)| (2..6).contains(&x) && (2..6).contains(&y)));
    }

    #[test]
    fn half_turn_maps_corner_to_opposite_corner() {
        let mut crop = Raster::filled(4, 4, 3, 0.0);
        for c in 0..3 {
            crop.set(0, 0, c, 1.0);
        }
        let asset = EntityAsset::new("a", crop, Raster::filled(4, 4, 1, 1.0)).unwrap();
        let state = StateVector::new(0.5, 0.5, 1.0, std::f64::consts::PI, 1.0);
        let (warped, _) = warp_asset(&asset, &state, 8, 8);
        let mut best = (0, 0, 0.0);
        for y in 0..8 {
            for x in 0..8 {
                if warped.get(x, y, 0) > best.2 {
                    best = (x, y, warped.get(x, y, 0));
                }
            }
        }
        // corner offset (-1.5, -1.5) from the anchor rotates to (+1.5, +1.5)
        assert!(best.0.abs_diff(5) <= 1 && best.1.abs_diff(5) <= 1, "{best:?}");
        assert!(best.2 > 0.9);
    }

    #[test]
    fn doubling_scale_quadruples_area() {
        let asset = block_asset("a", 4);
        let base = warp_asset(&asset, &StateVector::at(0.5, 0.5), 16, 16).1.count_active() as f64;
        let big = warp_asset(&asset, &StateVector::new(0.5, 0.5, 2.0, 0.0, 1.0), 16, 16)
            .1
            .count_active() as f64;
        let ratio = big / base;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn occupancy_union_cases() {
        let empty = occupancy_map(&[], 8, 8).unwrap();
        assert_eq!(empty.count_active(), 0);

        let mut a = Raster::filled(8, 8, 1, 0.0);
        a.set(1, 1, 0, 1.0);
        let mut b = Raster::filled(8, 8, 1, 0.0);
        b.set(6, 3, 0, 1.0);
        assert_eq!(occupancy_map(&[&a, &b], 8, 8).unwrap().count_active(), 2);
        assert_eq!(occupancy_map(&[&a, &a], 8, 8).unwrap(), a);
        assert!(matches!(
            occupancy_map(&[&Raster::filled(4, 4, 1, 0.0)], 8, 8),
            Err(CompositorError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn inpaint_cases() {
        let key = Raster::new(3, 3, 1, (0..9).map(|i| i as f64 / 10.0).collect()).unwrap();
        let none = Raster::filled(3, 3, 1, 0.0);
        assert_eq!(inpaint_background(&key, &none).unwrap(), key);

        let mut holes = Raster::filled(3, 3, 1, 0.0);
        holes.set(0, 0, 0, 1.0);
        holes.set(1, 1, 0, 1.0);
        holes.set(2, 1, 0, 1.0);
        let gray = Raster::filled(3, 3, 3, 0.5);
        assert_eq!(inpaint_background(&gray, &holes).unwrap(), gray);

        assert!(matches!(
            inpaint_background(&key, &Raster::filled(3, 3, 1, 1.0)),
            Err(CompositorError::Unfillable)
        ));
    }

    #[test]
    fn single_hole_gets_neighbor_mean() {
        let mut key = Raster::filled(3, 3, 1, 0.0);
        key.set(1, 0, 0, 0.2);
        key.set(0, 1, 0, 0.4);
        key.set(2, 1, 0, 0.6);
        key.set(1, 2, 0, 0.8);
        key.set(1, 1, 0, 1.0);
        let mut holes = Raster::filled(3, 3, 1, 0.0);
        holes.set(1, 1, 0, 1.0);
        let out = inpaint_background(&key, &holes).unwrap();
        assert!((out.get(1, 1, 0) - 0.5).abs() < 1e-12);
        for (i, (&a, &b)) in out.data().iter().zip(key.data()).enumerate() {
            if i != 4 {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn alpha_over_examples() {
        let bg = Raster::filled(4, 4, 3, 0.5);
        let crop = Raster::filled(4, 4, 3, 1.0);
        let mut mask = Raster::filled(4, 4, 1, 0.0);
        mask.set(1, 1, 0, 1.0);
        mask.set(2, 1, 0, 1.0);

        let (opaque, occ) = composite_frame(&bg, &[Layer { crop: &crop, mask: &mask, alpha: 1.0 }]).unwrap();
        assert_eq!(opaque.get(1, 1, 0), 1.0);
        assert_eq!(opaque.get(0, 0, 0), 0.5);
        assert_eq!(occ, mask);

        let (half, _) = composite_frame(&bg, &[Layer { crop: &crop, mask: &mask, alpha: 0.5 }]).unwrap();
        assert_eq!(half.get(2, 1, 1), 0.75);
        assert_eq!(half.get(3, 3, 2), 0.5);
    }

    fn linear_script(entities: Vec<EntityPlan>) -> MotionScript {
        MotionScript {
            entities,
            milestone_count: 2,
            total_frames: 16,
            milestone_frames: None,
            fps: 8.0,
        }
    }

    fn centroid(mask: &Raster) -> (f64, f64) {
        let px = active(mask);
        let n = px.len() as f64;
        (
            px.iter().map(|p| p.0 as f64).sum::<f64>() / n,
            px.iter().map(|p| p.1 as f64).sum::<f64>() / n,
        )
    }

    #[test]
    fn render_tracks_planned_centroid() {
        let script = linear_script(vec![EntityPlan::new(
            "ball",
            PrimitiveKind::Linear,
            vec![StateVector::at(0.2, 0.5), StateVector::at(0.8, 0.5)],
        )]);
        let key = Raster::filled(32, 32, 3, 0.3);
        let video = render_coarse(&script, &[block_asset("ball", 5)], &key, 32, 32).unwrap();
        assert_eq!(video.len(), 16);
        let (cx, cy) = centroid(&video.occupancy[8]);
        assert!((cx - 0.52 * 31.0).abs() <= 1.0, "cx {cx}");
        assert!((cy - 0.5 * 31.0).abs() <= 1.0, "cy {cy}");
    }

    #[test]
    fn invisible_entities_leave_background() {
        let mut invisible = StateVector::at(0.3, 0.3);
        invisible.alpha = 0.0;
        let mut end = StateVector::at(0.7, 0.6);
        end.alpha = 0.0;
        let script = linear_script(vec![EntityPlan::new("ghost", PrimitiveKind::Linear, vec![invisible, end])]);
        let key = Raster::new(16, 16, 3, (0..768).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        let video = render_coarse(&script, &[block_asset("ghost", 3)], &key, 16, 16).unwrap();
        let holes = warp_asset(&block_asset("ghost", 3), &invisible, 16, 16).1;
        let background = inpaint_background(&key, &holes).unwrap();
        for (frame, occ) in video.frames.iter().zip(&video.occupancy) {
            assert_eq!(frame, &background);
            assert!(occ.count_active() > 0);
        }
    }

    #[test]
    fn empty_script_reproduces_key_and_missing_asset_errors() {
        let key = Raster::filled(8, 8, 3, 0.25);
        let video = render_coarse(&linear_script(vec![]), &[], &key, 8, 8).unwrap();
        assert!(video.frames.iter().all(|f| f == &key));

        let script = linear_script(vec![EntityPlan::new(
            "ball",
            PrimitiveKind::Linear,
            vec![StateVector::at(0.2, 0.5), StateVector::at(0.8, 0.5)],
        )]);
        assert!(matches!(
            render_coarse(&script, &[], &key, 8, 8),
            Err(CompositorError::MissingAsset(id)) if id == "ball"
        ));
    }

    #[test]
    fn extract_cuts_bounding_box() {
        let mut key = Raster::filled(6, 6, 3, 0.0);
        let mut mask = Raster::filled(6, 6, 1, 0.0);
        for (x, y) in [(2, 1), (3, 1), (2, 2), (3, 3)] {
            mask.set(x, y, 0, 1.0);
            key.set(x, y, 0, 0.9);
        }
        let asset = EntityAsset::extract("a", &key, &mask).unwrap().unwrap();
        assert_eq!(asset.crop.dims(), (2, 3));
        assert_eq!(asset.mask.count_active(), 4);
        assert!(EntityAsset::extract("a", &key, &Raster::filled(6, 6, 1, 0.0)).unwrap().is_none());
    }
}
