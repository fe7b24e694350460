//! Latent tensors, the block-average stand-in codec, occupancy mask pooling
//! and the `PHYL` tensor file format.
//!
//! File layout, little-endian, no padding:
//!
//! | offset | size | field                       |
//! |--------|------|-----------------------------|
//! | 0      | 4    | magic `PHYL`                |
//! | 4      | 4    | version `u32` = 1           |
//! | 8      | 1    | dtype `u8` = 0 (`f32`)      |
//! | 9      | 1    | rank `u8` = 4               |
//! | 10     | 16   | dims `F, C, H, W` as `u32`  |
//! | 26     | 4·N  | payload, row-major `f32`    |

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::compositor::{CoarseVideo, MASK_THRESHOLD};
use crate::raster::Raster;

pub const MAGIC: [u8; 4] = *b"PHYL";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 0;
const HEADER_LEN: usize = 26;

#[derive(Debug, Error)]
pub enum LatentError {
    #[error("stride mismatch: {0}")]
    StrideMismatch(String),
    #[error("invalid codec spec: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: [usize; 4], got: [usize; 4] },
    #[error("data length {got} does not match shape {shape:?}")]
    BadLength { shape: [usize; 4], got: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("mask value {value} at index {index} is not 0 or 1")]
    NotBinary { index: usize, value: f64 },
    #[error("bad magic {0:02x?}, expected PHYL")]
    BadMagic([u8; 4]),
    #[error("format error: {0}")]
    Format(String),
    #[error("truncated file: expected {expected} bytes, found {got}")]
    Truncated { expected: usize, got: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Dense `(frames, channels, height, width)` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTensor {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl LatentTensor {
    pub fn new(shape: [usize; 4], data: Vec<f64>) -> Result<Self, LatentError> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(LatentError::BadLength { shape, got: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(LatentError::NonFinite(i));
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: [usize; 4], value: f64) -> Self {
        assert!(value.is_finite());
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, f: usize, c: usize, h: usize, w: usize) -> usize {
        let [_, cs, hs, ws] = self.shape;
        ((f * cs + c) * hs + h) * ws + w
    }

    #[inline]
    pub fn get(&self, f: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.index(f, c, h, w)]
    }

    pub fn check_shape(&self, expected: [usize; 4]) -> Result<(), LatentError> {
        if self.shape != expected {
            return Err(LatentError::ShapeMismatch {
                expected,
                got: self.shape,
            });
        }
        Ok(())
    }

    /// Elementwise combination of two equally shaped tensors.
    pub fn zip_with(&self, other: &LatentTensor, f: impl Fn(f64, f64) -> f64) -> Result<LatentTensor, LatentError> {
        other.check_shape(self.shape)?;
        LatentTensor::new(
            self.shape,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn max_abs_diff(&self, other: &LatentTensor) -> f64 {
        assert_eq!(self.shape, other.shape, "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Rounds every value to the nearest `f32`, i.e. what a file round trip
    /// preserves.
    pub fn to_f32_precision(&self) -> LatentTensor {
        LatentTensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| v as f32 as f64).collect(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, LatentError> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(DTYPE_F32);
        out.push(4);
        for &d in &self.shape {
            let d = u32::try_from(d).map_err(|_| LatentError::Format(format!("dimension {d} exceeds u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for (i, &v) in self.data.iter().enumerate() {
            let single = v as f32;
            if !single.is_finite() {
                return Err(LatentError::NonFinite(i));
            }
            out.extend_from_slice(&single.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<LatentTensor, LatentError> {
        if bytes.len() < 4 {
            return Err(LatentError::Truncated {
                expected: HEADER_LEN,
                got: bytes.len(),
            });
        }
        if bytes[..4] != MAGIC {
            return Err(LatentError::BadMagic(bytes[..4].try_into().unwrap()));
        }
        if bytes.len() < HEADER_LEN {
            return Err(LatentError::Truncated {
                expected: HEADER_LEN,
                got: bytes.len(),
            });
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(LatentError::Format(format!("unsupported version {version}")));
        }
        if bytes[8] != DTYPE_F32 {
            return Err(LatentError::Format(format!("unsupported dtype {}", bytes[8])));
        }
        if bytes[9] != 4 {
            return Err(LatentError::Format(format!("unsupported rank {}", bytes[9])));
        }
        let shape = [u32_at(10), u32_at(14), u32_at(18), u32_at(22)].map(|d| d as usize);
        let count: usize = shape.iter().product();
        let expected = HEADER_LEN + 4 * count;
        if bytes.len() < expected {
            return Err(LatentError::Truncated {
                expected,
                got: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(LatentError::Format(format!(
                "{} trailing bytes after payload",
                bytes.len() - expected
            )));
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        LatentTensor::new(shape, data)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), LatentError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|source| LatentError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<LatentTensor, LatentError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| LatentError::Io {
            path: path.display().to_string(),
            source,
        })?;
        LatentTensor::from_bytes(&bytes)
    }
}

/// Binary `(F, 1, H, W)` gate, broadcast over latent channels.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMask {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl LatentMask {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<bool>) -> Result<Self, LatentError> {
        let shape = [frames, 1, height, width];
        if data.len() != frames * height * width {
            return Err(LatentError::BadLength { shape, got: data.len() });
        }
        Ok(Self {
            frames,
            height,
            width,
            data,
        })
    }

    pub fn filled(frames: usize, height: usize, width: usize, on: bool) -> Self {
        Self {
            frames,
            height,
            width,
            data: vec![on; frames * height * width],
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.frames, 1, self.height, self.width]
    }

    #[inline]
    pub fn get(&self, f: usize, h: usize, w: usize) -> bool {
        self.data[(f * self.height + h) * self.width + w]
    }

    pub fn set(&mut self, f: usize, h: usize, w: usize, on: bool) {
        self.data[(f * self.height + h) * self.width + w] = on;
    }

    pub fn count_active(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// True when the mask can gate a tensor of `shape` (same F, H, W).
    pub fn matches(&self, shape: [usize; 4]) -> bool {
        shape[0] == self.frames && shape[2] == self.height && shape[3] == self.width
    }

    /// Gate value for a flat index into a tensor of `shape`.
    #[inline]
    pub fn at_tensor_index(&self, shape: [usize; 4], index: usize) -> bool {
        let [_, c, h, w] = shape;
        let plane = h * w;
        let f = index / (c * plane);
        let rem = index % plane;
        self.data[f * plane + rem]
    }

    pub fn to_tensor(&self) -> LatentTensor {
        LatentTensor {
            shape: self.shape(),
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn from_tensor(t: &LatentTensor) -> Result<LatentMask, LatentError> {
        let [f, c, h, w] = t.shape();
        if c != 1 {
            return Err(LatentError::ShapeMismatch {
                expected: [f, 1, h, w],
                got: t.shape(),
            });
        }
        let data = t
            .data()
            .iter()
            .enumerate()
            .map(|(index, &value)| match value {
                0.0 => Ok(false),
                1.0 => Ok(true),
                _ => Err(LatentError::NotBinary { index, value }),
            })
            .collect::<Result<_, _>>()?;
        LatentMask::new(f, h, w, data)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), LatentError> {
        self.to_tensor().write(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<LatentMask, LatentError> {
        LatentMask::from_tensor(&LatentTensor::read(path)?)
    }

    /// Square (Chebyshev) dilation of each latent frame.
    pub fn dilate(&self, radius: usize) -> LatentMask {
        if radius == 0 {
            return self.clone();
        }
        let mut out = LatentMask::filled(self.frames, self.height, self.width, false);
        for f in 0..self.frames {
            for h in 0..self.height {
                for w in 0..self.width {
                    if !self.get(f, h, w) {
                        continue;
                    }
                    let (h0, h1) = (h.saturating_sub(radius), (h + radius).min(self.height - 1));
                    let (w0, w1) = (w.saturating_sub(radius), (w + radius).min(self.width - 1));
                    for hh in h0..=h1 {
                        for ww in w0..=w1 {
                            out.set(f, hh, ww, true);
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodecKind {
    Identity,
    BlockAverage,
}

/// Stand-in for a video autoencoder. Block averaging maps each
/// `temporal_stride x spatial_stride x spatial_stride` pixel block to one
/// latent cell; latent channels past the 3 color channels are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodecSpec {
    pub kind: CodecKind,
    pub spatial_stride: usize,
    pub temporal_stride: usize,
    pub channels: usize,
}

impl CodecSpec {
    pub const SOURCE_CHANNELS: usize = 3;

    pub fn identity() -> Self {
        Self {
            kind: CodecKind::Identity,
            spatial_stride: 1,
            temporal_stride: 1,
            channels: Self::SOURCE_CHANNELS,
        }
    }

    pub fn block(spatial_stride: usize, temporal_stride: usize, channels: usize) -> Result<Self, LatentError> {
        let spec = Self {
            kind: CodecKind::BlockAverage,
            spatial_stride,
            temporal_stride,
            channels,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), LatentError> {
        if self.spatial_stride < 1 || self.temporal_stride < 1 {
            return Err(LatentError::InvalidSpec("strides must be >= 1".into()));
        }
        match self.kind {
            CodecKind::Identity => {
                if self.spatial_stride != 1 || self.temporal_stride != 1 || self.channels != Self::SOURCE_CHANNELS {
                    return Err(LatentError::InvalidSpec(
                        "identity codec requires unit strides and 3 channels".into(),
                    ));
                }
            }
            CodecKind::BlockAverage => {
                if self.channels < Self::SOURCE_CHANNELS {
                    return Err(LatentError::InvalidSpec(format!(
                        "block codec needs at least {} latent channels, got {}",
                        Self::SOURCE_CHANNELS,
                        self.channels
                    )));
                }
            }
        }
        Ok(())
    }

    /// Latent `(F, C, H, W)` for a `frames x height x width` video.
    pub fn latent_shape(&self, frames: usize, height: usize, width: usize) -> Result<[usize; 4], LatentError> {
        self.validate()?;
        let (ss, ts) = (self.spatial_stride, self.temporal_stride);
        if !width.is_multiple_of(ss) || !height.is_multiple_of(ss) {
            return Err(LatentError::StrideMismatch(format!(
                "{width}x{height} not divisible by spatial stride {ss}"
            )));
        }
        if !frames.is_multiple_of(ts) {
            return Err(LatentError::StrideMismatch(format!(
                "{frames} frames not divisible by temporal stride {ts}"
            )));
        }
        Ok([frames / ts, self.channels, height / ss, width / ss])
    }
}

impl fmt::Display for CodecSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            CodecKind::Identity => f.write_str("identity"),
            CodecKind::BlockAverage => write!(
                f,
                "block:{}:{}:{}",
                self.spatial_stride, self.temporal_stride, self.channels
            ),
        }
    }
}

impl FromStr for CodecSpec {
    type Err = LatentError;

    /// `identity` or `block:SS:TS:C`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "identity" {
            return Ok(CodecSpec::identity());
        }
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["block", ss, ts, c] => {
                let num = |v: &str| {
                    v.parse::<usize>()
                        .map_err(|_| LatentError::InvalidSpec(format!("bad number '{v}' in codec '{s}'")))
                };
                CodecSpec::block(num(ss)?, num(ts)?, num(c)?)
            }
            _ => Err(LatentError::InvalidSpec(format!(
                "unknown codec '{s}' (expected identity or block:SS:TS:C)"
            ))),
        }
    }
}

fn video_dims(frames: &[Raster]) -> Result<(usize, usize), LatentError> {
    let (w, h) = frames.first().map(Raster::dims).unwrap_or((0, 0));
    if frames.iter().any(|f| f.dims() != (w, h)) {
        return Err(LatentError::StrideMismatch("frames differ in size".into()));
    }
    Ok((w, h))
}

/// Encodes the scaffold frames into the reference clean latent.
pub fn encode_coarse(video: &CoarseVideo, spec: &CodecSpec) -> Result<LatentTensor, LatentError> {
    encode_frames(&video.frames, spec)
}

pub fn encode_frames(frames: &[Raster], spec: &CodecSpec) -> Result<LatentTensor, LatentError> {
    let (width, height) = video_dims(frames)?;
    let shape = spec.latent_shape(frames.len(), height, width)?;
    let [lf, lc, lh, lw] = shape;
    let (ss, ts) = (spec.spatial_stride, spec.temporal_stride);
    let count = (ss * ss * ts) as f64;

    let mut data = vec![0.0; lf * lc * lh * lw];
    for f in 0..lf {
        for c in 0..CodecSpec::SOURCE_CHANNELS {
            for h in 0..lh {
                for w in 0..lw {
                    let mut sum = 0.0;
                    for frame in &frames[f * ts..(f + 1) * ts] {
                        let src_c = c.min(frame.channels() - 1);
                        for y in h * ss..(h + 1) * ss {
                            for x in w * ss..(w + 1) * ss {
                                sum += frame.get(x, y, src_c);
                            }
                        }
                    }
                    data[((f * lc + c) * lh + h) * lw + w] = if count == 1.0 { sum } else { sum / count };
                }
            }
        }
    }
    LatentTensor::new(shape, data)
}

/// Nearest-neighbor decode back to 3-channel frames, clamped to `[0, 1]`.
pub fn decode_latent(latent: &LatentTensor, spec: &CodecSpec) -> Result<Vec<Raster>, LatentError> {
    spec.validate()?;
    let [lf, lc, lh, lw] = latent.shape();
    if lc != spec.channels {
        return Err(LatentError::StrideMismatch(format!(
            "latent has {lc} channels, codec expects {}",
            spec.channels
        )));
    }
    let (ss, ts) = (spec.spatial_stride, spec.temporal_stride);
    let (width, height) = (lw * ss, lh * ss);
    let mut frames = Vec::with_capacity(lf * ts);
    for f in 0..lf {
        let mut frame = Raster::filled(width, height, 3, 0.0);
        for y in 0..height {
            for x in 0..width {
                for c in 0..CodecSpec::SOURCE_CHANNELS {
                    frame.set(x, y, c, latent.get(f, c, y / ss, x / ss));
                }
            }
        }
        frames.extend(std::iter::repeat_n(frame, ts));
    }
    Ok(frames)
}

/// Max-pools occupancy to latent resolution, then dilates each latent frame
/// by `dilation` cells.
pub fn downsample_mask(occupancy: &[Raster], spec: &CodecSpec, dilation: usize) -> Result<LatentMask, LatentError> {
    let (width, height) = video_dims(occupancy)?;
    let [lf, _, lh, lw] = spec.latent_shape(occupancy.len(), height, width)?;
    let (ss, ts) = (spec.spatial_stride, spec.temporal_stride);
    let mut mask = LatentMask::filled(lf, lh, lw, false);
    for (t, frame) in occupancy.iter().enumerate() {
        for y in 0..height {
            for x in 0..width {
                if frame.get(x, y, 0) >= MASK_THRESHOLD {
                    mask.set(t / ts, y / ss, x / ss, true);
                }
            }
        }
    }
    Ok(mask.dilate(dilation))
}

/// Nearest-neighbor expansion of a latent mask back to pixel resolution.
pub fn upsample_mask(mask: &LatentMask, spec: &CodecSpec) -> Vec<Raster> {
    let [lf, _, lh, lw] = mask.shape();
    let (ss, ts) = (spec.spatial_stride, spec.temporal_stride);
    let mut out = Vec::with_capacity(lf * ts);
    for f in 0..lf {
        let mut frame = Raster::filled(lw * ss, lh * ss, 1, 0.0);
        for y in 0..lh * ss {
            for x in 0..lw * ss {
                if mask.get(f, y / ss, x / ss) {
                    frame.set(x, y, 0, 1.0);
                }
            }
        }
        out.extend(std::iter::repeat_n(frame, ts));
    }
    out
}
