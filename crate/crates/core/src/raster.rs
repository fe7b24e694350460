//! Row-major pixel grids with samples in `[0, 1]`, and binary PNM codecs
//! (`P6` for color, `P5` for gray/masks, 8-bit, maxval 255).

use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("raster data length {got} does not match {width}x{height}x{channels}")]
    BadLength {
        width: usize,
        height: usize,
        channels: usize,
        got: usize,
    },
    #[error("unsupported channel count {0}")]
    BadChannels(usize),
    #[error("sample {value} at index {index} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("pnm decode error: {0}")]
    Decode(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self, RasterError> {
        if channels != 1 && channels != 3 {
            return Err(RasterError::BadChannels(channels));
        }
        if data.len() != width * height * channels {
            return Err(RasterError::BadLength {
                width,
                height,
                channels,
                got: data.len(),
            });
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(RasterError::OutOfRange { index, value });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        assert!((0.0..=1.0).contains(&value), "sample outside [0, 1]");
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Writes one sample, clamping into `[0, 1]`.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        self.data[(y * self.width + x) * self.channels + c] = value.clamp(0.0, 1.0);
    }

    /// True when every sample is exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Number of samples equal to 1 in a single-channel raster.
    pub fn count_active(&self) -> usize {
        self.data.iter().filter(|&&v| v >= 0.5).count()
    }

    pub fn binarize(&self, threshold: f64) -> Raster {
        Raster {
            data: self.data.iter().map(|&v| if v >= threshold { 1.0 } else { 0.0 }).collect(),
            ..*self
        }
    }

    /// The raster after an 8-bit PNM round trip.
    pub fn quantized(&self) -> Raster {
        Raster {
            data: self.data.iter().map(|&v| quantize(v) as f64 / 255.0).collect(),
            ..*self
        }
    }

    pub fn to_pnm(&self) -> Vec<u8> {
        let magic = if self.channels == 3 { "P6" } else { "P5" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|&v| quantize(v)));
        out
    }

    pub fn from_pnm(bytes: &[u8]) -> Result<Raster, RasterError> {
        let mut cursor = PnmCursor { bytes, pos: 0 };
        let magic = cursor.token()?;
        let channels = match magic.as_str() {
            "P6" => 3,
            "P5" => 1,
            other => return Err(RasterError::Decode(format!("unsupported magic '{other}'"))),
        };
        let width = cursor.number()?;
        let height = cursor.number()?;
        let maxval = cursor.number()?;
        if maxval != 255 {
            return Err(RasterError::Decode(format!("unsupported maxval {maxval}")));
        }
        // exactly one whitespace byte separates the header from the payload
        cursor.pos += 1;
        let payload = &bytes[cursor.pos.min(bytes.len())..];
        let need = width * height * channels;
        if payload.len() < need {
            return Err(RasterError::Decode(format!(
                "payload has {} bytes, expected {need}",
                payload.len()
            )));
        }
        let data = payload[..need].iter().map(|&b| b as f64 / 255.0).collect();
        Raster::new(width, height, channels, data)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Raster, RasterError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| RasterError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Raster::from_pnm(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        let path = path.as_ref();
        fs::write(path, self.to_pnm()).map_err(|source| RasterError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

struct PnmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PnmCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<String, RasterError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(RasterError::Decode("truncated header".into()));
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<usize, RasterError> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| RasterError::Decode(format!("bad header number '{tok}'")))
    }
}
