//! Dense multichannel maps and their on-disk container.
//!
//! Storage is row-major over `(channel, row, column)`: the value at channel
//! `c`, column `x`, row `y` lives at `c * W * H + y * W + x`. Morphology
//! kernels and tie-breaking rely on this traversal order.
//!
//! The binary container is a 16-byte header followed by the payload:
//!
//! | bytes  | field                                  |
//! |--------|----------------------------------------|
//! | 0..2   | magic `b"FM"`                          |
//! | 2..4   | version, `u16` little-endian (=1)      |
//! | 4..8   | channels, `u32` little-endian          |
//! | 8..12  | width, `u32` little-endian             |
//! | 12..16 | height, `u32` little-endian            |
//! | 16..   | `C*W*H` IEEE-754 `f64` little-endian   |

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 2] = *b"FM";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, width: usize, height: usize) -> Self {
        Self::filled(channels, width, height, 0.0)
    }

    pub fn filled(channels: usize, width: usize, height: usize, value: f64) -> Self {
        assert!(value.is_finite(), "fill value must be finite");
        FeatureMap {
            channels,
            width,
            height,
            data: vec![value; channels * width * height],
        }
    }

    pub fn from_vec(channels: usize, width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        let expected = channels * width * height;
        if data.len() != expected {
            return Err(Error::shape(
                format!("{expected} values for {channels}x{width}x{height}"),
                format!("{} values", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature map data".into()));
        }
        Ok(FeatureMap {
            channels,
            width,
            height,
            data,
        })
    }

    /// Builds a map by evaluating `f(c, x, y)` at every position.
    pub fn from_fn(
        channels: usize,
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * width * height);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, x, y));
                }
            }
        }
        assert!(data.iter().all(|v| v.is_finite()), "from_fn produced a non-finite value");
        FeatureMap {
            channels,
            width,
            height,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.width, self.height)
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

    /// Mutable access to the raw buffer. Callers must keep values finite.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, x: usize, y: usize) -> usize {
        debug_assert!(c < self.channels && x < self.width && y < self.height);
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[self.index(c, x, y)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, value: f64) {
        let i = self.index(c, x, y);
        self.data[i] = value;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.width * self.height;
        &self.data[c * plane..(c + 1) * plane]
    }

    /// Copies one channel out as a single-channel map.
    pub fn extract_channel(&self, c: usize) -> Result<FeatureMap> {
        if c >= self.channels {
            return Err(Error::ChannelOutOfRange {
                index: c,
                channels: self.channels,
            });
        }
        Ok(FeatureMap {
            channels: 1,
            width: self.width,
            height: self.height,
            data: self.channel(c).to_vec(),
        })
    }

    /// Stacks single- or multi-channel maps of equal spatial size.
    pub fn stack(maps: &[&FeatureMap]) -> Result<FeatureMap> {
        let first = maps.first().ok_or_else(|| Error::shape("at least one map", "none"))?;
        let (w, h) = (first.width, first.height);
        let mut data = Vec::new();
        let mut channels = 0;
        for m in maps {
            if (m.width, m.height) != (w, h) {
                return Err(Error::shape(format!("{w}x{h}"), format!("{}x{}", m.width, m.height)));
            }
            channels += m.channels;
            data.extend_from_slice(&m.data);
        }
        Ok(FeatureMap {
            channels,
            width: w,
            height: h,
            data,
        })
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn check_same_shape(&self, other: &FeatureMap) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(shape_str(self.shape()), shape_str(other.shape())))
        }
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> FeatureMap {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        assert!(data.iter().all(|v| v.is_finite()), "map produced a non-finite value");
        FeatureMap {
            channels: self.channels,
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn negate(&self) -> FeatureMap {
        self.map(|v| -v)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &FeatureMap) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &FeatureMap) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("map sum".into()));
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }
}

pub(crate) fn shape_str((c, w, h): (usize, usize, usize)) -> String {
    format!("{c}x{w}x{h}")
}

/// Element-wise sum; used for the residual composition of morphology blocks.
pub fn map_add(a: &FeatureMap, b: &FeatureMap) -> Result<FeatureMap> {
    let mut out = a.clone();
    out.add_assign(b)?;
    Ok(out)
}

/// A single-channel {0,1} mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMap {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        BinaryMap {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(
                format!("{} pixels", width * height),
                format!("{} pixels", data.len()),
            ));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::shape("values in {0,1}", "value > 1"));
        }
        Ok(BinaryMap { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(u8::from(f(x, y)));
            }
        }
        BinaryMap { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = u8::from(value);
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn to_feature_map(&self) -> FeatureMap {
        FeatureMap {
            channels: 1,
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f64::from(v)).collect(),
        }
    }

    pub(crate) fn check_spatial(&self, m: &FeatureMap) -> Result<()> {
        if (self.width, self.height) == (m.width(), m.height()) {
            Ok(())
        } else {
            Err(Error::shape(
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", m.width(), m.height()),
            ))
        }
    }
}

/// Binarizes one channel: a pixel is set iff its value is strictly greater than `t`.
pub fn threshold(m: &FeatureMap, channel: usize, t: f64) -> Result<BinaryMap> {
    if channel >= m.channels() {
        return Err(Error::ChannelOutOfRange {
            index: channel,
            channels: m.channels(),
        });
    }
    Ok(BinaryMap {
        width: m.width(),
        height: m.height(),
        data: m.channel(channel).iter().map(|&v| u8::from(v > t)).collect(),
    })
}

pub fn encode_map(m: &FeatureMap) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for dim in [m.channels(), m.width(), m.height()] {
        buf.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for v in m.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_map(bytes: &[u8]) -> Result<FeatureMap> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::MalformedHeader(format!(
            "need {HEADER_LEN} header bytes, found {}",
            bytes.len()
        )));
    }
    if bytes[0..2] != MAGIC {
        return Err(Error::MalformedHeader("bad magic".into()));
    }
    let version = u16::from_le_bytes([bytes[2], bytes[3]]);
    if version != FORMAT_VERSION {
        return Err(Error::MalformedHeader(format!("unsupported version {version}")));
    }
    let dim = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (c, w, h) = (dim(4), dim(8), dim(12));
    let expected = c
        .checked_mul(w)
        .and_then(|v| v.checked_mul(h))
        .ok_or_else(|| Error::MalformedHeader("dimensions overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if !payload.len().is_multiple_of(8) || payload.len() / 8 < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len() / 8,
        });
    }
    if payload.len() / 8 > expected {
        return Err(Error::MalformedHeader(format!(
            "payload holds {} values, header declares {expected}",
            payload.len() / 8
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|chunk| f64::from_le_bytes(chunk.try_into().unwrap()))
        .collect();
    FeatureMap::from_vec(c, w, h, data)
}

pub fn save_map(m: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_map(m)).map_err(|e| Error::io(path, e))
}

pub fn load_map(path: impl AsRef<Path>) -> Result<FeatureMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_map(&bytes)
}

/// Renders one channel as binary PGM (P5, maxval 255). Values are clamped to
/// `[0, 1]` and scaled to `[0, 255]`.
pub fn encode_pgm(m: &FeatureMap, channel: usize) -> Result<Vec<u8>> {
    if channel >= m.channels() {
        return Err(Error::ChannelOutOfRange {
            index: channel,
            channels: m.channels(),
        });
    }
    let pixels: Vec<u8> = m
        .channel(channel)
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    Ok(pgm_bytes(m.width(), m.height(), &pixels))
}

pub(crate) fn pgm_bytes(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(pixels.len() + 32);
    write!(buf, "P5\n{width} {height}\n255\n").unwrap();
    buf.extend_from_slice(pixels);
    buf
}

pub fn save_pgm(m: &FeatureMap, channel: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_pgm(m, channel)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
