//! Image loading, the raw tensor format and heatmap export.
//!
//! Raw tensor layout (little endian):
//!
//! ```text
//! b"RPT1" | channels: u32 | height: u32 | width: u32 | channels*height*width f32
//! ```
//!
//! Values are channel-major, then row-major. Scalar maps are written with one
//! channel.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::tensor::{ImageTensor, ScalarMap};

pub const RAW_MAGIC: &[u8; 4] = b"RPT1";
const HEADER_LEN: usize = 16;

/// An `f32` tensor in the raw on-disk layout.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub channels: u32,
    pub height: u32,
    pub width: u32,
    pub data: Vec<f32>,
}

impl RawTensor {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(RAW_MAGIC);
        out.extend_from_slice(&self.channels.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != RAW_MAGIC {
            return Err(Error::Format("missing RPT1 header".into()));
        }
        let field = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let (channels, height, width) = (field(4), field(8), field(12));
        ensure!(
            channels > 0 && height > 0 && width > 0,
            "raw tensor has a zero dimension ({channels}x{height}x{width})"
        );
        let expected = (channels as usize)
            .checked_mul(height as usize)
            .and_then(|n| n.checked_mul(width as usize))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("raw tensor dimensions overflow".into()))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != expected {
            return Err(Error::Format(format!(
                "raw tensor payload is {} bytes, header implies {expected}",
                payload.len()
            )));
        }
        let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { channels, height, width, data })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

impl From<&ScalarMap> for RawTensor {
    fn from(map: &ScalarMap) -> Self {
        Self {
            channels: 1,
            height: map.height() as u32,
            width: map.width() as u32,
            data: map.data().iter().map(|&v| v as f32).collect(),
        }
    }
}

impl From<&ImageTensor> for RawTensor {
    fn from(img: &ImageTensor) -> Self {
        Self {
            channels: img.channels() as u32,
            height: img.height() as u32,
            width: img.width() as u32,
            data: img.data().iter().map(|&v| v as f32).collect(),
        }
    }
}

impl TryFrom<RawTensor> for ScalarMap {
    type Error = Error;

    fn try_from(raw: RawTensor) -> Result<Self> {
        ensure!(raw.channels == 1, "expected a single-channel map, found {} channels", raw.channels);
        ScalarMap::new(raw.height as usize, raw.width as usize, raw.data.into_iter().map(f64::from).collect())
    }
}

impl TryFrom<RawTensor> for ImageTensor {
    type Error = Error;

    fn try_from(raw: RawTensor) -> Result<Self> {
        ImageTensor::new(
            raw.channels as usize,
            raw.height as usize,
            raw.width as usize,
            raw.data.into_iter().map(f64::from).collect(),
        )
    }
}

/// Loads a PNG (8-bit grayscale or RGB) or a raw tensor file, scales pixel
/// values to `[0, 1]` and resizes to `target = (height, width)` bilinearly.
pub fn load_image(path: impl AsRef<Path>, target: (usize, usize)) -> Result<ImageTensor> {
    let path = path.as_ref();
    ensure!(target.0 > 0 && target.1 > 0, "target size has a zero dimension");
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let image = if bytes.starts_with(RAW_MAGIC) {
        ImageTensor::try_from(RawTensor::from_bytes(&bytes)?)?
    } else {
        decode_png(&bytes)?
    };
    image.resized(target.0, target.1)
}

fn decode_png(bytes: &[u8]) -> Result<ImageTensor> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("cannot decode PNG: {e}")))?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    ensure!(width > 0 && height > 0, "image has a zero dimension");
    if decoded.color().has_color() {
        let rgb = decoded.to_rgb8();
        let plane = width * height;
        let mut data = vec![0.0; 3 * plane];
        for (idx, px) in rgb.pixels().enumerate() {
            for c in 0..3 {
                data[c * plane + idx] = f64::from(px[c]) / 255.0;
            }
        }
        ImageTensor::new(3, height, width, data)
    } else {
        let gray = decoded.to_luma8();
        let data = gray.pixels().map(|p| f64::from(p[0]) / 255.0).collect();
        ImageTensor::new(1, height, width, data)
    }
}

/// Writes an 8-bit PNG of an image tensor.
pub fn save_image_png(img: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (h, w) = (img.height() as u32, img.width() as u32);
    let to_u8 = |v: f64| (v * 255.0).round() as u8;
    if img.channels() == 1 {
        let buf =
            image::GrayImage::from_fn(w, h, |x, y| image::Luma([to_u8(img.get(0, y as usize, x as usize))]));
        buf.save(path)?;
    } else {
        let buf = image::RgbImage::from_fn(w, h, |x, y| {
            image::Rgb(std::array::from_fn(|c| to_u8(img.get(c, y as usize, x as usize))))
        });
        buf.save(path)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapFormat {
    /// Min-max normalized blue-white-red PNG.
    Heatmap,
    /// Raw tensor file.
    Raw,
}

/// Diverging blue -> white -> red ramp for `t` in `[0, 1]`.
pub fn heat_color(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.5 };
    let ramp = |x: f64| (x * 255.0).round() as u8;
    if t < 0.5 {
        let a = ramp(2.0 * t);
        [a, a, 255]
    } else {
        let a = ramp(2.0 - 2.0 * t);
        [255, a, a]
    }
}

pub fn heatmap_image(map: &ScalarMap) -> image::RgbImage {
    let (lo, hi) = (map.min(), map.max());
    let range = hi - lo;
    image::RgbImage::from_fn(map.width() as u32, map.height() as u32, |x, y| {
        let v = map.get(y as usize, x as usize);
        let t = if range > 0.0 { (v - lo) / range } else { 0.5 };
        image::Rgb(heat_color(t))
    })
}

pub fn save_map(map: &ScalarMap, path: impl AsRef<Path>, format: MapFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        MapFormat::Raw => RawTensor::from(map).write(path),
        MapFormat::Heatmap => {
            let mut bytes = Vec::new();
            heatmap_image(map).write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)?;
            fs::write(path, bytes).map_err(|e| Error::io(path, e))
        }
    }
}

pub fn load_map(path: impl AsRef<Path>) -> Result<ScalarMap> {
    ScalarMap::try_from(RawTensor::read(path)?)
}
