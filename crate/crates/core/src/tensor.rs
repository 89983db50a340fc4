//! Dense grids: input images, real-valued maps and binary masks.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// An image with values in `[0, 1]`, stored channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        ensure!(channels == 1 || channels == 3, "image must have 1 or 3 channels, got {channels}");
        ensure!(height > 0 && width > 0, "image has a zero dimension ({height}x{width})");
        ensure!(
            data.len() == channels * height * width,
            "image data length {} does not match {channels}x{height}x{width}",
            data.len()
        );
        ensure!(
            data.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)),
            "image values must be finite and within [0, 1]"
        );
        Ok(Self { channels, height, width, data })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(channels, height, width, vec![value; channels * height * width])
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> Shape {
        Shape { channels: self.channels, height: self.height, width: self.width }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[(c * self.height + i) * self.width + j]
    }

    /// Multiplies every channel by a per-pixel mask with values in `[0, 1]`.
    pub fn masked(&self, mask: &ScalarMap) -> Result<Self> {
        ensure!(
            mask.height() == self.height && mask.width() == self.width,
            "mask {}x{} does not match image {}x{}",
            mask.height(),
            mask.width(),
            self.height,
            self.width
        );
        let plane = self.height * self.width;
        let data = self.data.iter().enumerate().map(|(idx, v)| v * mask.data()[idx % plane]).collect();
        Ok(self.with_data(data))
    }

    /// Returns a copy with every value multiplied by `factor`, clamped to `[0, 1]`.
    pub fn scaled(&self, factor: f64) -> Self {
        let data = self.data.iter().map(|v| (v * factor).clamp(0.0, 1.0)).collect();
        self.with_data(data)
    }

    fn with_data(&self, data: Vec<f64>) -> Self {
        Self { channels: self.channels, height: self.height, width: self.width, data }
    }

    /// Bilinear resize of every channel (corner-aligned sampling grid).
    pub fn resized(&self, height: usize, width: usize) -> Result<Self> {
        ensure!(height > 0 && width > 0, "target size has a zero dimension");
        if height == self.height && width == self.width {
            return Ok(self.clone());
        }
        let plane = self.height * self.width;
        let mut data = Vec::with_capacity(self.channels * height * width);
        for c in 0..self.channels {
            let src = &self.data[c * plane..(c + 1) * plane];
            data.extend(resize_bilinear(src, self.height, self.width, height, width));
        }
        // interpolation of values in [0, 1] stays in [0, 1] up to rounding
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Self::new(self.channels, height, width, data)
    }
}

/// Image geometry shared by encoders and images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// A real-valued `height x width` map (importance, weights, uncertainty).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ScalarMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        ensure!(height > 0 && width > 0, "map has a zero dimension");
        ensure!(
            data.len() == height * width,
            "map data length {} does not match {height}x{width}",
            data.len()
        );
        ensure!(data.iter().all(|v| v.is_finite()), "map contains non-finite values");
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
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

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Arithmetic mean, accumulated relative to the first value so that a
    /// constant map returns that constant exactly.
    pub fn mean(&self) -> f64 {
        let origin = self.data[0];
        let shift = self.data.iter().map(|v| v - origin).sum::<f64>() / self.data.len() as f64;
        origin + shift
    }

    pub fn same_size(&self, other: &ScalarMap) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Applies `f` elementwise. Fails if `f` produces non-finite values.
    pub fn map(&self, f: impl FnMut(f64) -> f64) -> Result<Self> {
        Self::new(self.height, self.width, self.data.iter().copied().map(f).collect())
    }
}

/// A binary `height x width` mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        ensure!(
            data.len() == height * width,
            "mask data length {} does not match {height}x{width}",
            data.len()
        );
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.width + j]
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn foreground_fraction(&self) -> f64 {
        self.count_ones() as f64 / self.data.len() as f64
    }

    /// `true` if every pixel set here is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub fn to_map(&self) -> ScalarMap {
        ScalarMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Bilinear resampling of a single `in_h x in_w` plane with a corner-aligned grid:
/// output corners coincide with input corners.
pub fn resize_bilinear(src: &[f64], in_h: usize, in_w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    debug_assert_eq!(src.len(), in_h * in_w);
    let scale = |out: usize, inp: usize| {
        if out > 1 {
            (inp - 1) as f64 / (out - 1) as f64
        } else {
            0.0
        }
    };
    let sy = scale(out_h, in_h);
    let sx = scale(out_w, in_w);
    let mut out = Vec::with_capacity(out_h * out_w);
    for i in 0..out_h {
        let y = i as f64 * sy;
        let y0 = (y.floor() as usize).min(in_h - 1);
        let y1 = (y0 + 1).min(in_h - 1);
        let dy = y - y0 as f64;
        for j in 0..out_w {
            let x = j as f64 * sx;
            let x0 = (x.floor() as usize).min(in_w - 1);
            let x1 = (x0 + 1).min(in_w - 1);
            let dx = x - x0 as f64;
            let top = src[y0 * in_w + x0] * (1.0 - dx) + src[y0 * in_w + x1] * dx;
            let bottom = src[y1 * in_w + x0] * (1.0 - dx) + src[y1 * in_w + x1] * dx;
            out.push(top * (1.0 - dy) + bottom * dy);
        }
    }
    out
}
