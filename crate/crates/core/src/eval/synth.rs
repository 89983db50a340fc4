//! Synthetic image corpora for desk-scale experiments.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::rng::{derived_rng, Stream};
use crate::tensor::{ImageTensor, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusKind {
    /// A bright smooth blob on a dark background.
    Structured,
    /// Independent uniform pixels.
    Noise,
    /// Faint blobs whose contrast varies per image, so attribution maps
    /// hover around their own mean.
    Fluctuating,
}

impl std::str::FromStr for CorpusKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "structured" => Ok(Self::Structured),
            "noise" => Ok(Self::Noise),
            "fluctuating" => Ok(Self::Fluctuating),
            other => Err(crate::Error::Validation(format!(
                "unknown corpus kind {other:?} (expected structured, noise or fluctuating)"
            ))),
        }
    }
}

impl std::fmt::Display for CorpusKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            Self::Structured => "structured",
            Self::Noise => "noise",
            Self::Fluctuating => "fluctuating",
        })
    }
}

/// Generates `n` images. Image `i` depends only on `(kind, shape, seed, i)`,
/// and every value is representable as `f32`, so images survive a raw
/// round trip unchanged.
pub fn synth_corpus(kind: CorpusKind, n: usize, shape: Shape, seed: u64) -> Result<Vec<ImageTensor>> {
    ensure!(n >= 1, "corpus size must be at least 1");
    ensure!(shape.height > 0 && shape.width > 0, "corpus shape {shape} has a zero dimension");
    (0..n).map(|i| synth_image(kind, shape, seed, i)).collect()
}

pub fn synth_image(kind: CorpusKind, shape: Shape, seed: u64, index: usize) -> Result<ImageTensor> {
    let mut rng = derived_rng(seed ^ kind_tag(kind), Stream::Corpus, index as u64);
    let (h, w) = (shape.height, shape.width);
    let plane: Vec<f64> = match kind {
        CorpusKind::Noise => (0..h * w).map(|_| rng.random::<f64>()).collect(),
        CorpusKind::Structured => STRUCTURED.render(&mut rng, h, w),
        CorpusKind::Fluctuating => FLUCTUATING.render(&mut rng, h, w),
    };
    let data = (0..shape.channels)
        .flat_map(|_| plane.iter().map(|&v| f64::from(v.clamp(0.0, 1.0) as f32)))
        .collect();
    ImageTensor::new(shape.channels, h, w, data)
}

fn kind_tag(kind: CorpusKind) -> u64 {
    match kind {
        CorpusKind::Structured => 0x5354_5255,
        CorpusKind::Noise => 0x4e4f_4953,
        CorpusKind::Fluctuating => 0x464c_5543,
    }
}

/// A Gaussian blob over a flat level plus i.i.d. uniform texture in
/// `[0, texture]`. Sizes are fractions of the shorter side.
struct BlobStyle {
    level: Range<f64>,
    texture: f64,
    contrast: Range<f64>,
    sigma: Range<f64>,
}

// Dark fine-grained background; the object outweighs the texture.
const STRUCTURED: BlobStyle =
    BlobStyle { level: 0.0..0.0, texture: 0.1, contrast: 0.7..0.8, sigma: 0.07..0.08 };

// Mid-grey noisy background with a barely visible blob.
const FLUCTUATING: BlobStyle =
    BlobStyle { level: 0.3..0.5, texture: 0.1, contrast: 0.02..0.12, sigma: 0.06..0.12 };

impl BlobStyle {
    fn render(&self, rng: &mut impl Rng, h: usize, w: usize) -> Vec<f64> {
        let level =
            if self.level.is_empty() { self.level.start } else { rng.random_range(self.level.clone()) };
        let amplitude = rng.random_range(self.contrast.clone());
        let sigma = rng.random_range(self.sigma.clone()) * h.min(w) as f64;
        let cy = rng.random_range(0.3..0.7) * h as f64;
        let cx = rng.random_range(0.3..0.7) * w as f64;
        (0..h * w)
            .map(|idx| {
                let (y, x) = ((idx / w) as f64 + 0.5, (idx % w) as f64 + 0.5);
                let d2 = (y - cy).powi(2) + (x - cx).powi(2);
                level + amplitude * (-d2 / (2.0 * sigma * sigma)).exp() + self.texture * rng.random::<f64>()
            })
            .collect()
    }
}
