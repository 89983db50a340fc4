//! Deterministic toy feature extractors.
//!
//! Two architectures are provided:
//!
//! * `Linear`: a fixed Gaussian projection of the flattened pixels with
//!   unit-norm rows, no bias.
//! * `Conv`: two 3x3 stride-2 convolutions (padding 1, ReLU, no bias), global
//!   average pooling and a linear head.
//!
//! Weights are a pure function of `(kind, init, seed, shape, dim)`. The
//! `Designed` initialization gives the convolutional encoder fixed smoothing,
//! edge and centre-surround filters and a head that contrasts smoothed
//! brightness against fine texture, standing in for a trained network whose
//! embedding changes when the object is hidden. It does not depend on the
//! seed. [`Encoder::randomize`] replaces every weight with fresh Gaussian
//! draws.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::rng::{derived_rng, Stream};
use crate::tensor::{ImageTensor, Shape};

pub const MIN_EMBEDDING_DIM: usize = 8;
pub const CONV1_CHANNELS: usize = 8;
pub const CONV2_CHANNELS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    #[serde(alias = "linear-projection")]
    Linear,
    #[serde(alias = "toy-conv")]
    Conv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightInit {
    /// Standard normal scaled by `1/sqrt(fan_in)`.
    #[default]
    Gaussian,
    /// Hand-designed convolution filters and head.
    Designed,
}

impl std::str::FromStr for EncoderKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "linear-projection" => Ok(Self::Linear),
            "conv" | "toy-conv" => Ok(Self::Conv),
            other => Err(crate::Error::Validation(format!(
                "unknown encoder kind {other:?} (expected linear or conv)"
            ))),
        }
    }
}

impl std::fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            Self::Linear => "linear",
            Self::Conv => "conv",
        })
    }
}

impl std::str::FromStr for WeightInit {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "designed" => Ok(Self::Designed),
            other => Err(crate::Error::Validation(format!(
                "unknown weight init {other:?} (expected gaussian or designed)"
            ))),
        }
    }
}

/// Output of an encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        ensure!(!values.is_empty(), "embedding must have at least one element");
        ensure!(values.iter().all(|v| v.is_finite()), "embedding contains non-finite values");
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &Embedding) -> Result<f64> {
        ensure!(self.dim() == other.dim(), "embedding dims differ ({} vs {})", self.dim(), other.dim());
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

/// Cosine similarity, clamped to `[-1, 1]`. A zero vector on either side gives 0.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    let dot = a.dot(b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// A 3x3 stride-2 convolution with padding 1 and no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    in_channels: usize,
    out_channels: usize,
    /// `[out][in][ky][kx]`
    weights: Vec<f64>,
}

impl ConvLayer {
    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((o * self.in_channels + i) * 3 + ky) * 3 + kx]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Output side length for an input side length.
    pub fn output_len(input: usize) -> usize {
        input.div_ceil(2)
    }

    fn forward_relu(&self, input: &[f64], h: usize, w: usize) -> Vec<f64> {
        let (oh, ow) = (Self::output_len(h), Self::output_len(w));
        let mut out = vec![0.0; self.out_channels * oh * ow];
        for o in 0..self.out_channels {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = 0.0;
                    for i in 0..self.in_channels {
                        let plane = &input[i * h * w..(i + 1) * h * w];
                        let kernel = &self.weights[(o * self.in_channels + i) * 9..][..9];
                        for ky in 0..3 {
                            let sy = (2 * y + ky) as isize - 1;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            let row = &plane[sy as usize * w..][..w];
                            for kx in 0..3 {
                                let sx = (2 * x + kx) as isize - 1;
                                if sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                acc += kernel[ky * 3 + kx] * row[sx as usize];
                            }
                        }
                    }
                    out[(o * oh + y) * ow + x] = acc.max(0.0);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Params {
    Linear {
        /// `dim x input_len`, row-major
        matrix: Vec<f64>,
    },
    Conv {
        conv1: ConvLayer,
        conv2: ConvLayer,
        /// `dim x CONV2_CHANNELS`, row-major
        head: Vec<f64>,
    },
}

/// An immutable, deterministic image encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    kind: EncoderKind,
    init: WeightInit,
    seed: u64,
    shape: Shape,
    dim: usize,
    params: Params,
}

impl Encoder {
    /// Builds an encoder with Gaussian weights.
    pub fn new(kind: EncoderKind, seed: u64, shape: Shape, dim: usize) -> Result<Self> {
        Self::with_init(kind, WeightInit::Gaussian, seed, shape, dim)
    }

    pub fn with_init(
        kind: EncoderKind,
        init: WeightInit,
        seed: u64,
        shape: Shape,
        dim: usize,
    ) -> Result<Self> {
        validate_geometry(shape, dim)?;
        let params = match (kind, init) {
            (EncoderKind::Linear, WeightInit::Gaussian) => {
                Params::Linear { matrix: gaussian_unit_rows(seed, dim, shape.len()) }
            }
            (EncoderKind::Linear, WeightInit::Designed) => {
                return Err(crate::Error::Validation(
                    "designed weights exist only for the conv encoder".into(),
                ))
            }
            (EncoderKind::Conv, WeightInit::Gaussian) => Params::Conv {
                conv1: gaussian_conv(seed, 0, shape.channels, CONV1_CHANNELS),
                conv2: gaussian_conv(seed, 1, CONV1_CHANNELS, CONV2_CHANNELS),
                head: gaussian_head(seed, dim),
            },
            (EncoderKind::Conv, WeightInit::Designed) => Params::Conv {
                conv1: designed_conv1(shape.channels),
                conv2: designed_conv2(),
                head: designed_head(dim),
            },
        };
        Ok(Self { kind, init, seed, shape, dim, params })
    }

    /// A linear encoder with an explicit `dim x shape.len()` row-major matrix.
    pub fn linear_from_matrix(shape: Shape, dim: usize, matrix: Vec<f64>) -> Result<Self> {
        validate_geometry(shape, dim)?;
        ensure!(
            matrix.len() == dim * shape.len(),
            "projection matrix has {} entries, expected {}",
            matrix.len(),
            dim * shape.len()
        );
        ensure!(matrix.iter().all(|v| v.is_finite()), "projection matrix contains non-finite values");
        Ok(Self {
            kind: EncoderKind::Linear,
            init: WeightInit::Gaussian,
            seed: 0,
            shape,
            dim,
            params: Params::Linear { matrix },
        })
    }

    /// Same architecture with freshly seeded Gaussian weights.
    pub fn randomize(&self, new_seed: u64) -> Self {
        let seed = crate::rng::derive_seed(new_seed, Stream::Randomize, 0);
        Self::new(self.kind, seed, self.shape, self.dim).expect("geometry was validated at construction")
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn init(&self) -> WeightInit {
        self.init
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// All parameters flattened in a fixed order.
    pub fn weights(&self) -> Vec<f64> {
        match &self.params {
            Params::Linear { matrix } => matrix.clone(),
            Params::Conv { conv1, conv2, head } => {
                conv1.weights.iter().chain(&conv2.weights).chain(head).copied().collect()
            }
        }
    }

    /// Convolution layers and head of a conv encoder.
    pub fn conv_layers(&self) -> Option<(&ConvLayer, &ConvLayer, &[f64])> {
        match &self.params {
            Params::Conv { conv1, conv2, head } => Some((conv1, conv2, head)),
            Params::Linear { .. } => None,
        }
    }

    pub fn encode(&self, x: &ImageTensor) -> Result<Embedding> {
        ensure!(
            x.shape() == self.shape,
            "image shape {} does not match encoder input {}",
            x.shape(),
            self.shape
        );
        let out = match &self.params {
            Params::Linear { matrix } => {
                let input = x.data();
                matrix
                    .chunks_exact(input.len())
                    .map(|row| row.iter().zip(input).map(|(w, v)| w * v).sum())
                    .collect()
            }
            Params::Conv { conv1, conv2, head } => {
                let (h, w) = (self.shape.height, self.shape.width);
                let a1 = conv1.forward_relu(x.data(), h, w);
                let (h1, w1) = (ConvLayer::output_len(h), ConvLayer::output_len(w));
                let a2 = conv2.forward_relu(&a1, h1, w1);
                let plane = ConvLayer::output_len(h1) * ConvLayer::output_len(w1);
                let pooled: Vec<f64> =
                    a2.chunks_exact(plane).map(|c| c.iter().sum::<f64>() / plane as f64).collect();
                head.chunks_exact(CONV2_CHANNELS)
                    .map(|row| row.iter().zip(&pooled).map(|(w, v)| w * v).sum())
                    .collect()
            }
        };
        Embedding::new(out)
    }
}

fn validate_geometry(shape: Shape, dim: usize) -> Result<()> {
    ensure!(
        shape.channels > 0 && shape.height > 0 && shape.width > 0,
        "encoder input shape {shape} has a zero dimension"
    );
    ensure!(dim >= MIN_EMBEDDING_DIM, "embedding dim must be at least {MIN_EMBEDDING_DIM}, got {dim}");
    Ok(())
}

fn gaussian_unit_rows(seed: u64, rows: usize, cols: usize) -> Vec<f64> {
    let mut rng = derived_rng(seed, Stream::Weights, 0);
    let mut matrix: Vec<f64> = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    for row in matrix.chunks_exact_mut(cols) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in row {
            *v /= norm;
        }
    }
    matrix
}

fn gaussian_conv(seed: u64, layer: u64, in_channels: usize, out_channels: usize) -> ConvLayer {
    let mut rng = derived_rng(seed, Stream::Weights, 1 + layer);
    let scale = 1.0 / ((in_channels * 9) as f64).sqrt();
    ConvLayer {
        in_channels,
        out_channels,
        weights: (0..out_channels * in_channels * 9)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
            .collect(),
    }
}

fn gaussian_head(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = derived_rng(seed, Stream::Weights, 3);
    let scale = 1.0 / (CONV2_CHANNELS as f64).sqrt();
    (0..dim * CONV2_CHANNELS).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect()
}

/// Weight of fine texture energy against smoothed brightness in the designed
/// head.
pub const TEXTURE_PENALTY: f64 = 2.5;

/// Every coordinate reads smoothed brightness (pooled channels 0 and 7 in
/// turn) minus [`TEXTURE_PENALTY`] times the texture energy of channels 5 and
/// 6. A bright object embeds on the positive side, bare texture on the
/// negative side.
fn designed_head(dim: usize) -> Vec<f64> {
    let mut head = vec![0.0; dim * CONV2_CHANNELS];
    for (r, row) in head.chunks_exact_mut(CONV2_CHANNELS).enumerate() {
        row[if r % 2 == 0 { 0 } else { 7 }] = 1.0;
        row[5] = -TEXTURE_PENALTY;
        row[6] = -TEXTURE_PENALTY;
    }
    head
}

const BLUR: [f64; 9] = [1.0, 2.0, 1.0, 2.0, 4.0, 2.0, 1.0, 2.0, 1.0];
const SOBEL_X: [f64; 9] = [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0];
const SOBEL_Y: [f64; 9] = [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0];
const CENTER_SURROUND: [f64; 9] = [-1.0, -1.0, -1.0, -1.0, 8.0, -1.0, -1.0, -1.0, -1.0];

fn designed_conv1(in_channels: usize) -> ConvLayer {
    let scaled = |k: &[f64; 9], s: f64| k.map(|v| v * s);
    let filters: [[f64; 9]; CONV1_CHANNELS] = [
        scaled(&BLUR, 1.0 / 16.0),
        scaled(&SOBEL_X, 0.25),
        scaled(&SOBEL_X, -0.25),
        scaled(&SOBEL_Y, 0.25),
        scaled(&SOBEL_Y, -0.25),
        scaled(&CENTER_SURROUND, 0.125),
        scaled(&CENTER_SURROUND, -0.125),
        [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
    ];
    let mut weights = Vec::with_capacity(CONV1_CHANNELS * in_channels * 9);
    for filter in &filters {
        for _ in 0..in_channels {
            weights.extend(filter.iter().map(|v| v / in_channels as f64));
        }
    }
    ConvLayer { in_channels, out_channels: CONV1_CHANNELS, weights }
}

fn designed_conv2() -> ConvLayer {
    // Output o < 8 smooths feature o; output o >= 8 is a centre-surround
    // response on feature o - 8.
    let mut weights = vec![0.0; CONV2_CHANNELS * CONV1_CHANNELS * 9];
    for o in 0..CONV2_CHANNELS {
        let (src, kernel) = if o < CONV1_CHANNELS {
            (o, BLUR.map(|v| v / 16.0))
        } else {
            (o - CONV1_CHANNELS, CENTER_SURROUND.map(|v| v / 8.0))
        };
        let base = (o * CONV1_CHANNELS + src) * 9;
        weights[base..base + 9].copy_from_slice(&kernel);
    }
    ConvLayer { in_channels: CONV1_CHANNELS, out_channels: CONV2_CHANNELS, weights }
}
