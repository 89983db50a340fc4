//! Stochastic base attributions.
//!
//! * [`Relax`]: random smooth occlusion masks, each scored by the cosine
//!   similarity between the masked and the unmasked embedding. Pixel importance
//!   is the mask-weighted mean similarity, pixel uncertainty the mask-weighted
//!   spread of similarities around it.
//! * [`KernelShap`]: label-free Kernel SHAP on a regular patch grid, where the
//!   scalar game is the inner product between the embedding of the partially
//!   occluded image and the embedding of the full image.
//! * [`tta_uncertainty`]: per-pixel standard deviation of any attribution over
//!   input-dropout copies of the image.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{cosine_similarity, Encoder};
use crate::error::{ensure, Result};
use crate::rng::{derived_rng, Stream};
use crate::tensor::{resize_bilinear, ImageTensor, ScalarMap};

/// A stochastic importance estimator. Different seeds must give different
/// (random) maps; the same seed must give the same map.
pub trait Attribution {
    fn attribute(&self, x: &ImageTensor, seed: u64) -> Result<ScalarMap>;
}

impl<T: Attribution + ?Sized> Attribution for &T {
    fn attribute(&self, x: &ImageTensor, seed: u64) -> Result<ScalarMap> {
        (**self).attribute(x, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskConfig {
    /// Side of the low-resolution Bernoulli cell grid.
    pub grid: usize,
    /// Probability that a cell is kept.
    pub cell_prob: f64,
    /// Masks per attribution map.
    #[serde(rename = "n")]
    pub num_masks: usize,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self { grid: 7, cell_prob: 0.5, num_masks: 100 }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.grid >= 2, "masks.grid must be at least 2, got {}", self.grid);
        ensure!(
            self.cell_prob > 0.0 && self.cell_prob < 1.0,
            "masks.cell_prob must lie in (0, 1), got {}",
            self.cell_prob
        );
        ensure!(self.num_masks >= 2, "masks.n must be at least 2, got {}", self.num_masks);
        Ok(())
    }
}

/// Draws `cfg.num_masks` smooth masks of size `height x width`.
///
/// Each mask samples a `grid x grid` Bernoulli pattern, upsamples it
/// bilinearly to `(height + cell_h) x (width + cell_w)` and crops a window at a
/// uniformly random integer offset, with `cell = ceil(side / grid)`.
pub fn generate_masks(cfg: &MaskConfig, height: usize, width: usize, seed: u64) -> Result<Vec<ScalarMap>> {
    cfg.validate()?;
    ensure!(height > 0 && width > 0, "mask size has a zero dimension");
    let cell_h = height.div_ceil(cfg.grid);
    let cell_w = width.div_ceil(cfg.grid);
    let (up_h, up_w) = (height + cell_h, width + cell_w);
    (0..cfg.num_masks)
        .into_par_iter()
        .map(|n| {
            let mut rng = derived_rng(seed, Stream::Masks, n as u64);
            let cells: Vec<f64> = (0..cfg.grid * cfg.grid)
                .map(|_| if rng.random::<f64>() < cfg.cell_prob { 1.0 } else { 0.0 })
                .collect();
            let up = resize_bilinear(&cells, cfg.grid, cfg.grid, up_h, up_w);
            let dy = rng.random_range(0..cell_h);
            let dx = rng.random_range(0..cell_w);
            ScalarMap::from_fn(height, width, |i, j| up[(i + dy) * up_w + j + dx])
        })
        .collect()
}

/// Importance and uncertainty from one set of masks.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxMaps {
    pub importance: ScalarMap,
    pub uncertainty: ScalarMap,
    pub similarities: Vec<f64>,
}

/// Scores `x` against an explicit set of masks.
pub fn relax_with_masks(x: &ImageTensor, enc: &Encoder, masks: &[ScalarMap]) -> Result<RelaxMaps> {
    ensure!(!masks.is_empty(), "at least one mask is required");
    let reference = enc.encode(x)?;
    let similarities = masks
        .par_iter()
        .map(|m| cosine_similarity(&reference, &enc.encode(&x.masked(m)?)?))
        .collect::<Result<Vec<f64>>>()?;

    let n = masks.len() as f64;
    let pixels = x.height() * x.width();
    let mut importance = vec![0.0; pixels];
    for (m, s) in masks.iter().zip(&similarities) {
        for (acc, w) in importance.iter_mut().zip(m.data()) {
            *acc += s * w;
        }
    }
    importance.iter_mut().for_each(|v| *v /= n);

    let mut uncertainty = vec![0.0; pixels];
    for (m, s) in masks.iter().zip(&similarities) {
        for ((acc, w), r) in uncertainty.iter_mut().zip(m.data()).zip(&importance) {
            *acc += (s - r) * (s - r) * w;
        }
    }
    uncertainty.iter_mut().for_each(|v| *v /= n);

    Ok(RelaxMaps {
        importance: ScalarMap::new(x.height(), x.width(), importance)?,
        uncertainty: ScalarMap::new(x.height(), x.width(), uncertainty)?,
        similarities,
    })
}

/// Masked-similarity attribution of a representation.
#[derive(Debug, Clone, Copy)]
pub struct Relax<'a> {
    pub encoder: &'a Encoder,
    pub masks: MaskConfig,
}

impl<'a> Relax<'a> {
    pub fn new(encoder: &'a Encoder, masks: MaskConfig) -> Self {
        Self { encoder, masks }
    }

    pub fn run(&self, x: &ImageTensor, seed: u64) -> Result<RelaxMaps> {
        let masks = generate_masks(&self.masks, x.height(), x.width(), seed)?;
        relax_with_masks(x, self.encoder, &masks)
    }

    /// Mask-weighted variance of similarities; the RELAX uncertainty baseline.
    pub fn uncertainty(&self, x: &ImageTensor, seed: u64) -> Result<ScalarMap> {
        Ok(self.run(x, seed)?.uncertainty)
    }
}

impl Attribution for Relax<'_> {
    fn attribute(&self, x: &ImageTensor, seed: u64) -> Result<ScalarMap> {
        Ok(self.run(x, seed)?.importance)
    }
}

pub fn relax_importance(x: &ImageTensor, enc: &Encoder, cfg: &MaskConfig, seed: u64) -> Result<ScalarMap> {
    Relax::new(enc, *cfg).attribute(x, seed)
}

pub fn relax_uncertainty(x: &ImageTensor, enc: &Encoder, cfg: &MaskConfig, seed: u64) -> Result<ScalarMap> {
    Relax::new(enc, *cfg).uncertainty(x, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapBaseline {
    /// Absent patches are set to zero.
    #[default]
    Zero,
    /// Absent patches are set to the per-channel mean of the image.
    MeanPixel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapConfig {
    pub patch_rows: usize,
    pub patch_cols: usize,
    #[serde(rename = "coalitions")]
    pub num_coalitions: usize,
    pub baseline: ShapBaseline,
}

impl Default for ShapConfig {
    fn default() -> Self {
        Self::square(8, 256)
    }
}

impl ShapConfig {
    /// A `grid x grid` patch layout.
    pub fn square(grid: usize, num_coalitions: usize) -> Self {
        Self { patch_rows: grid, patch_cols: grid, num_coalitions, baseline: ShapBaseline::Zero }
    }

    pub fn players(&self) -> usize {
        self.patch_rows * self.patch_cols
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.patch_rows >= 1 && self.patch_cols >= 1 && self.players() >= 2,
            "kernel SHAP needs at least 2 patches, got {}x{}",
            self.patch_rows,
            self.patch_cols
        );
        ensure!(
            self.num_coalitions >= self.players() + 2,
            "shap.coalitions must be at least patches + 2 = {}, got {}",
            self.players() + 2,
            self.num_coalitions
        );
        Ok(())
    }

    /// Patch index of pixel `(i, j)` in an `h x w` image.
    pub fn patch_of(&self, i: usize, j: usize, h: usize, w: usize) -> usize {
        (i * self.patch_rows / h) * self.patch_cols + j * self.patch_cols / w
    }
}

/// Attributions from a constrained Shapley-kernel regression.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyEstimate {
    pub values: Vec<f64>,
    /// Value of the empty coalition.
    pub empty_value: f64,
    /// Value of the grand coalition.
    pub full_value: f64,
    /// Every coalition was evaluated.
    pub exact: bool,
    /// The normal equations were singular and a ridge term was added.
    pub ridge_fallback: bool,
}

pub const SHAP_RIDGE: f64 = 1e-8;

/// Kernel SHAP for a game over `players` players.
///
/// With `num_coalitions >= 2^players` all coalitions are enumerated and
/// weighted by the Shapley kernel, which reproduces exact Shapley values.
/// Otherwise `num_coalitions - 2` coalitions are drawn by picking a size
/// uniformly in `1..players` and then a uniform subset of that size; each draw
/// carries the importance weight `1 / (s (players - s))` so the regression
/// still targets the Shapley kernel. The empty and grand coalitions are always
/// evaluated: the first fixes the intercept, the second enters as the
/// efficiency constraint.
pub fn kernel_shap_values<G>(
    players: usize,
    num_coalitions: usize,
    seed: u64,
    game: G,
) -> Result<ShapleyEstimate>
where
    G: Fn(&[bool]) -> Result<f64> + Sync,
{
    ensure!(players >= 2, "kernel SHAP needs at least 2 players");
    let exact = players < 31 && num_coalitions >= 1usize << players;

    let mut coalitions: Vec<(Vec<bool>, f64)> = Vec::new();
    if exact {
        for bits in 1..(1usize << players) - 1 {
            let z: Vec<bool> = (0..players).map(|p| bits >> p & 1 == 1).collect();
            let s = z.iter().filter(|&&b| b).count();
            coalitions.push((z, shapley_kernel(players, s)));
        }
    } else {
        ensure!(num_coalitions >= players + 2, "need at least players + 2 coalitions");
        let mut rng = derived_rng(seed, Stream::Coalitions, 0);
        for _ in 0..num_coalitions - 2 {
            let s = rng.random_range(1..players);
            let mut z = vec![false; players];
            for p in sample(&mut rng, players, s) {
                z[p] = true;
            }
            coalitions.push((z, 1.0 / (s * (players - s)) as f64));
        }
    }

    let empty_value = game(&vec![false; players])?;
    let full_value = game(&vec![true; players])?;
    let values = coalitions.par_iter().map(|(z, _)| game(z)).collect::<Result<Vec<f64>>>()?;

    // Eliminate the last player through the efficiency constraint:
    // phi_last = delta - sum(beta), features z_i - z_last.
    let delta = full_value - empty_value;
    let m = players - 1;
    let mut gram = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    let mut feat = vec![0.0; m];
    for ((z, weight), v) in coalitions.iter().zip(&values) {
        let last = if z[m] { 1.0 } else { 0.0 };
        for (f, &zi) in feat.iter_mut().zip(&z[..m]) {
            *f = if zi { 1.0 } else { 0.0 } - last;
        }
        let y = v - empty_value - last * delta;
        for a in 0..m {
            if feat[a] == 0.0 {
                continue;
            }
            rhs[a] += weight * feat[a] * y;
            for b in 0..m {
                gram[a * m + b] += weight * feat[a] * feat[b];
            }
        }
    }

    let (beta, ridge_fallback) = solve_with_ridge_fallback(&gram, &rhs, m)?;
    let mut phi = beta;
    let last = delta - phi.iter().sum::<f64>();
    phi.push(last);
    Ok(ShapleyEstimate { values: phi, empty_value, full_value, exact, ridge_fallback })
}

/// Solves the normal equations, adding [`SHAP_RIDGE`] to the diagonal when
/// they are singular. The flag reports whether the ridge was needed.
fn solve_with_ridge_fallback(gram: &[f64], rhs: &[f64], m: usize) -> Result<(Vec<f64>, bool)> {
    if let Some(beta) = cholesky_solve(gram, rhs, m) {
        return Ok((beta, false));
    }
    let mut ridged = gram.to_vec();
    for a in 0..m {
        ridged[a * m + a] += SHAP_RIDGE;
    }
    let beta = cholesky_solve(&ridged, rhs, m)
        .ok_or_else(|| crate::Error::Undefined("kernel SHAP system is singular even with ridge".into()))?;
    Ok((beta, true))
}

fn shapley_kernel(players: usize, size: usize) -> f64 {
    (players - 1) as f64 / (binomial(players, size) * (size * (players - size)) as f64)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Solves `a x = b` for symmetric `a`; `None` when `a` is not numerically
/// positive definite.
fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let d = a[i * n + i] - s;
                if d <= 1e-12 * scale {
                    return None;
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    Some(x)
}

/// Output of [`KernelShap::run`].
#[derive(Debug, Clone, PartialEq)]
pub struct ShapMaps {
    pub importance: ScalarMap,
    pub estimate: ShapleyEstimate,
}

/// Label-free Kernel SHAP over a regular patch grid.
#[derive(Debug, Clone, Copy)]
pub struct KernelShap<'a> {
    pub encoder: &'a Encoder,
    pub config: ShapConfig,
}

impl<'a> KernelShap<'a> {
    pub fn new(encoder: &'a Encoder, config: ShapConfig) -> Self {
        Self { encoder, config }
    }

    pub fn run(&self, x: &ImageTensor, seed: u64) -> Result<ShapMaps> {
        let cfg = &self.config;
        cfg.validate()?;
        let (h, w) = (x.height(), x.width());
        ensure!(
            cfg.patch_rows <= h && cfg.patch_cols <= w,
            "patch grid {}x{} is finer than the image {h}x{w}",
            cfg.patch_rows,
            cfg.patch_cols
        );
        let reference = self.encoder.encode(x)?;
        let patch: Vec<usize> = (0..h * w).map(|idx| cfg.patch_of(idx / w, idx % w, h, w)).collect();
        let fill: Vec<f64> = (0..x.channels())
            .map(|c| match cfg.baseline {
                ShapBaseline::Zero => 0.0,
                ShapBaseline::MeanPixel => {
                    let plane = &x.data()[c * h * w..(c + 1) * h * w];
                    plane.iter().sum::<f64>() / plane.len() as f64
                }
            })
            .collect();

        let game = |coalition: &[bool]| -> Result<f64> {
            let data = x
                .data()
                .iter()
                .enumerate()
                .map(|(idx, &v)| if coalition[patch[idx % (h * w)]] { v } else { fill[idx / (h * w)] })
                .collect();
            let xs = ImageTensor::new(x.channels(), h, w, data)?;
            self.encoder.encode(&xs)?.dot(&reference)
        };
        let estimate = kernel_shap_values(cfg.players(), cfg.num_coalitions, seed, game)?;
        let importance = ScalarMap::new(h, w, patch.iter().map(|&p| estimate.values[p]).collect())?;
        Ok(ShapMaps { importance, estimate })
    }
}

impl Attribution for KernelShap<'_> {
    fn attribute(&self, x: &ImageTensor, seed: u64) -> Result<ScalarMap> {
        Ok(self.run(x, seed)?.importance)
    }
}

pub fn kernel_shap_importance(
    x: &ImageTensor,
    enc: &Encoder,
    cfg: &ShapConfig,
    seed: u64,
) -> Result<ScalarMap> {
    KernelShap::new(enc, *cfg).attribute(x, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseKind {
    #[default]
    Relax,
    #[serde(alias = "shap")]
    KernelShap,
}

impl std::str::FromStr for BaseKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relax" => Ok(Self::Relax),
            "shap" | "kernel-shap" => Ok(Self::KernelShap),
            other => Err(crate::Error::Validation(format!(
                "unknown base method {other:?} (expected relax or shap)"
            ))),
        }
    }
}

/// Which base attribution to run and how.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BaseConfig {
    pub kind: BaseKind,
    pub masks: MaskConfig,
    pub shap: ShapConfig,
}

impl BaseConfig {
    pub fn relax(masks: MaskConfig) -> Self {
        Self { kind: BaseKind::Relax, masks, ..Self::default() }
    }

    pub fn kernel_shap(shap: ShapConfig) -> Self {
        Self { kind: BaseKind::KernelShap, shap, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            BaseKind::Relax => self.masks.validate(),
            BaseKind::KernelShap => self.shap.validate(),
        }
    }

    pub fn attribution<'a>(&self, encoder: &'a Encoder) -> Box<dyn Attribution + Sync + 'a> {
        match self.kind {
            BaseKind::Relax => Box::new(Relax::new(encoder, self.masks)),
            BaseKind::KernelShap => Box::new(KernelShap::new(encoder, self.shap)),
        }
    }
}

/// Test-time augmentation uncertainty: the per-pixel population standard
/// deviation of `base` over `n_aug` copies of `x` in which each pixel (all
/// channels together) is zeroed with probability `drop_prob`.
///
/// Every copy is explained with the same base seed, so the spread reflects the
/// augmentation only.
pub fn tta_uncertainty(
    x: &ImageTensor,
    base: &dyn Attribution,
    n_aug: usize,
    drop_prob: f64,
    seed: u64,
) -> Result<ScalarMap> {
    ensure!(n_aug >= 2, "tta.n must be at least 2, got {n_aug}");
    ensure!(drop_prob > 0.0 && drop_prob < 1.0, "tta.p must lie in (0, 1), got {drop_prob}");
    let (h, w) = (x.height(), x.width());
    let mut maps = Vec::with_capacity(n_aug);
    for v in 0..n_aug {
        let mut rng = derived_rng(seed, Stream::Dropout, v as u64);
        let keep = ScalarMap::new(
            h,
            w,
            (0..h * w).map(|_| if rng.random::<f64>() < drop_prob { 0.0 } else { 1.0 }).collect(),
        )?;
        maps.push(base.attribute(&x.masked(&keep)?, seed)?);
    }
    pixel_std(&maps)
}

/// Per-pixel population standard deviation across maps of equal size.
pub fn pixel_std(maps: &[ScalarMap]) -> Result<ScalarMap> {
    ensure!(!maps.is_empty(), "standard deviation of no maps");
    let first = &maps[0];
    ensure!(maps.iter().all(|m| m.same_size(first)), "maps differ in size");
    let n = maps.len() as f64;
    let data = (0..first.len())
        .map(|p| {
            let mean = maps.iter().map(|m| m.data()[p]).sum::<f64>() / n;
            let var = maps.iter().map(|m| (m.data()[p] - mean).powi(2)).sum::<f64>() / n;
            var.sqrt()
        })
        .collect();
    ScalarMap::new(first.height(), first.width(), data)
}
