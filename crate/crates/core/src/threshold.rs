//! Histogram-based foreground/background threshold selection.
//!
//! Mean thresholding works on the raw values; Otsu, triangle and Li work on
//! a [`Histogram`]. Pixels with a value `>= tau` are foreground (important).

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::histogram::{Histogram, DEFAULT_BINS};
use crate::tensor::{BinaryMask, ScalarMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMethod {
    #[default]
    Mean,
    Otsu,
    Triangle,
    Li,
}

impl ThresholdMethod {
    pub const ALL: [ThresholdMethod; 4] = [Self::Mean, Self::Otsu, Self::Triangle, Self::Li];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mean => "mean",
            Self::Otsu => "otsu",
            Self::Triangle => "triangle",
            Self::Li => "li",
        }
    }
}

impl std::fmt::Display for ThresholdMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.name())
    }
}

impl std::str::FromStr for ThresholdMethod {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            crate::Error::Validation(format!(
                "unknown threshold method {s:?} (expected mean, otsu, triangle or li)"
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    /// The source values were all identical; `value` is that common value.
    pub degenerate: bool,
    /// Li's iteration hit its iteration cap.
    pub non_converged: bool,
}

impl Threshold {
    fn plain(value: f64) -> Self {
        Self { value, ..Self::default() }
    }

    fn fallback(h: &Histogram) -> Option<Self> {
        h.degenerate_value().map(|value| Self { value, degenerate: true, non_converged: false })
    }
}

/// Arithmetic mean of the map, clamped to `[min, max]` so that rounding in
/// the sum can never place it outside the values it summarizes.
pub fn threshold_mean(map: &ScalarMap) -> f64 {
    map.mean().clamp(map.min(), map.max())
}

/// Otsu's method: the bin edge maximizing the between-class variance
/// `w0 w1 (mu0 - mu1)^2`, ties resolved toward the lower edge.
pub fn threshold_otsu(h: &Histogram) -> Threshold {
    if let Some(t) = Threshold::fallback(h) {
        return t;
    }
    // Bin centres are an affine function of the bin index, so the criterion
    // can be evaluated on indices, where every partial sum is an exact integer.
    let counts = h.counts();
    let n = h.total() as f64;
    let s: f64 = counts.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut n0, mut s0) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 1);
    for t in 1..counts.len() {
        let c = counts[t - 1] as f64;
        n0 += c;
        s0 += (t - 1) as f64 * c;
        let n1 = n - n0;
        if n0 == 0.0 || n1 == 0.0 {
            continue;
        }
        let s1 = s - s0;
        let d = s0 * n1 - s1 * n0;
        let criterion = d * d / (n0 * n1);
        if criterion > best.0 {
            best = (criterion, t);
        }
    }
    Threshold::plain(h.edges()[best.1])
}

/// Triangle method. A line joins the histogram peak to the far end of the
/// longer tail (taken at height zero); the threshold is the lower edge of the
/// tail bin farthest below that line. Equal tails use the lower tail and equal
/// distances resolve toward the lower bin.
pub fn threshold_triangle(h: &Histogram) -> Threshold {
    if let Some(t) = Threshold::fallback(h) {
        return t;
    }
    let counts = h.counts();
    let bins = counts.len();
    let peak = (0..bins).fold(0, |best, i| if counts[i] > counts[best] { i } else { best });
    let first = counts.iter().position(|&c| c > 0).unwrap_or(0);
    let last = counts.iter().rposition(|&c| c > 0).unwrap_or(bins - 1);
    let flip = peak - first < last - peak;

    // `at(k)` reads the histogram in the orientation where the tail is on the left.
    let at = |k: usize| if flip { counts[bins - 1 - k] } else { counts[k] };
    let (low, top) = if flip { (bins - 1 - last, bins - 1 - peak) } else { (first, peak) };
    let width = (top - low) as f64;
    let height = counts[peak] as f64;
    let mut best = (f64::NEG_INFINITY, low);
    for k in low..top.max(low + 1) {
        let dist = height * (k - low) as f64 - width * at(k) as f64;
        let better = if flip { dist >= best.0 } else { dist > best.0 };
        if better || best.0 == f64::NEG_INFINITY {
            best = (dist, k);
        }
    }
    let level = if flip { bins - 1 - best.1 } else { best.1 };
    Threshold::plain(h.edges()[level])
}

pub const LI_MAX_ITERATIONS: usize = 100;

/// One step of Li's minimum cross-entropy iteration on bin centres:
/// `(mu0 - mu1) / (ln mu0 - ln mu1)` for the classes split at `tau`.
/// Centres must be positive. `None` if a class is empty.
pub fn li_update(centers: &[f64], counts: &[u64], tau: f64) -> Option<f64> {
    let (mut n0, mut s0, mut n1, mut s1) = (0.0, 0.0, 0.0, 0.0);
    for (&c, &k) in centers.iter().zip(counts) {
        let k = k as f64;
        if c > tau {
            n1 += k;
            s1 += k * c;
        } else {
            n0 += k;
            s0 += k * c;
        }
    }
    if n0 == 0.0 || n1 == 0.0 {
        return None;
    }
    let (mu0, mu1) = (s0 / n0, s1 / n1);
    Some((mu0 - mu1) / (mu0.ln() - mu1.ln()))
}

/// Li's minimum cross-entropy threshold.
///
/// Starts from the histogram mean and iterates [`li_update`] until a step
/// moves less than half a bin width; the returned value is the iterate whose
/// next step was that small. Histograms reaching below zero are shifted to a
/// positive support for the iteration and shifted back on return.
pub fn threshold_li(h: &Histogram) -> Threshold {
    if let Some(t) = Threshold::fallback(h) {
        return t;
    }
    let shift = if h.edges()[0] < 0.0 { -h.edges()[0] } else { 0.0 };
    let centers: Vec<f64> = (0..h.bins()).map(|b| h.center(b) + shift).collect();
    let counts = h.counts();
    let tol = 0.5 * h.bin_width();

    let mut tau = centers.iter().zip(counts).map(|(&c, &k)| c * k as f64).sum::<f64>() / h.total() as f64;
    for _ in 0..LI_MAX_ITERATIONS {
        let Some(next) = li_update(&centers, counts, tau) else {
            break;
        };
        if (next - tau).abs() < tol {
            return Threshold::plain(tau - shift);
        }
        tau = next;
    }
    Threshold { value: tau - shift, degenerate: false, non_converged: true }
}

/// Selects the threshold of `map` with `method`, using [`DEFAULT_BINS`] bins
/// for the histogram methods.
pub fn select_threshold(map: &ScalarMap, method: ThresholdMethod) -> Result<Threshold> {
    if method == ThresholdMethod::Mean {
        return Ok(Threshold::plain(threshold_mean(map)));
    }
    let h = Histogram::new(map.data(), DEFAULT_BINS)?;
    Ok(match method {
        ThresholdMethod::Otsu => threshold_otsu(&h),
        ThresholdMethod::Triangle => threshold_triangle(&h),
        ThresholdMethod::Li => threshold_li(&h),
        ThresholdMethod::Mean => unreachable!(),
    })
}

/// Foreground mask: `value >= tau`.
pub fn binarize(map: &ScalarMap, tau: f64) -> BinaryMask {
    let data = map.data().iter().map(|&v| v >= tau).collect();
    BinaryMask::new(map.height(), map.width(), data).expect("same geometry as the map")
}
