//! Equal-width histograms and Shannon entropy.

use crate::error::{ensure, Result};

/// Bin count used by the histogram thresholding methods and by the
/// discrete complexity of uncertainty maps.
pub const DEFAULT_BINS: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    edges: Vec<f64>,
    counts: Vec<u64>,
    total: u64,
    /// Set when every source value was identical; the value itself is kept
    /// so thresholding can fall back to it exactly.
    degenerate: Option<f64>,
}

impl Histogram {
    /// Builds `bins` equal-width bins spanning `[min, max]` of `values`.
    /// The maximum lands in the last bin.
    ///
    /// A zero-range input yields a degenerate histogram: one occupied bin
    /// centred on the common value.
    pub fn new(values: &[f64], bins: usize) -> Result<Self> {
        ensure!(!values.is_empty(), "histogram of an empty sequence");
        ensure!(bins >= 2, "histogram needs at least 2 bins, got {bins}");
        ensure!(values.iter().all(|v| v.is_finite()), "histogram input contains non-finite values");
        let (lo, hi) =
            values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let total = values.len() as u64;

        if lo == hi {
            // unit-scale bins with bin `bins / 2` centred on the value
            let width = lo.abs().max(1.0) / bins as f64;
            let mid = (bins / 2) as f64;
            let edges: Vec<f64> = (0..=bins).map(|i| lo + (i as f64 - mid - 0.5) * width).collect();
            let mut counts = vec![0; bins];
            counts[bins / 2] = total;
            return Ok(Self { edges, counts, total, degenerate: Some(lo) });
        }

        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
        edges[bins] = hi;
        let mut counts = vec![0u64; bins];
        for &v in values {
            counts[bin_index(v, lo, hi, bins)] += 1;
        }
        Ok(Self { edges, counts, total, degenerate: None })
    }

    /// Builds a histogram directly from counts over `[lo, hi]`.
    pub fn from_counts(counts: Vec<u64>, lo: f64, hi: f64) -> Result<Self> {
        let bins = counts.len();
        ensure!(bins >= 2, "histogram needs at least 2 bins, got {bins}");
        ensure!(lo.is_finite() && hi.is_finite() && lo < hi, "invalid histogram range [{lo}, {hi}]");
        let total: u64 = counts.iter().sum();
        ensure!(total > 0, "histogram has no samples");
        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
        edges[bins] = hi;
        Ok(Self { edges, counts, total, degenerate: None })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate.is_some()
    }

    /// Common value of a zero-range input, or `None` for a proper histogram.
    pub fn degenerate_value(&self) -> Option<f64> {
        self.degenerate
    }

    pub fn bin_width(&self) -> f64 {
        (self.edges[self.bins()] - self.edges[0]) / self.bins() as f64
    }

    pub fn center(&self, bin: usize) -> f64 {
        0.5 * (self.edges[bin] + self.edges[bin + 1])
    }

    pub fn occupied_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

fn bin_index(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let idx = ((v - lo) / (hi - lo) * bins as f64).floor();
    (idx.max(0.0) as usize).min(bins - 1)
}

/// Shannon entropy in nats of non-negative weights after normalizing them
/// to sum to one, with `0 ln 0 = 0`.
pub fn shannon_entropy(weights: &[f64]) -> Result<f64> {
    ensure!(
        weights.iter().all(|w| w.is_finite() && *w >= 0.0),
        "entropy weights must be finite and non-negative"
    );
    let total: f64 = weights.iter().sum();
    ensure!(total > 0.0, "entropy of an all-zero weight vector");
    let h = weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| {
            let p = w / total;
            -p * p.ln()
        })
        .sum::<f64>();
    // rounding can push a one-hot or uniform vector just outside [0, ln N]
    Ok(h.clamp(0.0, (weights.len() as f64).ln()))
}
