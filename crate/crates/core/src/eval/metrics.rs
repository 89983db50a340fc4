//! Scalar metrics over uncertainty maps and detector scores.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::histogram::{shannon_entropy, Histogram, DEFAULT_BINS};
use crate::tensor::ScalarMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Complexity {
    /// Entropy in nats.
    pub nats: f64,
    /// The map was zero everywhere; complexity is defined as 0.
    pub all_zero: bool,
}

/// Entropy of the per-pixel uncertainties, treated as unnormalized weights.
pub fn complexity(u: &ScalarMap) -> Result<Complexity> {
    ensure!(u.data().iter().all(|&v| v >= 0.0), "complexity needs a non-negative uncertainty map");
    if u.data().iter().all(|&v| v == 0.0) {
        return Ok(Complexity { nats: 0.0, all_zero: true });
    }
    Ok(Complexity { nats: shannon_entropy(u.data())?, all_zero: false })
}

/// Entropy of the [`DEFAULT_BINS`]-bin histogram of map values.
pub fn discrete_complexity(map: &ScalarMap) -> Result<f64> {
    let h = Histogram::new(map.data(), DEFAULT_BINS)?;
    let counts: Vec<f64> = h.counts().iter().map(|&c| c as f64).collect();
    shannon_entropy(&counts)
}

/// Relative rise in discrete complexity from the trained-model map to the
/// randomized-model map. Positive when the randomized map is more complex.
pub fn emprt_from_maps(trained: &ScalarMap, randomized: &ScalarMap) -> Result<f64> {
    let c_trained = discrete_complexity(trained)?;
    if c_trained == 0.0 {
        return Err(Error::Undefined("eMPRT is undefined: the trained-model map has zero complexity".into()));
    }
    let c_rand = discrete_complexity(randomized)?;
    Ok((c_rand - c_trained) / c_trained)
}

/// Mean pixel uncertainty.
pub fn aggregate_uncertainty(u: &ScalarMap) -> f64 {
    u.mean()
}

/// Area under the ROC curve via the Mann-Whitney statistic with midranks:
/// the fraction of (positive, negative) pairs ranked correctly, ties
/// counting one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    ensure!(scores.len() == labels.len(), "{} scores but {} labels", scores.len(), labels.len());
    ensure!(scores.iter().all(|s| s.is_finite()), "AUROC scores must be finite");
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    ensure!(n_pos > 0 && n_neg > 0, "AUROC needs both classes ({n_pos} positive, {n_neg} negative)");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based midrank of the tie group
        let midrank = (start + 1 + end) as f64 / 2.0;
        let positives = order[start..end].iter().filter(|&&i| labels[i]).count();
        rank_sum_pos += midrank * positives as f64;
        start = end;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}
