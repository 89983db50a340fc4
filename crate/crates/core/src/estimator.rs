//! The REPEAT estimator.
//!
//! Each pixel is treated as a Bernoulli variable "important / not important".
//! A stochastic base attribution is run `k` times with independent seeds; every
//! run is thresholded into an indicator mask `I(k)` and max-normalized into a
//! weight map `W(k)`. Importance is the weighted indicator mean
//!
//! ```text
//! p = (1/K) * sum_k I(k) * W(k)
//! ```
//!
//! and the certainty-of-importance uncertainty is the Bernoulli variance
//! `p * (1 - p)`, which peaks at 0.25 for pixels that are important in half of
//! the realizations.

use serde::{Deserialize, Serialize};

use crate::base::{Attribution, BaseConfig};
use crate::encoder::Encoder;
use crate::error::{ensure, Error, Result};
use crate::rng::{derive_seed, Stream};
use crate::tensor::{BinaryMask, ImageTensor, ScalarMap};
use crate::threshold::{binarize, select_threshold, Threshold, ThresholdMethod};

pub const DEFAULT_REALIZATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepeatConfig {
    /// Number of realizations `K`.
    pub k: usize,
    pub base: BaseConfig,
    pub threshold: ThresholdMethod,
    pub seed: u64,
}

impl Default for RepeatConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_REALIZATIONS,
            base: BaseConfig::default(),
            threshold: ThresholdMethod::Mean,
            seed: 0,
        }
    }
}

impl RepeatConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.k >= 2, "repeat.k must be at least 2, got {}", self.k);
        self.base.validate()
    }
}

/// Per-realization diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RealizationFlags {
    /// The base map was constant, so the threshold fell back to that value.
    pub degenerate_threshold: bool,
    /// Li's iteration did not converge.
    pub non_converged: bool,
    /// No positive base value: the weights are all zero.
    pub degenerate_weights: bool,
}

impl RealizationFlags {
    pub fn is_degenerate(&self) -> bool {
        self.degenerate_threshold || self.degenerate_weights
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatResult {
    pub importance: ScalarMap,
    pub uncertainty: ScalarMap,
    pub realizations: Vec<BinaryMask>,
    pub weights: Vec<ScalarMap>,
    pub thresholds: Vec<Threshold>,
    pub flags: Vec<RealizationFlags>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    pub map: ScalarMap,
    pub degenerate: bool,
}

/// Clips negative scores to zero and divides by the clipped maximum, so the
/// largest weight is exactly 1. A map without positive values yields zeros
/// and the degenerate flag.
pub fn weight_map(base: &ScalarMap) -> Result<WeightMap> {
    let max = base.max().max(0.0);
    if max <= 0.0 {
        return Ok(WeightMap { map: ScalarMap::filled(base.height(), base.width(), 0.0)?, degenerate: true });
    }
    Ok(WeightMap { map: base.map(|v| v.max(0.0) / max)?, degenerate: false })
}

/// Relative width of the band below `tau` whose values still count as
/// reaching it.
pub const TIE_TOLERANCE: f64 = 1e-10;

/// One Bernoulli realization: the indicator `base >= tau`.
///
/// Values that tie with `tau` in exact arithmetic can land an ulp below it
/// after rounding, and on which side depends on the map's scale. Values
/// within `TIE_TOLERANCE * max|base|` below `tau` are therefore counted as
/// ties, which keeps the indicator invariant under positive rescaling.
pub fn bernoulli_sample(base: &ScalarMap, method: ThresholdMethod) -> Result<(BinaryMask, Threshold)> {
    let tau = select_threshold(base, method)?;
    let magnitude = base.min().abs().max(base.max().abs());
    Ok((binarize(base, tau.value - TIE_TOLERANCE * magnitude), tau))
}

/// Weighted indicator mean over realizations, reduced in realization order.
pub fn aggregate(indicators: &[BinaryMask], weights: &[ScalarMap]) -> Result<ScalarMap> {
    ensure!(indicators.len() >= 2, "need at least 2 realizations, got {}", indicators.len());
    ensure!(
        indicators.len() == weights.len(),
        "{} indicator masks but {} weight maps",
        indicators.len(),
        weights.len()
    );
    let (h, w) = (indicators[0].height(), indicators[0].width());
    ensure!(
        indicators.iter().all(|m| m.height() == h && m.width() == w)
            && weights.iter().all(|m| m.height() == h && m.width() == w),
        "realizations differ in size"
    );
    let mut sum = vec![0.0; h * w];
    for (mask, weight) in indicators.iter().zip(weights) {
        for ((acc, &on), &wt) in sum.iter_mut().zip(mask.data()).zip(weight.data()) {
            if on {
                *acc += wt;
            }
        }
    }
    let k = indicators.len() as f64;
    ScalarMap::new(h, w, sum.into_iter().map(|s| s / k).collect())
}

/// Bernoulli variance `p (1 - p)` of an importance map.
pub fn bernoulli_uncertainty(importance: &ScalarMap) -> Result<ScalarMap> {
    ensure!(
        importance.data().iter().all(|p| (0.0..=1.0).contains(p)),
        "importance values must lie in [0, 1]"
    );
    importance.map(|p| p * (1.0 - p))
}

/// Seed of realization `k`.
pub fn realization_seed(seed: u64, k: usize) -> u64 {
    derive_seed(seed, Stream::Realization, k as u64)
}

/// Runs REPEAT with the base attribution described by `cfg.base`.
pub fn explain(x: &ImageTensor, enc: &Encoder, cfg: &RepeatConfig) -> Result<RepeatResult> {
    cfg.validate()?;
    let base = cfg.base.attribution(enc);
    explain_with(x, &*base, cfg.k, cfg.threshold, cfg.seed)
}

/// Runs REPEAT on top of an arbitrary attribution.
///
/// Fails when more than half of the realizations are degenerate.
pub fn explain_with(
    x: &ImageTensor,
    base: &dyn Attribution,
    k: usize,
    method: ThresholdMethod,
    seed: u64,
) -> Result<RepeatResult> {
    ensure!(k >= 2, "repeat.k must be at least 2, got {k}");
    let mut realizations = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    let mut thresholds = Vec::with_capacity(k);
    let mut flags = Vec::with_capacity(k);
    for r in 0..k {
        let map = base.attribute(x, realization_seed(seed, r))?;
        let (indicator, tau) = bernoulli_sample(&map, method)?;
        let weight = weight_map(&map)?;
        flags.push(RealizationFlags {
            degenerate_threshold: tau.degenerate,
            non_converged: tau.non_converged,
            degenerate_weights: weight.degenerate,
        });
        realizations.push(indicator);
        weights.push(weight.map);
        thresholds.push(tau);
    }
    let degenerate = flags.iter().filter(|f| f.is_degenerate()).count();
    if 2 * degenerate > k {
        return Err(Error::Undefined(format!(
            "{degenerate} of {k} realizations are degenerate (constant or non-positive base maps)"
        )));
    }
    let importance = aggregate(&realizations, &weights)?;
    let uncertainty = bernoulli_uncertainty(&importance)?;
    Ok(RepeatResult { importance, uncertainty, realizations, weights, thresholds, flags })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::MaskConfig;
    use crate::encoder::EncoderKind;
    use std::sync::Mutex;

    fn map(h: usize, w: usize, v: &[f64]) -> ScalarMap {
        ScalarMap::new(h, w, v.to_vec()).unwrap()
    }

    #[test]
    fn weight_map_examples() {
        assert_eq!(weight_map(&map(1, 2, &[2.0, 4.0])).unwrap().map.data(), &[0.5, 1.0]);
        assert_eq!(weight_map(&map(1, 2, &[-1.0, 3.0])).unwrap().map.data(), &[0.0, 1.0]);
        let c = weight_map(&ScalarMap::filled(2, 2, 0.3).unwrap()).unwrap();
        assert!(c.map.data().iter().all(|&v| v == 1.0));
        let neg = weight_map(&map(1, 2, &[-1.0, 0.0])).unwrap();
        assert!(neg.degenerate);
        assert!(neg.map.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ties_with_the_mean_survive_rescaling() {
        let base = map(1, 5, &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let (reference, _) = bernoulli_sample(&base, ThresholdMethod::Mean).unwrap();
        assert_eq!(reference.data(), &[false, false, true, true, true]);
        for c in [0.1, 0.3, 3.0, 42.0, 1e-7, 7e5] {
            let (mask, _) = bernoulli_sample(&base.map(|v| c * v).unwrap(), ThresholdMethod::Mean).unwrap();
            assert_eq!(mask, reference, "scale {c}");
        }
    }

    #[test]
    fn bernoulli_sample_examples() {
        let (mask, tau) = bernoulli_sample(&map(1, 3, &[1.0, 2.0, 3.0]), ThresholdMethod::Mean).unwrap();
        assert_eq!(tau.value, 2.0);
        assert_eq!(mask.data(), &[false, true, true]);
        let (mask, _) =
            bernoulli_sample(&ScalarMap::filled(2, 3, 0.1).unwrap(), ThresholdMethod::Mean).unwrap();
        assert_eq!(mask.count_ones(), 6);
    }

    #[test]
    fn aggregate_examples() {
        let on = BinaryMask::new(1, 1, vec![true]).unwrap();
        let off = BinaryMask::new(1, 1, vec![false]).unwrap();
        let p = aggregate(&[on.clone(), on.clone()], &[map(1, 1, &[1.0]), map(1, 1, &[0.5])]).unwrap();
        assert_eq!(p.data(), &[0.75]);
        let p = aggregate(&[off.clone(), off.clone()], &[map(1, 1, &[1.0]), map(1, 1, &[1.0])]).unwrap();
        assert_eq!(p.data(), &[0.0]);
        let p = aggregate(&[on.clone(), on.clone()], &[map(1, 1, &[1.0]), map(1, 1, &[1.0])]).unwrap();
        assert_eq!(p.data(), &[1.0]);
        assert!(aggregate(std::slice::from_ref(&on), &[map(1, 1, &[1.0])]).is_err());
        let wide = BinaryMask::new(1, 2, vec![true, false]).unwrap();
        assert!(aggregate(&[on, wide], &[map(1, 1, &[1.0]), map(1, 1, &[1.0])]).is_err());
    }

    #[test]
    fn uncertainty_examples() {
        let u = bernoulli_uncertainty(&map(1, 4, &[0.5, 0.0, 1.0, 0.75])).unwrap();
        assert_eq!(u.data(), &[0.25, 0.0, 0.0, 0.1875]);
        assert!(bernoulli_uncertainty(&map(1, 1, &[1.2])).is_err());
        assert!(bernoulli_uncertainty(&map(1, 1, &[-0.1])).is_err());
    }

    struct Constant(ScalarMap);

    impl Attribution for Constant {
        fn attribute(&self, _: &ImageTensor, _: u64) -> Result<ScalarMap> {
            Ok(self.0.clone())
        }
    }

    struct Sequence(Mutex<std::collections::VecDeque<ScalarMap>>);

    impl Attribution for Sequence {
        fn attribute(&self, _: &ImageTensor, _: u64) -> Result<ScalarMap> {
            Ok(self.0.lock().unwrap().pop_front().expect("enough maps"))
        }
    }

    #[test]
    fn constant_base_closed_form() {
        let values = [0.1, 0.4, 0.8, -0.2];
        let base = Constant(map(2, 2, &values));
        let x = ImageTensor::filled(1, 2, 2, 0.5).unwrap();
        let res = explain_with(&x, &base, 10, ThresholdMethod::Mean, 3).unwrap();
        // mean = 0.275: pixels 0.4 and 0.8 are always on with W = v / 0.8
        let expect_p = [0.0, 0.5, 1.0, 0.0];
        for (p, e) in res.importance.data().iter().zip(expect_p) {
            assert!((p - e).abs() < 1e-15);
        }
        for (u, p) in res.uncertainty.data().iter().zip(res.importance.data()) {
            assert_eq!(*u, p * (1.0 - p));
        }
        assert!(res.realizations.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn alternating_pixel_is_maximally_uncertain() {
        // pixel 0 flips across the mean threshold with weight 1 when on
        let on = map(1, 2, &[1.0, 0.0]);
        let off = map(1, 2, &[0.0, 1.0]);
        let maps = (0..10).map(|k| if k % 2 == 0 { on.clone() } else { off.clone() }).collect();
        let base = Sequence(Mutex::new(maps));
        let x = ImageTensor::filled(1, 1, 2, 0.5).unwrap();
        let res = explain_with(&x, &base, 10, ThresholdMethod::Mean, 0).unwrap();
        assert_eq!(res.importance.data(), &[0.5, 0.5]);
        assert_eq!(res.uncertainty.data(), &[0.25, 0.25]);
    }

    #[test]
    fn too_many_degenerate_realizations_fail() {
        let base = Constant(ScalarMap::filled(2, 2, -1.0).unwrap());
        let x = ImageTensor::filled(1, 2, 2, 0.5).unwrap();
        let err = explain_with(&x, &base, 4, ThresholdMethod::Mean, 0).unwrap_err();
        assert!(matches!(err, Error::Undefined(_)));
        assert!(explain_with(&x, &base, 1, ThresholdMethod::Mean, 0).is_err());
    }

    #[test]
    fn explain_is_deterministic_and_bounded() {
        let data: Vec<f64> = (0..256)
            .map(|i| {
                let (r, c) = ((i / 16) as f64 - 7.5, (i % 16) as f64 - 5.0);
                0.1 + 0.8 * (-(r * r + c * c) / 12.0).exp()
            })
            .collect();
        let x = ImageTensor::new(1, 16, 16, data).unwrap();
        let enc = Encoder::new(EncoderKind::Conv, 1, x.shape(), 16).unwrap();
        let cfg = RepeatConfig {
            k: 4,
            base: BaseConfig::relax(MaskConfig { num_masks: 20, ..Default::default() }),
            ..Default::default()
        };
        let a = explain(&x, &enc, &cfg).unwrap();
        assert_eq!(a, explain(&x, &enc, &cfg).unwrap());
        assert!(a.importance.data().iter().all(|p| (0.0..=1.0).contains(p)));
        assert!(a.uncertainty.data().iter().all(|u| (0.0..=0.25).contains(u)));
        let other = explain(&x, &enc, &RepeatConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.importance, other.importance);
    }
}
