//! Two-component one-dimensional Gaussian mixture fitted by EM.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

pub const VARIANCE_FLOOR: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 200;
pub const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub variances: [f64; 2],
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood of the initial parameters and after every EM step.
    pub trace: Vec<f64>,
}

fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / var)
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Gmm {
    /// Fits the mixture with EM.
    ///
    /// Means start at the 25th and 75th percentiles, both variances at the
    /// pooled variance, weights at one half. Iteration stops once the
    /// log-likelihood gains less than [`TOLERANCE`] or after
    /// [`MAX_ITERATIONS`] steps.
    pub fn fit(scores: &[f64]) -> Result<Self> {
        ensure!(scores.len() >= 4, "mixture fit needs at least 4 scores, got {}", scores.len());
        ensure!(scores.iter().all(|s| s.is_finite()), "mixture fit input contains non-finite scores");
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        ensure!(sorted[0] < sorted[sorted.len() - 1], "mixture fit input has zero spread");
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let pooled = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).max(VARIANCE_FLOOR);

        let mut model = Self {
            weights: [0.5, 0.5],
            means: [percentile(&sorted, 0.25), percentile(&sorted, 0.75)],
            variances: [pooled, pooled],
            log_likelihood: f64::NEG_INFINITY,
            iterations: 0,
            converged: false,
            trace: Vec::new(),
        };
        model.log_likelihood = model.total_log_likelihood(scores);
        model.trace.push(model.log_likelihood);

        for _ in 0..MAX_ITERATIONS {
            model.em_step(scores);
            model.iterations += 1;
            let ll = model.total_log_likelihood(scores);
            let gain = ll - model.log_likelihood;
            model.log_likelihood = ll;
            model.trace.push(ll);
            if gain < TOLERANCE {
                model.converged = true;
                break;
            }
        }
        Ok(model)
    }

    fn em_step(&mut self, scores: &[f64]) {
        let mut nk = [0.0; 2];
        let mut sx = [0.0; 2];
        for &x in scores {
            let r = self.responsibilities(x);
            for k in 0..2 {
                nk[k] += r[k];
                sx[k] += r[k] * x;
            }
        }
        let mut means = self.means;
        for k in 0..2 {
            if nk[k] > 0.0 {
                means[k] = sx[k] / nk[k];
            }
        }
        let mut sq = [0.0; 2];
        for &x in scores {
            let r = self.responsibilities(x);
            for k in 0..2 {
                sq[k] += r[k] * (x - means[k]).powi(2);
            }
        }
        let n = scores.len() as f64;
        for k in 0..2 {
            if nk[k] > 0.0 {
                self.variances[k] = (sq[k] / nk[k]).max(VARIANCE_FLOOR);
            }
            self.weights[k] = (nk[k] / n).clamp(f64::MIN_POSITIVE, 1.0);
        }
        let total = self.weights[0] + self.weights[1];
        self.weights = [self.weights[0] / total, 1.0 - self.weights[0] / total];
        self.means = means;
    }

    fn joint_log(&self, x: f64) -> [f64; 2] {
        [0, 1].map(|k| self.weights[k].ln() + log_normal(x, self.means[k], self.variances[k]))
    }

    pub fn log_density(&self, x: f64) -> f64 {
        let [a, b] = self.joint_log(x);
        log_sum_exp(a, b)
    }

    pub fn total_log_likelihood(&self, scores: &[f64]) -> f64 {
        scores.iter().map(|&x| self.log_density(x)).sum()
    }

    /// Posterior probability of each component at `x`.
    pub fn responsibilities(&self, x: f64) -> [f64; 2] {
        let [a, b] = self.joint_log(x);
        // logistic form keeps the pair summing to one
        let r1 = 1.0 / (1.0 + (a - b).exp());
        [1.0 - r1, r1]
    }

    /// Index of the component with the higher mean (the second one on ties).
    pub fn high_component(&self) -> usize {
        if self.means[0] > self.means[1] {
            0
        } else {
            1
        }
    }
}

/// Posterior probability of the higher-mean component for every score.
pub fn ood_posterior(model: &Gmm, scores: &[f64]) -> Vec<f64> {
    let k = model.high_component();
    scores.iter().map(|&x| model.responsibilities(x)[k]).collect()
}
