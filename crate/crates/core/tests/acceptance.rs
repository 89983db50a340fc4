//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.
//!
//! ```text
//! cargo test --release --test acceptance
//! ```

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use repeat::base::{kernel_shap_values, Attribution, KernelShap, ShapConfig};
use repeat::encoder::{Encoder, EncoderKind, WeightInit};
use repeat::estimator::{aggregate, explain, explain_with, realization_seed, RepeatConfig};
use repeat::eval::experiment::median;
use repeat::eval::{
    auroc, complexity, emprt_from_maps, emprt_score, numbered, run_ood_experiment, run_sanity, synth_corpus,
    CorpusKind, Gmm, TtaConfig, UncertaintyMethod,
};
use repeat::histogram::Histogram;
use repeat::rng::rng_from;
use repeat::tensor::{BinaryMask, ImageTensor, ScalarMap, Shape};
use repeat::threshold::{threshold_li, threshold_mean, threshold_otsu, threshold_triangle, ThresholdMethod};
use repeat::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Base attribution returning `f(seed)`.
struct Stub<F>(F);

impl<F> Attribution for Stub<F>
where
    F: Fn(u64) -> ScalarMap,
{
    fn attribute(&self, _: &ImageTensor, seed: u64) -> Result<ScalarMap> {
        Ok((self.0)(seed))
    }
}

fn dummy_image(h: usize, w: usize) -> ImageTensor {
    ImageTensor::filled(1, h, w, 0.5).unwrap()
}

fn random_map(seed: u64, h: usize, w: usize) -> ScalarMap {
    let mut rng = rng_from(seed);
    let style = rng.random_range(0..3);
    ScalarMap::from_fn(h, w, |_, _| match style {
        0 => rng.random_range(-1.0..1.0),
        1 => (rng.random_range(0..5) as f64) * 0.25,
        _ => rng.random::<f64>().powi(4) * 10.0,
    })
    .unwrap()
}

fn bernoulli_algebra() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_from(1);
    let mut bad = 0;
    for trial in 0..10_000u64 {
        let k = rng.random_range(2..=10);
        let method = ThresholdMethod::ALL[rng.random_range(0..4)];
        let stub = Stub(move |seed| random_map(seed ^ (trial << 20), 8, 8));
        let r = explain_with(&dummy_image(8, 8), &stub, k, method, trial).unwrap();
        for (&p, &u) in r.importance.data().iter().zip(r.uncertainty.data()) {
            let ok = (0.0..=1.0).contains(&p)
                && u == p * (1.0 - p)
                && u <= 0.25
                && ((u == 0.0) == (p == 0.0 || p == 1.0));
            if !ok {
                bad += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        bad == 0 && elapsed < Duration::from_secs(10),
        format!("{bad} violating pixels over 10000 maps, {elapsed:.2?}"),
    )
}

fn alternating_pixel() -> Outcome {
    let mut worst = (0.0f64, 0.0f64);
    for k in [2, 4, 10, 50] {
        // Pixel 0 is the maximum on even realizations and the minimum on odd ones.
        let stub = Stub(|seed: u64| {
            let r = (0..k).position(|r| realization_seed(0, r) == seed).unwrap();
            ScalarMap::from_fn(2, 2, |i, j| match (i, j, r % 2 == 0) {
                (0, 0, true) => 1.0,
                (0, 0, false) => 0.0,
                _ => 0.5,
            })
            .unwrap()
        });
        let r = explain_with(&dummy_image(2, 2), &stub, k, ThresholdMethod::Mean, 0).unwrap();
        let (p, u) = (r.importance.get(0, 0), r.uncertainty.get(0, 0));
        if p != 0.5 || u != 0.25 {
            worst = (p, u);
        }
    }
    outcome(
        worst == (0.0, 0.0),
        format!("p = 0.5, U = 0.25 exactly for K in {{2,4,10,50}}; mismatch {worst:?}"),
    )
}

fn scale_invariance() -> Outcome {
    let scales = [0.1, 3.0, 42.0];
    let mut worst = 0.0f64;
    for trial in 0..500u64 {
        let plain = Stub(move |seed| random_map(seed ^ trial, 12, 12));
        let scaled = Stub(move |seed| {
            let m = random_map(seed ^ trial, 12, 12);
            let c = scales[(seed % 3) as usize];
            m.map(|v| c * v).unwrap()
        });
        let x = dummy_image(12, 12);
        let a = explain_with(&x, &plain, 10, ThresholdMethod::Mean, trial).unwrap();
        let b = explain_with(&x, &scaled, 10, ThresholdMethod::Mean, trial).unwrap();
        for (u, v) in a
            .importance
            .data()
            .iter()
            .chain(a.uncertainty.data())
            .zip(b.importance.data().iter().chain(b.uncertainty.data()))
        {
            worst = worst.max((u - v).abs());
        }
    }
    outcome(worst <= 1e-9, format!("max deviation {worst:.2e} over 500 runs"))
}

/// Exhaustive Otsu oracle with exact integer arithmetic over bin indices.
/// Returns the edge index of the best split, ties toward the lower edge.
fn otsu_oracle(counts: &[u64]) -> usize {
    let mut best: Option<(u128, u128, usize)> = None;
    for t in 1..counts.len() {
        let (mut n0, mut s0, mut n1, mut s1) = (0i128, 0i128, 0i128, 0i128);
        for (i, &c) in counts.iter().enumerate() {
            let (c, i) = (c as i128, i as i128);
            if i < t as i128 {
                n0 += c;
                s0 += i * c;
            } else {
                n1 += c;
                s1 += i * c;
            }
        }
        if n0 == 0 || n1 == 0 {
            continue;
        }
        // w0 w1 (mu0 - mu1)^2 is proportional to (s0 n1 - s1 n0)^2 / (n0 n1).
        let num = ((s0 * n1 - s1 * n0) * (s0 * n1 - s1 * n0)) as u128;
        let den = (n0 * n1) as u128;
        let better = match best {
            None => true,
            Some((bn, bd, _)) => num * bd > bn * den,
        };
        if better {
            best = Some((num, den, t));
        }
    }
    best.unwrap().2
}

/// Triangle oracle by perpendicular distance from each tail bin to the line
/// joining the peak and the far end of the longer tail.
fn triangle_oracle(counts: &[u64]) -> usize {
    let bins = counts.len();
    let peak = (0..bins).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
    let first = counts.iter().position(|&c| c > 0).unwrap();
    let last = counts.iter().rposition(|&c| c > 0).unwrap();
    let right = last - peak > peak - first;
    let (x0, x1) = if right { (last as f64, peak as f64) } else { (first as f64, peak as f64) };
    let (y0, y1) = (0.0, counts[peak] as f64);
    let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
    let candidates: Vec<usize> =
        if right { (peak + 1..=last).collect() } else { (first..peak.max(first + 1)).collect() };
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for k in candidates {
        let (x, y) = (k as f64, counts[k] as f64);
        // Positive when the bin lies below the line.
        let mut d = ((x1 - x0) * (y - y0) - (x - x0) * (y1 - y0)) / len;
        if !right {
            d = -d;
        }
        if d > best.0 || (d == best.0 && k < best.1) {
            best = (d, k);
        }
    }
    best.1
}

fn li_residual(h: &Histogram, tau: f64) -> f64 {
    let shift = (-h.edges()[0]).max(0.0);
    let t = tau + shift;
    let (mut n0, mut s0, mut n1, mut s1) = (0.0, 0.0, 0.0, 0.0);
    for b in 0..h.bins() {
        let c = (h.edges()[b] + h.edges()[b + 1]) / 2.0 + shift;
        let k = h.counts()[b] as f64;
        if c > t {
            n1 += k;
            s1 += k * c;
        } else {
            n0 += k;
            s0 += k * c;
        }
    }
    let (m0, m1) = (s0 / n0, s1 / n1);
    ((m0 - m1) / (m0.ln() - m1.ln()) - t).abs()
}

fn thresholding_oracles() -> Outcome {
    let mut rng = rng_from(4);
    let (mut otsu_bad, mut tri_bad, mut li_bad, mut mean_bad) = (0, 0, 0, 0);
    for _ in 0..1000 {
        let bins = [4, 16, 64, 256][rng.random_range(0..4)];
        let sparse = rng.random_bool(0.5);
        let mut counts: Vec<u64> = (0..bins)
            .map(|_| if sparse && rng.random_bool(0.6) { 0 } else { rng.random_range(0..100) })
            .collect();
        if counts.iter().filter(|&&c| c > 0).count() < 2 {
            counts[0] = 3;
            counts[bins - 1] = 5;
        }
        let lo = rng.random_range(-5.0..5.0);
        let hi = lo + rng.random_range(0.1..20.0);
        let h = Histogram::from_counts(counts.clone(), lo, hi).unwrap();
        if threshold_otsu(&h).value != h.edges()[otsu_oracle(&counts)] {
            otsu_bad += 1;
        }
        if threshold_triangle(&h).value != h.edges()[triangle_oracle(&counts)] {
            tri_bad += 1;
        }
        let li = threshold_li(&h);
        if li.non_converged || li_residual(&h, li.value) >= 0.5 * (hi - lo) / bins as f64 {
            li_bad += 1;
        }
        let values: Vec<f64> = (0..rng.random_range(1..500)).map(|_| rng.random_range(lo..hi)).collect();
        let map = ScalarMap::new(1, values.len(), values.clone()).unwrap();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        if (threshold_mean(&map) - mean).abs() > 1e-12 {
            mean_bad += 1;
        }
    }
    outcome(
        otsu_bad + tri_bad + li_bad + mean_bad == 0,
        format!("mismatches over 1000 histograms: otsu {otsu_bad}, triangle {tri_bad}, li {li_bad}, mean {mean_bad}"),
    )
}

/// Shapley values by direct enumeration of marginal contributions.
fn shapley_oracle(players: usize, v: &dyn Fn(&[bool]) -> f64) -> Vec<f64> {
    let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
    let mut phi = vec![0.0; players];
    for (i, phi_i) in phi.iter_mut().enumerate() {
        for bits in 0..1usize << players {
            if bits >> i & 1 == 1 {
                continue;
            }
            let s: Vec<bool> = (0..players).map(|p| bits >> p & 1 == 1).collect();
            let mut with = s.clone();
            with[i] = true;
            let size = s.iter().filter(|&&b| b).count();
            let w = fact(size) * fact(players - size - 1) / fact(players);
            *phi_i += w * (v(&with) - v(&s));
        }
    }
    phi
}

fn kernel_shap_exactness() -> Outcome {
    let mut worst = 0.0f64;
    let mut efficiency = 0.0f64;
    let mut rng = rng_from(5);
    // Random nonlinear games.
    for players in 2..=4 {
        for _ in 0..50 {
            let table: Vec<f64> = (0..1usize << players).map(|_| rng.random_range(-3.0..3.0)).collect();
            let v = |z: &[bool]| table[z.iter().enumerate().map(|(p, &b)| (b as usize) << p).sum::<usize>()];
            let est = kernel_shap_values(players, 1 << players, 0, |z| Ok(v(z))).unwrap();
            let exact = shapley_oracle(players, &v);
            for (a, b) in est.values.iter().zip(&exact) {
                worst = worst.max((a - b).abs());
            }
            let total: f64 = est.values.iter().sum();
            efficiency = efficiency.max((total - (v(&vec![true; players]) - v(&vec![false; players]))).abs());
        }
    }
    // Patch games on images; in the linear case one patch carries zero weights.
    let mut null_player = 0.0f64;
    for (rows, cols) in [(1, 2), (2, 1), (1, 3), (2, 2)] {
        let shape = Shape::new(1, 4, 6);
        let x = ImageTensor::new(1, 4, 6, (0..24).map(|i| (i as f64 * 0.37).sin().abs()).collect()).unwrap();
        let cfg =
            ShapConfig { patch_rows: rows, patch_cols: cols, ..ShapConfig::square(1, 1 << (rows * cols)) };
        let dim = 8;
        let mut matrix: Vec<f64> = (0..dim * 24).map(|_| rng.random_range(-1.0..1.0)).collect();
        for r in 0..dim {
            for px in 0..24 {
                if cfg.patch_of(px / 6, px % 6, 4, 6) == 0 {
                    matrix[r * 24 + px] = 0.0;
                }
            }
        }
        let encoders = [
            Encoder::linear_from_matrix(shape, dim, matrix).unwrap(),
            Encoder::new(EncoderKind::Conv, 3, shape, dim).unwrap(),
        ];
        for (e, enc) in encoders.iter().enumerate() {
            let maps = KernelShap::new(enc, cfg).run(&x, 0).unwrap();
            let reference = enc.encode(&x).unwrap();
            let v = |z: &[bool]| {
                let data = (0..24)
                    .map(|px| if z[cfg.patch_of(px / 6, px % 6, 4, 6)] { x.data()[px] } else { 0.0 })
                    .collect();
                enc.encode(&ImageTensor::new(1, 4, 6, data).unwrap()).unwrap().dot(&reference).unwrap()
            };
            let exact = shapley_oracle(cfg.players(), &v);
            for (a, b) in maps.estimate.values.iter().zip(&exact) {
                worst = worst.max((a - b).abs());
            }
            let total: f64 = maps.estimate.values.iter().sum();
            efficiency =
                efficiency.max((total - (maps.estimate.full_value - maps.estimate.empty_value)).abs());
            if e == 0 {
                null_player = null_player.max(maps.estimate.values[0].abs());
            }
        }
    }
    outcome(
        worst <= 1e-6 && efficiency <= 1e-6 && null_player <= 1e-6,
        format!("max |kernel - exact| {worst:.2e}, efficiency gap {efficiency:.2e}, null player {null_player:.2e}"),
    )
}

fn estimator_consistency() -> Outcome {
    const K: usize = 10_000;
    const SIDE: usize = 8;
    let mut summary = Vec::new();
    let mut pass = true;
    for p in [0.1, 0.5, 0.9] {
        let bound = 3.0 * (p * (1.0 - p) / K as f64).sqrt();
        let ones = ScalarMap::filled(SIDE, SIDE, 1.0).unwrap();
        let weights = vec![ones; K];
        let (mut ok, mut total) = (0, 0);
        for seed in 0..100 {
            let mut rng = rng_from(seed);
            let indicators: Vec<BinaryMask> = (0..K)
                .map(|_| {
                    BinaryMask::new(SIDE, SIDE, (0..SIDE * SIDE).map(|_| rng.random_bool(p)).collect())
                        .unwrap()
                })
                .collect();
            let pbar = aggregate(&indicators, &weights).unwrap();
            for &v in pbar.data() {
                total += 1;
                if (v - p).abs() <= bound {
                    ok += 1;
                }
            }
        }
        let rate = ok as f64 / total as f64;
        pass &= rate >= 0.99;
        summary.push(format!("p={p}: {:.2}%", 100.0 * rate));
    }
    outcome(pass, format!("within 3 sigma over 100 seeds x 64 pixels: {}", summary.join(", ")))
}

fn ood_analogue() -> Outcome {
    let start = Instant::now();
    let shape = Shape::new(1, 32, 32);
    let enc = Encoder::with_init(EncoderKind::Conv, WeightInit::Designed, 7, shape, 16).unwrap();
    let cfg = RepeatConfig::default();
    let corpus = |kind, seed, prefix| numbered(prefix, synth_corpus(kind, 100, shape, seed).unwrap());
    let in_dist = corpus(CorpusKind::Structured, 1, "in");
    let ood = corpus(CorpusKind::Fluctuating, 2, "ood");
    let run = |a, b| {
        run_ood_experiment(a, b, &enc, &cfg, UncertaintyMethod::Repeat, TtaConfig::default()).unwrap().auroc
    };
    let separated = run(&in_dist, &ood);
    let main_elapsed = start.elapsed();
    let null = run(&in_dist, &corpus(CorpusKind::Structured, 3, "null"));
    outcome(
        separated >= 0.95 && (0.4..=0.6).contains(&null) && main_elapsed < Duration::from_secs(300),
        format!("AUROC {separated:.3}, null AUROC {null:.3}, {main_elapsed:.1?} for the main run"),
    )
}

fn sanity_analogue() -> Outcome {
    let shape = Shape::new(1, 32, 32);
    let cfg = RepeatConfig::default();
    let corpus = numbered("s", synth_corpus(CorpusKind::Structured, 50, shape, 11).unwrap());
    let designed = Encoder::with_init(EncoderKind::Conv, WeightInit::Designed, 0, shape, 16).unwrap();
    let trained = run_sanity(&corpus, &designed, &cfg, 1234).unwrap().median;

    let random = Encoder::new(EncoderKind::Conv, 5, shape, 16).unwrap();
    let self_scores: Vec<f64> = corpus
        .iter()
        .enumerate()
        .map(|(i, item)| emprt_score(&item.image, &random, &cfg, 2000 + i as u64).unwrap())
        .collect();
    let null = median(&self_scores);

    let u = explain(&corpus[0].image, &designed, &cfg).unwrap().uncertainty;
    let identical = emprt_from_maps(&u, &u).unwrap();
    outcome(
        trained > null && null.abs() < 0.05 && identical == 0.0,
        format!("median eMPRT trained-vs-random {trained:+.4}, self-vs-self {null:+.4}, identical maps {identical}"),
    )
}

fn gmm_and_auroc() -> Outcome {
    let mut rng = rng_from(9);
    let low = Normal::new(0.0, 0.1).unwrap();
    let high = Normal::new(10.0, 0.1).unwrap();
    let mut scores: Vec<f64> = (0..200).map(|_| low.sample(&mut rng)).collect();
    scores.extend((0..200).map(|_| high.sample(&mut rng)));
    let g = Gmm::fit(&scores).unwrap();
    let mut means = g.means;
    means.sort_by(f64::total_cmp);
    let means_ok = (means[0] - 0.0).abs() <= 0.1 && (means[1] - 10.0).abs() <= 0.1;
    let weights_ok = g.weights.iter().all(|w| (w - 0.5).abs() <= 0.05);
    let monotone = g.trace.windows(2).all(|w| w[1] >= w[0]);

    let s = [1.0, 2.0, 2.0, 3.0];
    let l = [false, true, false, true];
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..4 {
        for j in 0..4 {
            if l[i] && !l[j] {
                den += 1.0;
                num += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    let oracle = num / den;
    let a = auroc(&s, &l).unwrap();
    outcome(
        means_ok && weights_ok && monotone && a == 0.875 && oracle == 0.875,
        format!(
            "means {:.4}/{:.4}, monotone log-likelihood {monotone}, auroc {a} (pairwise oracle {oracle})",
            means[0], means[1]
        ),
    )
}

fn complexity_bounds() -> Outcome {
    let mut rng = rng_from(10);
    let (mut over, mut uniform_miss, mut false_equal) = (0, 0, 0);
    for trial in 0..1000 {
        let (h, w) = (rng.random_range(1..20), rng.random_range(1..20));
        let uniform = trial % 5 == 0;
        let level = rng.random_range(0.01..0.25);
        let map = ScalarMap::from_fn(h, w, |_, _| if uniform { level } else { rng.random_range(0.0..0.25) })
            .unwrap();
        let non_uniform = map.data().iter().any(|&v| v != map.data()[0]);
        let c = complexity(&map).unwrap().nats;
        let bound = ((h * w) as f64).ln();
        if c > bound + 1e-9 {
            over += 1;
        }
        let equal = (c - bound).abs() <= 1e-9;
        if !non_uniform && !equal {
            uniform_miss += 1;
        }
        if non_uniform && equal {
            false_equal += 1;
        }
    }
    outcome(
        over + uniform_miss + false_equal == 0,
        format!("above bound {over}, uniform below bound {uniform_miss}, non-uniform at bound {false_equal}"),
    )
}

fn end_to_end_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let image = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/sample64.png");
    let files = ["importance.rpt", "importance.png", "uncertainty.rpt", "uncertainty.png", "explain.json"];
    let mut slowest = Duration::ZERO;
    let mut outputs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "1"), ("c", "8")] {
        let out = dir.path().join(name);
        let start = Instant::now();
        let status = Command::new(env!("CARGO_BIN_EXE_repeat"))
            .env_remove("REPEAT_THREADS")
            .args(["explain", "--k", "10", "--masks", "100", "--threads", threads, "--image"])
            .arg(&image)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        slowest = slowest.max(start.elapsed());
        assert!(status.success());
        outputs.push(files.map(|f| std::fs::read(out.join(f)).unwrap()));
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    outcome(
        identical && slowest < Duration::from_secs(10),
        format!("byte-identical across runs and 1 vs 8 threads: {identical}, slowest run {slowest:.2?}"),
    )
}

fn main() -> ExitCode {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check); 11] = [
        ("bernoulli algebra", bernoulli_algebra),
        ("alternating pixel", alternating_pixel),
        ("positive-scale invariance", scale_invariance),
        ("thresholding oracles", thresholding_oracles),
        ("kernel SHAP exactness", kernel_shap_exactness),
        ("estimator consistency", estimator_consistency),
        ("OOD analogue", ood_analogue),
        ("sanity analogue", sanity_analogue),
        ("GMM / AUROC units", gmm_and_auroc),
        ("complexity bounds", complexity_bounds),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| outcome(false, "panicked"));
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!result.pass);
        println!("criterion {:>2} {verdict} {name}: {}", i + 1, result.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("failed: {failed} of {}", criteria.len());
        ExitCode::FAILURE
    }
}
