//! Corpus-level experiments: OOD detection, the randomization sanity check,
//! and complexity summaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gmm::{ood_posterior, Gmm};
use super::metrics::{aggregate_uncertainty, auroc, complexity, emprt_from_maps};
use crate::base::{tta_uncertainty, Relax};
use crate::encoder::Encoder;
use crate::error::{ensure, Error, Result};
use crate::estimator::{explain, RepeatConfig};
use crate::tensor::{ImageTensor, ScalarMap};

/// Source of the per-image uncertainty map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UncertaintyMethod {
    #[default]
    Repeat,
    /// RELAX's own mask-weighted similarity variance.
    Relax,
    /// Spread of the base attribution across input-dropout copies.
    #[serde(alias = "tta-base")]
    Tta,
}

impl std::str::FromStr for UncertaintyMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "repeat" => Ok(Self::Repeat),
            "relax" => Ok(Self::Relax),
            "tta" | "tta-base" => Ok(Self::Tta),
            other => Err(Error::Validation(format!(
                "unknown uncertainty method {other:?} (expected repeat, relax or tta)"
            ))),
        }
    }
}

impl std::fmt::Display for UncertaintyMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            Self::Repeat => "repeat",
            Self::Relax => "relax",
            Self::Tta => "tta",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TtaConfig {
    /// Number of dropout copies.
    pub n: usize,
    /// Per-pixel drop probability.
    pub p: f64,
}

impl Default for TtaConfig {
    fn default() -> Self {
        Self { n: 10, p: 0.5 }
    }
}

/// Computes the uncertainty map of `x` under `method`.
///
/// `Relax` always uses the mask settings of `cfg.base`; `Tta` uses the
/// configured base attribution with `cfg.seed`.
pub fn uncertainty_map(
    x: &ImageTensor,
    enc: &Encoder,
    cfg: &RepeatConfig,
    method: UncertaintyMethod,
    tta: TtaConfig,
) -> Result<ScalarMap> {
    match method {
        UncertaintyMethod::Repeat => Ok(explain(x, enc, cfg)?.uncertainty),
        UncertaintyMethod::Relax => {
            cfg.base.masks.validate()?;
            Relax::new(enc, cfg.base.masks).uncertainty(x, cfg.seed)
        }
        UncertaintyMethod::Tta => {
            cfg.base.validate()?;
            let base = cfg.base.attribution(enc);
            tta_uncertainty(x, &*base, tta.n, tta.p, cfg.seed)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    InDist,
    Ood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub label: Label,
    pub aggregated_uncertainty: f64,
    /// Entropy of the uncertainty map, in nats.
    pub complexity: f64,
    /// Posterior of the high-mean mixture component.
    pub posterior: f64,
}

/// One image of a corpus with a stable identifier.
#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub id: String,
    pub image: ImageTensor,
}

impl CorpusItem {
    pub fn new(id: impl Into<String>, image: ImageTensor) -> Self {
        Self { id: id.into(), image }
    }
}

/// Names images `prefix-0000`, `prefix-0001`, ...
pub fn numbered(prefix: &str, images: Vec<ImageTensor>) -> Vec<CorpusItem> {
    images
        .into_iter()
        .enumerate()
        .map(|(i, image)| CorpusItem::new(format!("{prefix}-{i:04}"), image))
        .collect()
}

/// Counts of aggregated scores per corpus over shared bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    pub edges: Vec<f64>,
    pub in_dist: Vec<usize>,
    pub ood: Vec<usize>,
}

pub const SCORE_HISTOGRAM_BINS: usize = 20;

impl ScoreHistogram {
    pub fn new(records: &[EvalRecord], bins: usize) -> Self {
        let scores = records.iter().map(|r| r.aggregated_uncertainty);
        let lo = scores.clone().fold(f64::INFINITY, f64::min);
        let hi = scores.fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..=bins).map(|b| lo + width * b as f64).collect();
        edges[bins] = hi;
        let mut in_dist = vec![0; bins];
        let mut ood = vec![0; bins];
        for r in records {
            let b = (((r.aggregated_uncertainty - lo) / width) as usize).min(bins - 1);
            match r.label {
                Label::InDist => in_dist[b] += 1,
                Label::Ood => ood[b] += 1,
            }
        }
        Self { edges, in_dist, ood }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,in_dist,ood\n");
        for b in 0..self.in_dist.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.edges[b],
                self.edges[b + 1],
                self.in_dist[b],
                self.ood[b]
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub method: UncertaintyMethod,
    pub records: Vec<EvalRecord>,
    pub gmm: Gmm,
    pub auroc: f64,
    pub histogram: ScoreHistogram,
}

/// Scores every image by aggregated uncertainty, fits the mixture on the
/// pooled scores without labels, and measures how well the high-mean
/// component's posterior separates the corpora.
pub fn run_ood_experiment(
    in_corpus: &[CorpusItem],
    ood_corpus: &[CorpusItem],
    enc: &Encoder,
    cfg: &RepeatConfig,
    method: UncertaintyMethod,
    tta: TtaConfig,
) -> Result<OodReport> {
    ensure!(!in_corpus.is_empty(), "in-distribution corpus is empty");
    ensure!(!ood_corpus.is_empty(), "OOD corpus is empty");
    let items: Vec<(&CorpusItem, Label)> = in_corpus
        .iter()
        .map(|it| (it, Label::InDist))
        .chain(ood_corpus.iter().map(|it| (it, Label::Ood)))
        .collect();
    let mut records = items
        .par_iter()
        .map(|&(item, label)| {
            let u = uncertainty_map(&item.image, enc, cfg, method, tta)?;
            Ok(EvalRecord {
                id: item.id.clone(),
                label,
                aggregated_uncertainty: aggregate_uncertainty(&u),
                complexity: complexity(&u)?.nats,
                posterior: 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = records.iter().map(|r| r.aggregated_uncertainty).collect();
    let gmm = Gmm::fit(&scores)?;
    for (r, p) in records.iter_mut().zip(ood_posterior(&gmm, &scores)) {
        r.posterior = p;
    }
    let posteriors: Vec<f64> = records.iter().map(|r| r.posterior).collect();
    let labels: Vec<bool> = records.iter().map(|r| r.label == Label::Ood).collect();
    let auroc = auroc(&posteriors, &labels)?;
    let histogram = ScoreHistogram::new(&records, SCORE_HISTOGRAM_BINS);
    Ok(OodReport { method, records, gmm, auroc, histogram })
}

/// eMPRT on REPEAT uncertainty: the relative rise in discrete complexity when
/// `enc` is replaced by `enc.randomize(rand_seed)`.
pub fn emprt_score(x: &ImageTensor, enc: &Encoder, cfg: &RepeatConfig, rand_seed: u64) -> Result<f64> {
    emprt_against(x, enc, &enc.randomize(rand_seed), cfg)
}

fn emprt_against(x: &ImageTensor, enc: &Encoder, randomized: &Encoder, cfg: &RepeatConfig) -> Result<f64> {
    let trained = explain(x, enc, cfg)?.uncertainty;
    let random = explain(x, randomized, cfg)?.uncertainty;
    emprt_from_maps(&trained, &random)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanityRecord {
    pub id: String,
    /// `None` when the score is undefined for this image.
    pub emprt_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanityReport {
    pub records: Vec<SanityRecord>,
    /// Median over the defined scores.
    pub median: f64,
    pub undefined: usize,
}

/// eMPRT per image against one randomized copy of `enc`.
pub fn run_sanity(
    corpus: &[CorpusItem],
    enc: &Encoder,
    cfg: &RepeatConfig,
    rand_seed: u64,
) -> Result<SanityReport> {
    ensure!(!corpus.is_empty(), "sanity corpus is empty");
    let randomized = enc.randomize(rand_seed);
    let records = corpus
        .par_iter()
        .map(|item| {
            let score = match emprt_against(&item.image, enc, &randomized, cfg) {
                Ok(s) => Some(s),
                Err(Error::Undefined(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(SanityRecord { id: item.id.clone(), emprt_score: score })
        })
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = records.iter().filter_map(|r| r.emprt_score).collect();
    ensure!(!scores.is_empty(), "eMPRT is undefined for every image");
    Ok(SanityReport { undefined: records.len() - scores.len(), median: median(&scores), records })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRecord {
    pub id: String,
    pub complexity: f64,
    pub all_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub method: UncertaintyMethod,
    pub records: Vec<ComplexityRecord>,
    pub mean: f64,
    pub median: f64,
    /// Upper bound `ln(H * W)`.
    pub max_possible: f64,
}

pub fn run_complexity(
    corpus: &[CorpusItem],
    enc: &Encoder,
    cfg: &RepeatConfig,
    method: UncertaintyMethod,
    tta: TtaConfig,
) -> Result<ComplexityReport> {
    ensure!(!corpus.is_empty(), "complexity corpus is empty");
    let records = corpus
        .par_iter()
        .map(|item| {
            let c = complexity(&uncertainty_map(&item.image, enc, cfg, method, tta)?)?;
            Ok(ComplexityRecord { id: item.id.clone(), complexity: c.nats, all_zero: c.all_zero })
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = records.iter().map(|r| r.complexity).collect();
    let first = &corpus[0].image;
    Ok(ComplexityReport {
        method,
        mean: values.iter().sum::<f64>() / values.len() as f64,
        median: median(&values),
        max_possible: ((first.height() * first.width()) as f64).ln(),
        records,
    })
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
