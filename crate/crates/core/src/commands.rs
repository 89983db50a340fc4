//! File-level commands behind the `repeat` binary: explain one image, evaluate
//! corpora, write synthetic corpora and compare thresholds.
//!
//! Every command is a pure function of its [`RunConfig`] and input files. The
//! JSON documents carry a `schema_version` and an echo of the config, and
//! never record timing, thread counts or directory iteration order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{ensure, Error, Result};
use crate::estimator::{explain, realization_seed, RealizationFlags};
use crate::eval::experiment::{ComplexityRecord, SanityRecord, ScoreHistogram};
use crate::eval::{
    run_complexity, run_ood_experiment, run_sanity, synth_image, CorpusItem, CorpusKind, EvalRecord, Gmm,
    Label, UncertaintyMethod,
};
use crate::io::{load_image, save_map, MapFormat, RawTensor, RAW_MAGIC};
use crate::tensor::{ScalarMap, Shape};
use crate::threshold::{binarize, select_threshold, Threshold, ThresholdMethod};

pub const SCHEMA_VERSION: u32 = 1;

/// File names written by [`cmd_explain`] inside the output directory.
pub const IMPORTANCE_RAW: &str = "importance.rpt";
pub const IMPORTANCE_PNG: &str = "importance.png";
pub const UNCERTAINTY_RAW: &str = "uncertainty.rpt";
pub const UNCERTAINTY_PNG: &str = "uncertainty.png";
pub const SIDECAR: &str = "explain.json";
pub const MANIFEST: &str = "manifest.json";

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl From<&ScalarMap> for MapSummary {
    fn from(m: &ScalarMap) -> Self {
        Self { min: m.min(), max: m.max(), mean: m.mean() }
    }
}

/// The JSON sidecar of one explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainSidecar {
    pub schema_version: u32,
    pub image: PathBuf,
    pub config: RunConfig,
    /// Threshold of every realization, in order.
    pub thresholds: Vec<Threshold>,
    pub flags: Vec<RealizationFlags>,
    pub importance: MapSummary,
    pub uncertainty: MapSummary,
    pub files: Vec<String>,
}

/// Explains `image` and writes importance and uncertainty maps (raw and
/// heatmap) plus [`SIDECAR`] into `out`.
pub fn cmd_explain(cfg: &RunConfig, image: &Path, out: &Path) -> Result<ExplainSidecar> {
    cfg.validate()?;
    let x = load_image(image, (cfg.image.height, cfg.image.width))?;
    let enc = cfg.encoder(x.channels())?;
    let result = explain(&x, &enc, &cfg.repeat_config())?;
    create_dir(out)?;
    save_map(&result.importance, out.join(IMPORTANCE_RAW), MapFormat::Raw)?;
    save_map(&result.importance, out.join(IMPORTANCE_PNG), MapFormat::Heatmap)?;
    save_map(&result.uncertainty, out.join(UNCERTAINTY_RAW), MapFormat::Raw)?;
    save_map(&result.uncertainty, out.join(UNCERTAINTY_PNG), MapFormat::Heatmap)?;
    let sidecar = ExplainSidecar {
        schema_version: SCHEMA_VERSION,
        image: image.to_path_buf(),
        config: cfg.clone(),
        thresholds: result.thresholds,
        flags: result.flags,
        importance: MapSummary::from(&result.importance),
        uncertainty: MapSummary::from(&result.uncertainty),
        files: [IMPORTANCE_RAW, IMPORTANCE_PNG, UNCERTAINTY_RAW, UNCERTAINTY_PNG].map(String::from).to_vec(),
    };
    write_json(&sidecar, &out.join(SIDECAR))?;
    Ok(sidecar)
}

/// Loads every `.rpt` and `.png` file of `dir`, sorted by file name, resized
/// to the configured image size. Ids are the file stems.
pub fn load_corpus(dir: &Path, cfg: &RunConfig) -> Result<Vec<CorpusItem>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "rpt" || e == "png") {
            paths.push(path);
        }
    }
    paths.sort();
    ensure!(!paths.is_empty(), "{}: no .rpt or .png images", dir.display());
    let items = paths
        .iter()
        .map(|p| {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok(CorpusItem::new(id, load_image(p, (cfg.image.height, cfg.image.width))?))
        })
        .collect::<Result<Vec<_>>>()?;
    let channels = items[0].image.channels();
    ensure!(
        items.iter().all(|it| it.image.channels() == channels),
        "{}: images differ in channel count",
        dir.display()
    );
    Ok(items)
}

fn corpus_dir<'a>(dir: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    dir.as_deref().ok_or_else(|| Error::Config(format!("eval.{key} is not set")))
}

/// A corpus-level report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report<R, S> {
    pub schema_version: u32,
    /// `ood`, `sanity` or `complexity`.
    pub task: String,
    pub config: RunConfig,
    pub records: Vec<R>,
    pub summary: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OodSummary {
    pub method: UncertaintyMethod,
    pub auroc: f64,
    pub n_in: usize,
    pub n_ood: usize,
    pub mean_score_in: f64,
    pub mean_score_ood: f64,
    pub gmm: Gmm,
    pub histogram: ScoreHistogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SanitySummary {
    pub median: f64,
    pub n: usize,
    pub undefined: usize,
    pub rand_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexitySummary {
    pub method: UncertaintyMethod,
    pub mean: f64,
    pub median: f64,
    pub max_possible: f64,
}

pub type OodReportFile = Report<EvalRecord, OodSummary>;
pub type SanityReportFile = Report<SanityRecord, SanitySummary>;
pub type ComplexityReportFile = Report<ComplexityRecord, ComplexitySummary>;

fn mean_of(records: &[EvalRecord], label: Label) -> f64 {
    let v: Vec<f64> = records.iter().filter(|r| r.label == label).map(|r| r.aggregated_uncertainty).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// OOD detection between `eval.in` and `eval.ood`; writes `eval.report` and
/// the score histogram CSV to `eval.histogram`.
pub fn cmd_eval_ood(cfg: &RunConfig) -> Result<OodReportFile> {
    cfg.validate()?;
    let in_corpus = load_corpus(corpus_dir(&cfg.eval.in_dir, "in")?, cfg)?;
    let ood_corpus = load_corpus(corpus_dir(&cfg.eval.ood, "ood")?, cfg)?;
    ensure!(
        in_corpus[0].image.channels() == ood_corpus[0].image.channels(),
        "in-distribution and OOD corpora differ in channel count"
    );
    let enc = cfg.encoder(in_corpus[0].image.channels())?;
    let out =
        run_ood_experiment(&in_corpus, &ood_corpus, &enc, &cfg.repeat_config(), cfg.eval.method, cfg.tta)?;
    let report = Report {
        schema_version: SCHEMA_VERSION,
        task: "ood".into(),
        config: cfg.clone(),
        summary: OodSummary {
            method: out.method,
            auroc: out.auroc,
            n_in: in_corpus.len(),
            n_ood: ood_corpus.len(),
            mean_score_in: mean_of(&out.records, Label::InDist),
            mean_score_ood: mean_of(&out.records, Label::Ood),
            gmm: out.gmm,
            histogram: out.histogram,
        },
        records: out.records,
    };
    create_parent(&cfg.eval.report)?;
    write_json(&report, &cfg.eval.report)?;
    create_parent(&cfg.eval.histogram)?;
    fs::write(&cfg.eval.histogram, report.summary.histogram.to_csv())
        .map_err(|e| Error::io(&cfg.eval.histogram, e))?;
    Ok(report)
}

/// eMPRT of REPEAT uncertainty over `eval.corpus` against an encoder
/// randomized with `eval.rand_seed`; writes `eval.report`.
pub fn cmd_eval_sanity(cfg: &RunConfig) -> Result<SanityReportFile> {
    cfg.validate()?;
    let corpus = load_corpus(corpus_dir(&cfg.eval.corpus, "corpus")?, cfg)?;
    let enc = cfg.encoder(corpus[0].image.channels())?;
    let out = run_sanity(&corpus, &enc, &cfg.repeat_config(), cfg.eval.rand_seed)?;
    let report = Report {
        schema_version: SCHEMA_VERSION,
        task: "sanity".into(),
        config: cfg.clone(),
        summary: SanitySummary {
            median: out.median,
            n: out.records.len(),
            undefined: out.undefined,
            rand_seed: cfg.eval.rand_seed,
        },
        records: out.records,
    };
    create_parent(&cfg.eval.report)?;
    write_json(&report, &cfg.eval.report)?;
    Ok(report)
}

/// Entropy of the `eval.method` uncertainty over `eval.corpus`; writes
/// `eval.report`.
pub fn cmd_eval_complexity(cfg: &RunConfig) -> Result<ComplexityReportFile> {
    cfg.validate()?;
    let corpus = load_corpus(corpus_dir(&cfg.eval.corpus, "corpus")?, cfg)?;
    let enc = cfg.encoder(corpus[0].image.channels())?;
    let out = run_complexity(&corpus, &enc, &cfg.repeat_config(), cfg.eval.method, cfg.tta)?;
    let report = Report {
        schema_version: SCHEMA_VERSION,
        task: "complexity".into(),
        config: cfg.clone(),
        summary: ComplexitySummary {
            method: out.method,
            mean: out.mean,
            median: out.median,
            max_possible: out.max_possible,
        },
        records: out.records,
    };
    create_parent(&cfg.eval.report)?;
    write_json(&report, &cfg.eval.report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub file: String,
}

/// Index of a synthetic corpus directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthManifest {
    pub schema_version: u32,
    pub kind: CorpusKind,
    pub n: usize,
    pub seed: u64,
    pub shape: [usize; 3],
    pub entries: Vec<ManifestEntry>,
}

/// Writes `n` raw images `<kind>-NNNN.rpt` and [`MANIFEST`] into `out`.
pub fn cmd_synth(kind: CorpusKind, n: usize, shape: Shape, seed: u64, out: &Path) -> Result<SynthManifest> {
    ensure!(n >= 1, "corpus size must be at least 1");
    create_dir(out)?;
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("{kind}-{i:04}");
        let file = format!("{id}.rpt");
        RawTensor::from(&synth_image(kind, shape, seed, i)?).write(out.join(&file))?;
        entries.push(ManifestEntry { id, file });
    }
    let manifest = SynthManifest {
        schema_version: SCHEMA_VERSION,
        kind,
        n,
        seed,
        shape: [shape.channels, shape.height, shape.width],
        entries,
    };
    write_json(&manifest, &out.join(MANIFEST))?;
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub method: ThresholdMethod,
    pub threshold: Threshold,
    pub foreground_fraction: f64,
}

/// All four thresholds of `map` and the share of pixels at or above each.
pub fn threshold_demo(map: &ScalarMap) -> Result<Vec<ThresholdRow>> {
    ThresholdMethod::ALL
        .into_iter()
        .map(|method| {
            let threshold = select_threshold(map, method)?;
            Ok(ThresholdRow {
                method,
                threshold,
                foreground_fraction: binarize(map, threshold.value).foreground_fraction(),
            })
        })
        .collect()
}

/// The map to threshold: a single-channel raw file is used as is; any other
/// image is explained by one realization of the configured base attribution.
pub fn demo_map(cfg: &RunConfig, path: &Path) -> Result<ScalarMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(RAW_MAGIC) {
        let raw = RawTensor::from_bytes(&bytes)?;
        if raw.channels == 1 {
            return ScalarMap::try_from(raw);
        }
    }
    cfg.validate()?;
    let x = load_image(path, (cfg.image.height, cfg.image.width))?;
    let enc = cfg.encoder(x.channels())?;
    let base = cfg.base_config().attribution(&enc);
    base.attribute(&x, realization_seed(cfg.repeat.seed, 0))
}

pub fn format_threshold_table(rows: &[ThresholdRow]) -> String {
    let mut out = String::from("method    tau            foreground  notes\n");
    for r in rows {
        let mut notes = Vec::new();
        if r.threshold.degenerate {
            notes.push("constant map");
        }
        if r.threshold.non_converged {
            notes.push("not converged");
        }
        out.push_str(&format!(
            "{:<9} {:<14.6e} {:<11.4} {}\n",
            r.method.name(),
            r.threshold.value,
            r.foreground_fraction,
            notes.join(", ")
        ));
    }
    out
}
