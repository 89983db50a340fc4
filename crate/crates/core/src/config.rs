//! Declarative run configuration.
//!
//! A run is described by one TOML file whose sections all have defaults, so an
//! empty file is a valid configuration:
//!
//! ```toml
//! [image]
//! height = 64
//! width = 64
//!
//! [encoder]
//! kind = "conv"      # or "linear"
//! init = "gaussian"  # or "designed"
//! seed = 0
//! dim = 16
//!
//! [base]
//! method = "relax"   # or "shap"
//!
//! [masks]
//! grid = 7
//! cell_prob = 0.5
//! n = 100
//!
//! [shap]
//! patch_grid = 8
//! coalitions = 256
//! baseline = "zero"  # or "mean-pixel"
//!
//! [tta]
//! n = 10
//! p = 0.5
//!
//! [repeat]
//! k = 10
//! threshold = "mean"
//! seed = 0
//!
//! [eval]
//! in = "data/in"
//! ood = "data/ood"
//! corpus = "data/in"
//! method = "repeat"
//! aggregation = "mean"
//! rand_seed = 1
//! report = "report.json"
//! histogram = "histogram.csv"
//! ```
//!
//! Unknown keys are rejected. JSON with the same structure is accepted too,
//! including a whole report, whose `config` member is then used.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::base::{BaseConfig, BaseKind, MaskConfig, ShapBaseline, ShapConfig};
use crate::encoder::{Encoder, EncoderKind, WeightInit};
use crate::error::{ensure, Error, Result};
use crate::estimator::{RepeatConfig, DEFAULT_REALIZATIONS};
use crate::eval::{TtaConfig, UncertaintyMethod};
use crate::tensor::Shape;
use crate::threshold::ThresholdMethod;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub image: ImageSection,
    pub encoder: EncoderSection,
    pub base: BaseSection,
    pub masks: MaskConfig,
    pub shap: ShapSection,
    pub tta: TtaConfig,
    pub repeat: RepeatSection,
    pub eval: EvalSection,
}

/// Size every input image is resized to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImageSection {
    pub height: usize,
    pub width: usize,
}

impl Default for ImageSection {
    fn default() -> Self {
        Self { height: 64, width: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderSection {
    pub kind: EncoderKind,
    pub init: WeightInit,
    pub seed: u64,
    pub dim: usize,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self { kind: EncoderKind::Conv, init: WeightInit::Gaussian, seed: 0, dim: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaseSection {
    pub method: BaseKind,
}

/// Kernel SHAP settings; `patch_grid` sets both patch rows and columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapSection {
    pub patch_grid: usize,
    pub coalitions: usize,
    pub baseline: ShapBaseline,
}

impl Default for ShapSection {
    fn default() -> Self {
        let d = ShapConfig::default();
        Self { patch_grid: d.patch_rows, coalitions: d.num_coalitions, baseline: d.baseline }
    }
}

impl From<ShapSection> for ShapConfig {
    fn from(s: ShapSection) -> Self {
        ShapConfig { baseline: s.baseline, ..ShapConfig::square(s.patch_grid, s.coalitions) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RepeatSection {
    pub k: usize,
    pub threshold: ThresholdMethod,
    pub seed: u64,
}

impl Default for RepeatSection {
    fn default() -> Self {
        Self { k: DEFAULT_REALIZATIONS, threshold: ThresholdMethod::Mean, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Arithmetic mean over pixels.
    #[default]
    Mean,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// In-distribution corpus for the OOD task.
    #[serde(rename = "in")]
    pub in_dir: Option<PathBuf>,
    /// Out-of-distribution corpus for the OOD task.
    pub ood: Option<PathBuf>,
    /// Corpus for the sanity and complexity tasks.
    pub corpus: Option<PathBuf>,
    pub method: UncertaintyMethod,
    pub aggregation: Aggregation,
    /// Seed of the randomized encoder in the sanity task.
    pub rand_seed: u64,
    pub report: PathBuf,
    pub histogram: PathBuf,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            in_dir: None,
            ood: None,
            corpus: None,
            method: UncertaintyMethod::Repeat,
            aggregation: Aggregation::Mean,
            rand_seed: 1,
            report: PathBuf::from("report.json"),
            histogram: PathBuf::from("histogram.csv"),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses JSON holding either a config or a report with a `config` member.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let value = match value {
            serde_json::Value::Object(mut obj) if obj.contains_key("schema_version") => {
                obj.remove("config").ok_or_else(|| Error::Config("report has no config member".into()))?
            }
            other => other,
        };
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        };
        parsed.map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn base_config(&self) -> BaseConfig {
        BaseConfig { kind: self.base.method, masks: self.masks, shap: self.shap.into() }
    }

    pub fn repeat_config(&self) -> RepeatConfig {
        RepeatConfig {
            k: self.repeat.k,
            base: self.base_config(),
            threshold: self.repeat.threshold,
            seed: self.repeat.seed,
        }
    }

    /// Builds the configured encoder for images with `channels` channels.
    pub fn encoder(&self, channels: usize) -> Result<Encoder> {
        let e = &self.encoder;
        Encoder::with_init(
            e.kind,
            e.init,
            e.seed,
            Shape::new(channels, self.image.height, self.image.width),
            e.dim,
        )
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.image.height > 0 && self.image.width > 0,
            "image size must be positive, got {}x{}",
            self.image.height,
            self.image.width
        );
        self.repeat_config().validate()
    }
}
