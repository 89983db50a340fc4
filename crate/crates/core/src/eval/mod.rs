//! Evaluation of uncertainty maps.

pub mod experiment;
pub mod gmm;
pub mod metrics;
pub mod synth;

pub use experiment::{
    emprt_score, numbered, run_complexity, run_ood_experiment, run_sanity, uncertainty_map, CorpusItem,
    EvalRecord, Label, OodReport, TtaConfig, UncertaintyMethod,
};
pub use gmm::{ood_posterior, Gmm};
pub use metrics::{
    aggregate_uncertainty, auroc, complexity, discrete_complexity, emprt_from_maps, Complexity,
};
pub use synth::{synth_corpus, synth_image, CorpusKind};
