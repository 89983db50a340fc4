//! Entropy of uncertainty maps over a small structured corpus for every
//! uncertainty method.
//!
//! ```text
//! cargo run --release --example complexity_summary -- [n]
//! ```

use repeat::encoder::{Encoder, EncoderKind};
use repeat::estimator::RepeatConfig;
use repeat::eval::experiment::run_complexity;
use repeat::eval::{numbered, synth_corpus, CorpusKind, TtaConfig, UncertaintyMethod};
use repeat::tensor::Shape;

fn main() -> anyhow::Result<()> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let shape = Shape::new(1, 32, 32);
    let corpus = numbered("structured", synth_corpus(CorpusKind::Structured, n, shape, 0)?);
    let enc = Encoder::new(EncoderKind::Conv, 0, shape, 16)?;
    let cfg = RepeatConfig::default();

    for method in [UncertaintyMethod::Repeat, UncertaintyMethod::Relax, UncertaintyMethod::Tta] {
        let r = run_complexity(&corpus, &enc, &cfg, method, TtaConfig::default())?;
        println!(
            "{method:>7}: mean {:.3}  median {:.3}  (bound ln(H*W) = {:.3})",
            r.mean, r.median, r.max_possible
        );
    }
    Ok(())
}
