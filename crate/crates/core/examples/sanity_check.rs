//! Randomization sanity check on REPEAT uncertainty.
//!
//! Compares the designed conv encoder against a randomized copy, and a random
//! encoder against another random draw as the null reference.
//!
//! ```text
//! cargo run --release --example sanity_check -- [n]
//! ```

use repeat::encoder::{Encoder, EncoderKind, WeightInit};
use repeat::estimator::RepeatConfig;
use repeat::eval::{numbered, run_sanity, synth_corpus, CorpusKind};
use repeat::tensor::Shape;

fn main() -> anyhow::Result<()> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(50);
    let shape = Shape::new(1, 32, 32);
    let corpus = numbered("structured", synth_corpus(CorpusKind::Structured, n, shape, 11)?);
    let cfg = RepeatConfig::default();

    let designed = Encoder::with_init(EncoderKind::Conv, WeightInit::Designed, 0, shape, 16)?;
    let random = Encoder::new(EncoderKind::Conv, 5, shape, 16)?;
    for (name, enc) in [("designed", &designed), ("random", &random)] {
        let report = run_sanity(&corpus, enc, &cfg, 1234)?;
        let scores: Vec<String> =
            report.records.iter().filter_map(|r| r.emprt_score).map(|s| format!("{s:+.2}")).collect();
        println!("{name:>8}: median eMPRT {:+.4} ({} undefined)", report.median, report.undefined);
        println!("          {}", scores.join(" "));
    }
    Ok(())
}
