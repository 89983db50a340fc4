//! Separates a structured corpus from a fluctuating one by REPEAT uncertainty.
//!
//! ```text
//! cargo run --release --example ood_detection -- [n] [size]
//! ```

use std::time::Instant;

use repeat::encoder::{Encoder, EncoderKind, WeightInit};
use repeat::estimator::RepeatConfig;
use repeat::eval::{numbered, run_ood_experiment, synth_corpus, CorpusKind, TtaConfig, UncertaintyMethod};
use repeat::tensor::Shape;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(100);
    let size: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(32);
    let shape = Shape::new(1, size, size);
    let enc = Encoder::with_init(EncoderKind::Conv, WeightInit::Designed, 7, shape, 16)?;
    let cfg = RepeatConfig::default();

    let start = Instant::now();
    let stable = numbered("structured", synth_corpus(CorpusKind::Structured, n, shape, 1)?);
    let shaky = numbered("fluctuating", synth_corpus(CorpusKind::Fluctuating, n, shape, 2)?);
    for method in [UncertaintyMethod::Repeat, UncertaintyMethod::Relax, UncertaintyMethod::Tta] {
        let report = run_ood_experiment(&stable, &shaky, &enc, &cfg, method, TtaConfig::default())?;
        let mean = |label| {
            let v: Vec<f64> = report
                .records
                .iter()
                .filter(|r| r.label == label)
                .map(|r| r.aggregated_uncertainty)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        println!(
            "{method:>7}: auroc {:.3}  mean score in {:.4} / ood {:.4}",
            report.auroc,
            mean(repeat::eval::Label::InDist),
            mean(repeat::eval::Label::Ood)
        );
    }

    let other = numbered("structured-b", synth_corpus(CorpusKind::Structured, n, shape, 3)?);
    let null =
        run_ood_experiment(&stable, &other, &enc, &cfg, UncertaintyMethod::Repeat, TtaConfig::default())?;
    println!(" null  : auroc {:.3}", null.auroc);
    println!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
