//! Writes the three synthetic corpora as raw tensors with a manifest and
//! prints simple per-kind statistics.
//!
//! ```text
//! cargo run --release --example synth_corpus -- [out_dir] [n]
//! ```

use std::path::PathBuf;

use repeat::commands::cmd_synth;
use repeat::eval::CorpusKind;
use repeat::io::load_image;
use repeat::tensor::Shape;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("corpora"));
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(8);
    let shape = Shape::new(1, 32, 32);

    for kind in [CorpusKind::Structured, CorpusKind::Noise, CorpusKind::Fluctuating] {
        let dir = out.join(kind.to_string());
        let manifest = cmd_synth(kind, n, shape, 0, &dir)?;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut mean = 0.0;
        for e in &manifest.entries {
            let img = load_image(dir.join(&e.file), (shape.height, shape.width))?;
            let d = img.data();
            lo = d.iter().copied().fold(lo, f64::min);
            hi = d.iter().copied().fold(hi, f64::max);
            mean += d.iter().sum::<f64>() / d.len() as f64 / n as f64;
        }
        println!("{kind:>11}: {n} images in {}  values [{lo:.3}, {hi:.3}]  mean {mean:.3}", dir.display());
    }
    Ok(())
}
