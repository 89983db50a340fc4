//! Explains one image with REPEAT on top of RELAX and writes the importance
//! and uncertainty maps as raw tensors and heatmaps.
//!
//! ```text
//! cargo run --release --example explain_image -- [image] [out_dir]
//! ```

use std::path::PathBuf;

use repeat::encoder::{Encoder, EncoderKind, WeightInit};
use repeat::estimator::{explain, RepeatConfig};
use repeat::io::{load_image, save_map, MapFormat};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let image = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets/sample64.png"));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("explain-out"));

    let x = load_image(&image, (64, 64))?;
    let enc = Encoder::with_init(EncoderKind::Conv, WeightInit::Designed, 0, x.shape(), 16)?;
    let result = explain(&x, &enc, &RepeatConfig::default())?;

    for (k, tau) in result.thresholds.iter().enumerate() {
        let fg = result.realizations[k].foreground_fraction();
        println!("realization {k}: tau {:.5}  foreground {:.3}", tau.value, fg);
    }
    println!(
        "importance in [{:.3}, {:.3}], mean uncertainty {:.4}, max {:.4}",
        result.importance.min(),
        result.importance.max(),
        result.uncertainty.mean(),
        result.uncertainty.max()
    );

    std::fs::create_dir_all(&out)?;
    for (name, map) in [("importance", &result.importance), ("uncertainty", &result.uncertainty)] {
        save_map(map, out.join(format!("{name}.rpt")), MapFormat::Raw)?;
        save_map(map, out.join(format!("{name}.png")), MapFormat::Heatmap)?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
