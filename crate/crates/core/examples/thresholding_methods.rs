//! Compares mean, Otsu, triangle and Li thresholds on one RELAX map, then
//! runs REPEAT with each of them.
//!
//! ```text
//! cargo run --release --example thresholding_methods -- [image]
//! ```

use std::path::PathBuf;

use repeat::base::{relax_importance, MaskConfig};
use repeat::encoder::{Encoder, EncoderKind, WeightInit};
use repeat::estimator::{explain, RepeatConfig};
use repeat::io::load_image;
use repeat::threshold::{binarize, select_threshold, ThresholdMethod};

fn main() -> anyhow::Result<()> {
    let image = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets/sample64.png"));
    let x = load_image(&image, (64, 64))?;
    let enc = Encoder::with_init(EncoderKind::Conv, WeightInit::Designed, 0, x.shape(), 16)?;

    let map = relax_importance(&x, &enc, &MaskConfig::default(), 0)?;
    println!("single RELAX map, values in [{:.4}, {:.4}]", map.min(), map.max());
    for method in ThresholdMethod::ALL {
        let tau = select_threshold(&map, method)?;
        let fg = binarize(&map, tau.value).foreground_fraction();
        println!("  {method:<8} tau {:.5}  foreground {fg:.3}", tau.value);
    }

    println!("REPEAT with K = 10:");
    for method in ThresholdMethod::ALL {
        let cfg = RepeatConfig { threshold: method, ..RepeatConfig::default() };
        let r = explain(&x, &enc, &cfg)?;
        println!(
            "  {method:<8} mean importance {:.4}  mean uncertainty {:.4}",
            r.importance.mean(),
            r.uncertainty.mean()
        );
    }
    Ok(())
}
