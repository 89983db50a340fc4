//! Test-time augmentation baseline next to REPEAT and RELAX's own
//! uncertainty on the same image.
//!
//! ```text
//! cargo run --release --example tta_baseline
//! ```

use repeat::encoder::{Encoder, EncoderKind, WeightInit};
use repeat::estimator::RepeatConfig;
use repeat::eval::{aggregate_uncertainty, complexity, uncertainty_map, TtaConfig, UncertaintyMethod};
use repeat::io::load_image;

fn main() -> anyhow::Result<()> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/sample64.png");
    let x = load_image(path, (64, 64))?;
    let enc = Encoder::with_init(EncoderKind::Conv, WeightInit::Designed, 0, x.shape(), 16)?;
    let cfg = RepeatConfig::default();

    for method in [UncertaintyMethod::Repeat, UncertaintyMethod::Relax, UncertaintyMethod::Tta] {
        let u = uncertainty_map(&x, &enc, &cfg, method, TtaConfig::default())?;
        println!(
            "{method:>7}: mean {:.5}  max {:.5}  complexity {:.3} nats",
            aggregate_uncertainty(&u),
            u.max(),
            complexity(&u)?.nats
        );
    }
    Ok(())
}
