//! REPEAT over label-free Kernel SHAP.
//!
//! With few patches every coalition is enumerated and the attributions are
//! exact Shapley values; with more patches coalitions are sampled, so each
//! seed gives a different map and REPEAT measures how stable they are.
//!
//! ```text
//! cargo run --release --example kernel_shap_base
//! ```

use repeat::base::{BaseConfig, KernelShap, ShapConfig};
use repeat::encoder::{Encoder, EncoderKind};
use repeat::estimator::{explain, RepeatConfig};
use repeat::io::load_image;

fn main() -> anyhow::Result<()> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/sample64.png");
    let x = load_image(path, (64, 64))?;
    let enc = Encoder::new(EncoderKind::Conv, 0, x.shape(), 16)?;

    let exact = KernelShap::new(&enc, ShapConfig::square(2, 16)).run(&x, 0)?;
    let e = &exact.estimate;
    println!("2x2 patches, exact = {}", e.exact);
    println!("  shapley values {:?}", e.values.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>());
    println!(
        "  sum {:.6} vs v(full) - v(empty) {:.6}",
        e.values.iter().sum::<f64>(),
        e.full_value - e.empty_value
    );

    let cfg =
        RepeatConfig { base: BaseConfig::kernel_shap(ShapConfig::square(8, 256)), ..RepeatConfig::default() };
    let r = explain(&x, &enc, &cfg)?;
    let unstable = r.uncertainty.data().iter().filter(|&&u| u > 0.2).count();
    println!(
        "8x8 patches, 256 sampled coalitions: mean uncertainty {:.4}, {unstable} of {} pixels above 0.2",
        r.uncertainty.mean(),
        r.uncertainty.len()
    );
    Ok(())
}
