//! Drives a run from a TOML configuration, as the `repeat` binary does, and
//! shows that the echoed config in the sidecar reproduces it.
//!
//! ```text
//! cargo run --release --example run_config
//! ```

use repeat::commands::{cmd_explain, SIDECAR};
use repeat::RunConfig;

const CONFIG: &str = r#"
[image]
height = 32
width = 32

[encoder]
kind = "conv"
seed = 3

[masks]
n = 50

[repeat]
k = 6
threshold = "otsu"
seed = 11
"#;

fn main() -> anyhow::Result<()> {
    let cfg = RunConfig::from_toml(CONFIG)?;
    let image = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/sample64.png");
    let out = std::env::temp_dir().join("repeat-run-config");

    let first = cmd_explain(&cfg, &image, &out)?;
    println!("full config after defaults:\n{}", cfg.to_toml());

    let echoed = RunConfig::load(out.join(SIDECAR))?;
    let second = cmd_explain(&echoed, &image, &out.join("rerun"))?;
    println!(
        "mean uncertainty {:.6} / rerun from echo {:.6}",
        first.uncertainty.mean, second.uncertainty.mean
    );
    Ok(())
}
