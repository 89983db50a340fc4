//! Bernoulli importance and certainty-of-importance maps for image encoders.
//!
//! A stochastic attribution (RELAX masks or Kernel SHAP) is run `K` times;
//! each map is thresholded into a Bernoulli indicator and weighted by its
//! normalized scores. The weighted mean is the importance `p`, and
//! `p * (1 - p)` is the per-pixel uncertainty of that importance.
//!
//! ```no_run
//! use repeat::encoder::{Encoder, EncoderKind};
//! use repeat::estimator::{explain, RepeatConfig};
//! use repeat::io::load_image;
//!
//! let x = load_image("cat.png", (64, 64))?;
//! let enc = Encoder::new(EncoderKind::Conv, 0, x.shape(), 16)?;
//! let r = explain(&x, &enc, &RepeatConfig::default())?;
//! println!("mean uncertainty {}", r.uncertainty.mean());
//! # Ok::<(), repeat::Error>(())
//! ```

pub mod base;
pub mod commands;
pub mod config;
pub mod encoder;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod histogram;
pub mod io;
pub mod rng;
pub mod tensor;
pub mod threshold;

pub use config::RunConfig;
pub use error::{Error, Result};
