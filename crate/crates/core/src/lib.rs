//! Bayesian Weibull reliability models for interval-censored failure data.
//!
//! The crate covers the whole pipeline: interval-censored datasets and
//! synthetic generators, the Weibull-Cox likelihood, a small neural network
//! trained to its MAP point with a Laplace (GGN) posterior around it, a
//! No-U-Turn sampler for the baseline and linear regressions, and evaluation
//! metrics with reliability curves.

pub mod dataset;
pub mod datagen;
pub mod error;
pub mod laplace;
pub mod mcmc;
pub mod metrics;
pub mod nn;
pub mod survival;

pub use error::{Error, Result};

use std::path::Path;

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text)?)
}
