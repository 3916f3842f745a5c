//! Synthetic multivariate time series with drifting, regime-switching and
//! lagged inter-channel correlations.
//!
//! The crate is organised by stage:
//!
//! - [`kernel_synth`]: random composed GP kernels and latent path sampling.
//! - [`generator`]: the dynamic coregionalization model and dataset generation.
//! - [`diagnostics`]: rolling correlation drift and argmax-lag fingerprints.
//! - [`mixing`]: window sampling, channel alignment and progressive mixing.
//! - [`bo`]: mixture-weight search with a Tree-structured Parzen Estimator.
//! - [`io`]: the binary dataset format, metadata sidecars and CSV import.

pub mod bo;
#[cfg(feature = "cli")]
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod generator;
pub mod io;
pub mod kernel_synth;
pub mod mixing;
pub mod rng;

pub use config::{GeneratorConfig, RegimeBlend, RegimeMode, Variant};
pub use error::{Error, Result};
pub use generator::{generate_dataset, generate_sample, generate_variant, Sample, SeriesTensor};
