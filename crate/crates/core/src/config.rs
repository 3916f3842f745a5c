//! Generator configuration and the named dataset variants.
//!
//! Configs are read from TOML files with one table per concern:
//!
//! ```toml
//! [dataset]
//! samples = 1500
//! channels = 160
//! length = 1024
//! seed = 0
//!
//! [latents]
//! weibull_shape = 1.5
//! weibull_scale = 6.0
//! min_count = 2
//! max_kernel_terms = 5
//! standardize = true
//!
//! [drift]
//! rho = 0.95
//! sigma = 0.1
//! frozen = false
//!
//! [regime]
//! mode = "none"        # or "hmm"
//! states = 4
//! stickiness = 0.9
//! blend = "additive"   # or "convex"
//! eta = 0.1
//!
//! [lag]
//! max_lag = 4
//! ```
//!
//! Every key is optional and falls back to [`GeneratorConfig::default`].

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetShape {
    pub samples: usize,
    pub channels: usize,
    pub length: usize,
    pub seed: u64,
}

impl Default for DatasetShape {
    fn default() -> Self {
        Self {
            samples: 1500,
            channels: 160,
            length: 1024,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatentConfig {
    pub weibull_shape: f64,
    pub weibull_scale: f64,
    pub min_count: usize,
    pub max_kernel_terms: usize,
    pub standardize: bool,
}

impl Default for LatentConfig {
    fn default() -> Self {
        Self {
            weibull_shape: 1.5,
            weibull_scale: 6.0,
            min_count: 2,
            max_kernel_terms: 5,
            standardize: true,
        }
    }
}

/// AR(1) drift of the mixing logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    pub rho: f64,
    pub sigma: f64,
    /// Holds every logit at its initial stationary draw, giving a static LMC
    /// with the same weight distribution as the drifting model.
    pub frozen: bool,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            rho: 0.95,
            sigma: 0.1,
            frozen: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeMode {
    None,
    Hmm,
}

/// How regime means and within-regime variation combine into logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeBlend {
    /// `mean[s_t] + AR(1) drift`.
    Additive,
    /// `(1 - eta) * mean[s_t] + eta * noise`.
    Convex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeConfig {
    pub mode: RegimeMode,
    pub states: usize,
    pub stickiness: f64,
    pub blend: RegimeBlend,
    pub eta: f64,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        Self {
            mode: RegimeMode::None,
            states: 4,
            stickiness: 0.9,
            blend: RegimeBlend::Additive,
            eta: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LagConfig {
    pub max_lag: usize,
}

impl Default for LagConfig {
    fn default() -> Self {
        Self { max_lag: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub dataset: DatasetShape,
    pub latents: LatentConfig,
    pub drift: DriftConfig,
    pub regime: RegimeConfig,
    pub lag: LagConfig,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        let l = &self.latents;
        if d.channels == 0 || d.samples == 0 {
            return Err(Error::invalid("samples and channels must be positive"));
        }
        if d.length < 2 {
            return Err(Error::invalid(format!("series length must be at least 2, got {}", d.length)));
        }
        if l.min_count == 0 || l.min_count > d.channels {
            return Err(Error::invalid(format!(
                "minimum latent count {} must lie in 1..={}",
                l.min_count, d.channels
            )));
        }
        if !(l.weibull_shape > 0.0 && l.weibull_scale > 0.0) {
            return Err(Error::invalid("weibull shape and scale must be positive"));
        }
        if l.max_kernel_terms == 0 {
            return Err(Error::invalid("max kernel terms must be at least 1"));
        }
        let dr = &self.drift;
        if !(dr.rho.abs() < 1.0) {
            return Err(Error::invalid(format!("drift rho must satisfy |rho| < 1, got {}", dr.rho)));
        }
        if !(dr.sigma >= 0.0 && dr.sigma.is_finite()) {
            return Err(Error::invalid(format!("drift sigma must be non-negative, got {}", dr.sigma)));
        }
        let r = &self.regime;
        if !(0.0..=1.0).contains(&r.stickiness) {
            return Err(Error::invalid(format!("stickiness must lie in [0, 1], got {}", r.stickiness)));
        }
        if !(0.0..=1.0).contains(&r.eta) {
            return Err(Error::invalid(format!("eta must lie in [0, 1], got {}", r.eta)));
        }
        if r.mode == RegimeMode::Hmm && r.states < 2 {
            return Err(Error::invalid(format!("hmm regimes need at least 2 states, got {}", r.states)));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::format(path, msg),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to toml")
    }
}

/// Named dataset families. Each sample of a sweep variant draws its own
/// parameter from the stated range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// The config exactly as given.
    Config,
    /// No regimes, no lags, rho uniform on [0.92, 0.99].
    Drift,
    /// No regimes, max lag uniform on {0, ..., 8}.
    Lag,
    /// HMM regimes with the state count uniform on {2, ..., 6}.
    Regime,
    /// Equal thirds of drift, lag and regime samples, in that order.
    Combined,
}

pub const DRIFT_RHO_RANGE: (f64, f64) = (0.92, 0.99);
pub const LAG_MAX_RANGE: (usize, usize) = (0, 8);
pub const REGIME_STATES_RANGE: (usize, usize) = (2, 6);

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Config => "config",
            Variant::Drift => "drift",
            Variant::Lag => "lag",
            Variant::Regime => "regime",
            Variant::Combined => "combined",
        }
    }

    /// Resolves the config of one sample. `rng` should be a per-sample stream.
    pub fn resolve<R: Rng + ?Sized>(&self, base: &GeneratorConfig, rng: &mut R) -> GeneratorConfig {
        let mut cfg = base.clone();
        match self {
            Variant::Config | Variant::Combined => {}
            Variant::Drift => {
                cfg.regime.mode = RegimeMode::None;
                cfg.lag.max_lag = 0;
                cfg.drift.rho = rng.random_range(DRIFT_RHO_RANGE.0..=DRIFT_RHO_RANGE.1);
            }
            Variant::Lag => {
                cfg.regime.mode = RegimeMode::None;
                cfg.lag.max_lag = rng.random_range(LAG_MAX_RANGE.0..=LAG_MAX_RANGE.1);
            }
            Variant::Regime => {
                cfg.regime.mode = RegimeMode::Hmm;
                cfg.regime.states = rng.random_range(REGIME_STATES_RANGE.0..=REGIME_STATES_RANGE.1);
            }
        }
        cfg
    }

    /// Largest lag any sample of this variant can use.
    pub fn max_lag_bound(&self, base: &GeneratorConfig) -> usize {
        match self {
            Variant::Drift => 0,
            Variant::Lag => LAG_MAX_RANGE.1,
            Variant::Combined => LAG_MAX_RANGE.1.max(base.lag.max_lag),
            Variant::Config | Variant::Regime => base.lag.max_lag,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "config" => Variant::Config,
            "drift" => Variant::Drift,
            "lag" => Variant::Lag,
            "regime" => Variant::Regime,
            "combined" => Variant::Combined,
            other => return Err(Error::invalid(format!("unknown variant {other:?}"))),
        })
    }
}
