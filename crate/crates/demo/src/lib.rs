//! Browser bindings: draw one sample, inspect its correlation structure, and
//! plot the mixing schedule.

use dynlmc::config::RegimeMode;
use dynlmc::diagnostics::{argmax_lag_distribution, correlation_drift, rolling_correlation};
use dynlmc::mixing::p_mix;
use dynlmc::{generate_sample, GeneratorConfig, Sample};
use wasm_bindgen::prelude::*;

#[wasm_bindgen]
pub struct DemoSample {
    sample: Sample,
}

impl DemoSample {
    /// `states < 2` disables regime switching.
    pub fn build(channels: u32, length: u32, rho: f64, sigma: f64, max_lag: u32, states: u32, seed: u32) -> dynlmc::Result<Self> {
        let mut config = GeneratorConfig::default();
        config.dataset.samples = 1;
        config.dataset.channels = channels as usize;
        config.dataset.length = length as usize;
        config.latents.min_count = config.latents.min_count.min(channels as usize).max(1);
        config.drift.rho = rho;
        config.drift.sigma = sigma;
        config.lag.max_lag = max_lag as usize;
        if states >= 2 {
            config.regime.mode = RegimeMode::Hmm;
            config.regime.states = states as usize;
        }
        Ok(Self {
            sample: generate_sample(&config, seed as u64)?,
        })
    }

    fn pair_path(&self, a: usize, b: usize, window: usize, stride: usize) -> dynlmc::Result<Vec<f64>> {
        let path = rolling_correlation(self.sample.series.view(), window, stride)?;
        Ok(path
            .windows
            .iter()
            .map(|w| if w.defined[[a, b]] { w.values[[a, b]] } else { f64::NAN })
            .collect())
    }
}

fn js(e: dynlmc::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
impl DemoSample {
    #[wasm_bindgen(constructor)]
    pub fn new(channels: u32, length: u32, rho: f64, sigma: f64, max_lag: u32, states: u32, seed: u32) -> Result<DemoSample, JsError> {
        Self::build(channels, length, rho, sigma, max_lag, states, seed).map_err(js)
    }

    pub fn channels(&self) -> u32 {
        self.sample.series.nrows() as u32
    }

    pub fn length(&self) -> u32 {
        self.sample.series.ncols() as u32
    }

    pub fn latents(&self) -> u32 {
        self.sample.latents.count() as u32
    }

    pub fn channel(&self, i: u32) -> Vec<f32> {
        self.sample.series.row(i as usize).iter().map(|&v| v as f32).collect()
    }

    /// `alpha[i, j, t]` over `t`.
    pub fn weight(&self, i: u32, j: u32) -> Vec<f32> {
        let w = self.sample.weights.as_array();
        (0..w.dim().2).map(|t| w[[i as usize, j as usize, t]] as f32).collect()
    }

    /// Row-major `channels x latents` delays.
    pub fn lags(&self) -> Vec<i32> {
        self.sample.lags.as_array().iter().map(|&v| v as i32).collect()
    }

    pub fn regimes(&self) -> Vec<u32> {
        self.sample
            .regimes
            .as_ref()
            .map(|r| r.states.iter().map(|&s| s as u32).collect())
            .unwrap_or_default()
    }

    /// Rolling correlation of one channel pair; NaN where undefined.
    pub fn rolling_pair(&self, a: u32, b: u32, window: u32, stride: u32) -> Result<Vec<f64>, JsError> {
        self.pair_path(a as usize, b as usize, window as usize, stride as usize).map_err(js)
    }

    pub fn drift(&self, window: u32, stride: u32) -> Result<f64, JsError> {
        rolling_correlation(self.sample.series.view(), window as usize, stride as usize)
            .and_then(|p| correlation_drift(&p))
            .map_err(js)
    }

    /// Counts for lags `-max_lag..=max_lag`.
    pub fn lag_histogram(&self, max_lag: u32) -> Result<Vec<u32>, JsError> {
        let h = argmax_lag_distribution(self.sample.series.view(), max_lag as usize).map_err(js)?;
        Ok(h.counts.iter().map(|&c| c as u32).collect())
    }
}

/// `p_mix(i)` for `i = 0..=upto` with schedule length `m`.
#[wasm_bindgen]
pub fn p_mix_curve(m: u32, upto: u32) -> Vec<f64> {
    (0..=upto as usize).map(|i| p_mix(i, m as usize)).collect()
}
