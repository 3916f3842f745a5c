//! Dynamic linear model of coregionalization.
//!
//! Each channel is a time-varying convex mixture of lagged latent paths:
//!
//! ```text
//! C_i(t) = sum_j alpha_ij(t) * l_j(t - tau_ij)
//! ```
//!
//! The weights are a softmax over latents of logits that follow AR(1) drift,
//! optionally on top of HMM-switched regime means. [`generate_sample`] runs
//! the whole pipeline for one sample; [`generate_dataset`] and
//! [`for_each_sample`] fan it out over a dataset with per-sample substreams so
//! the output does not depend on scheduling.

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Weibull};
use serde::{Deserialize, Serialize};

use crate::config::{GeneratorConfig, RegimeBlend, RegimeMode, Variant};
use crate::error::{Error, Result};
use crate::kernel_synth::{sample_gp, sample_kernel_composition, KernelSpec, LatentSeries};
use crate::rng::{derive_seed, substream};

/// Resample attempts for a degenerate latent draw, and for a failed sample.
pub const MAX_RETRIES: usize = 5;

/// `max(min(ceil(w), channels), min_count)`.
pub fn latent_count_from_draw(draw: f64, channels: usize, min_count: usize) -> usize {
    let ceil = if draw.is_finite() { draw.ceil().max(0.0) } else { f64::MAX };
    let capped = if ceil >= channels as f64 { channels } else { ceil as usize };
    capped.max(min_count)
}

/// Number of latents for one sample from a continuous Weibull draw.
pub fn sample_latent_count<R: Rng + ?Sized>(
    channels: usize,
    shape: f64,
    scale: f64,
    min_count: usize,
    rng: &mut R,
) -> Result<usize> {
    if min_count == 0 || min_count > channels {
        return Err(Error::invalid(format!(
            "minimum latent count {min_count} must lie in 1..={channels}"
        )));
    }
    let weibull = Weibull::new(scale, shape)
        .map_err(|e| Error::invalid(format!("weibull(shape {shape}, scale {scale}): {e}")))?;
    Ok(latent_count_from_draw(weibull.sample(rng), channels, min_count))
}

/// Stationary AR(1) path: `x_0 ~ N(0, sigma^2 / (1 - rho^2))`,
/// `x_t = rho x_{t-1} + eps_t` with `eps_t ~ N(0, sigma^2)`.
pub fn ar1_path<R: Rng + ?Sized>(len: usize, rho: f64, sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
    let mut out = vec![0.0; len];
    fill_ar1(&mut out, rho, sigma, false, rng)?;
    Ok(out)
}

fn fill_ar1<R: Rng + ?Sized>(out: &mut [f64], rho: f64, sigma: f64, frozen: bool, rng: &mut R) -> Result<()> {
    if !(rho.abs() < 1.0) {
        return Err(Error::invalid(format!("AR(1) needs |rho| < 1, got {rho}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("AR(1) noise must be non-negative, got {sigma}")));
    }
    if out.is_empty() {
        return Ok(());
    }
    let stationary_sd = sigma / (1.0 - rho * rho).sqrt();
    out[0] = stationary_sd * rng.sample::<f64, _>(StandardNormal);
    if frozen {
        let x0 = out[0];
        out.iter_mut().for_each(|v| *v = x0);
        return Ok(());
    }
    for t in 1..out.len() {
        out[t] = rho * out[t - 1] + sigma * rng.sample::<f64, _>(StandardNormal);
    }
    Ok(())
}

/// Mixing weights `alpha[i, j, t]`; every `(i, t)` row is a probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor(Array3<f64>);

impl WeightTensor {
    pub fn as_array(&self) -> &Array3<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array3<f64> {
        self.0
    }

    pub fn channels(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn latents(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn len(&self) -> usize {
        self.0.shape()[2]
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Repeats an `N x L` matrix across `len` time steps.
    pub fn broadcast(weights: ArrayView2<f64>, len: usize) -> Self {
        let (n, l) = weights.dim();
        Self(Array3::from_shape_fn((n, l, len), |(i, j, _)| weights[[i, j]]))
    }

    /// Largest deviation of a row sum from one.
    pub fn max_simplex_error(&self) -> f64 {
        self.0
            .sum_axis(Axis(1))
            .iter()
            .fold(0.0_f64, |m, s| m.max((s - 1.0).abs()))
    }
}

/// Softmax over the latent axis of an `N x L x T` logit tensor.
pub fn softmax_rows(logits: &Array3<f64>) -> Result<WeightTensor> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("softmax", "non-finite logit"));
    }
    let (n, l, len) = logits.dim();
    let mut out = Array3::zeros((n, l, len));
    let mut row = vec![0.0; l];
    for i in 0..n {
        for t in 0..len {
            let max = (0..l).map(|j| logits[[i, j, t]]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (j, r) in row.iter_mut().enumerate() {
                *r = libm::exp(logits[[i, j, t]] - max);
                total += *r;
            }
            for (j, r) in row.iter().enumerate() {
                out[[i, j, t]] = r / total;
            }
        }
    }
    Ok(WeightTensor(out))
}

/// Hidden regime path and per-regime logit means.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSequence {
    pub states: Vec<usize>,
    pub means: Vec<Array2<f64>>,
}

impl RegimeSequence {
    pub fn state_count(&self) -> usize {
        self.means.len()
    }

    /// Fraction of steps whose state equals the previous one.
    pub fn self_transition_rate(&self) -> f64 {
        if self.states.len() < 2 {
            return 1.0;
        }
        let stays = self.states.windows(2).filter(|w| w[0] == w[1]).count();
        stays as f64 / (self.states.len() - 1) as f64
    }
}

/// Sticky HMM: stay with probability `stickiness`, otherwise jump uniformly
/// to one of the other states. Initial state uniform, means i.i.d. N(0, 1).
pub fn sample_regime_sequence<R: Rng + ?Sized>(
    len: usize,
    states: usize,
    stickiness: f64,
    channels: usize,
    latents: usize,
    rng: &mut R,
) -> Result<RegimeSequence> {
    if states < 2 {
        return Err(Error::invalid(format!("hmm regimes need at least 2 states, got {states}")));
    }
    if !(0.0..=1.0).contains(&stickiness) {
        return Err(Error::invalid(format!("stickiness must lie in [0, 1], got {stickiness}")));
    }
    let means = (0..states)
        .map(|_| Array2::from_shape_simple_fn((channels, latents), || rng.sample(StandardNormal)))
        .collect();
    let mut path = Vec::with_capacity(len);
    if len > 0 {
        let mut current = rng.random_range(0..states);
        path.push(current);
        for _ in 1..len {
            if rng.random::<f64>() >= stickiness {
                let other = rng.random_range(0..states - 1);
                current = if other >= current { other + 1 } else { other };
            }
            path.push(current);
        }
    }
    Ok(RegimeSequence { states: path, means })
}

/// Logits `A[i, j, t]` for one sample, before the softmax.
pub fn build_logits<R: Rng + ?Sized>(
    config: &GeneratorConfig,
    latents: usize,
    rng: &mut R,
) -> Result<(Array3<f64>, Option<RegimeSequence>)> {
    let n = config.dataset.channels;
    let len = config.dataset.length;
    let drift = &config.drift;
    let mut logits = Array3::zeros((n, latents, len));
    let regimes = match config.regime.mode {
        RegimeMode::None => None,
        RegimeMode::Hmm => Some(sample_regime_sequence(
            len,
            config.regime.states,
            config.regime.stickiness,
            n,
            latents,
            rng,
        )?),
    };
    match (&regimes, config.regime.blend) {
        (Some(reg), RegimeBlend::Convex) => {
            let eta = config.regime.eta;
            for ((i, j, t), v) in logits.indexed_iter_mut() {
                let noise: f64 = rng.sample(StandardNormal);
                *v = (1.0 - eta) * reg.means[reg.states[t]][[i, j]] + eta * noise;
            }
        }
        _ => {
            for mut path in logits.lanes_mut(Axis(2)) {
                let slice = path.as_slice_mut().expect("time axis is contiguous");
                fill_ar1(slice, drift.rho, drift.sigma, drift.frozen, rng)?;
            }
            if let Some(reg) = &regimes {
                for ((i, j, t), v) in logits.indexed_iter_mut() {
                    *v += reg.means[reg.states[t]][[i, j]];
                }
            }
        }
    }
    Ok((logits, regimes))
}

pub fn build_weight_tensor<R: Rng + ?Sized>(
    config: &GeneratorConfig,
    latents: usize,
    rng: &mut R,
) -> Result<(WeightTensor, Option<RegimeSequence>)> {
    let (logits, regimes) = build_logits(config, latents, rng)?;
    Ok((softmax_rows(&logits)?, regimes))
}

/// Integer delays `tau[i, j]`, i.i.d. uniform on `-max_lag..=max_lag`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LagMatrix(Array2<i64>);

impl LagMatrix {
    pub fn new(lags: Array2<i64>) -> Self {
        Self(lags)
    }

    pub fn zeros(channels: usize, latents: usize) -> Self {
        Self(Array2::zeros((channels, latents)))
    }

    pub fn as_array(&self) -> &Array2<i64> {
        &self.0
    }

    pub fn max_abs(&self) -> usize {
        self.0.iter().map(|v| v.unsigned_abs() as usize).max().unwrap_or(0)
    }
}

pub fn sample_lag_matrix<R: Rng + ?Sized>(channels: usize, latents: usize, max_lag: usize, rng: &mut R) -> LagMatrix {
    let bound = max_lag as i64;
    LagMatrix(Array2::from_shape_simple_fn((channels, latents), || {
        rng.random_range(-bound..=bound)
    }))
}

/// Latent paths sharing one core length and padding.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBank {
    latents: Vec<LatentSeries>,
}

impl LatentBank {
    pub fn new(latents: Vec<LatentSeries>) -> Result<Self> {
        let first = latents.first().ok_or_else(|| Error::invalid("latent bank is empty"))?;
        let (len, pad) = (first.core_len(), first.pad());
        if latents.iter().any(|l| l.core_len() != len || l.pad() != pad) {
            return Err(Error::invalid("latents differ in length or padding"));
        }
        Ok(Self { latents })
    }

    pub fn latents(&self) -> &[LatentSeries] {
        &self.latents
    }

    pub fn count(&self) -> usize {
        self.latents.len()
    }

    pub fn core_len(&self) -> usize {
        self.latents[0].core_len()
    }

    pub fn pad(&self) -> usize {
        self.latents[0].pad()
    }
}

/// `C_i(t) = sum_j alpha_ij(t) l_j(t - tau_ij)` over the core window.
pub fn generate_series(latents: &LatentBank, weights: &WeightTensor, lags: &LagMatrix) -> Result<Array2<f64>> {
    let (n, l, len) = weights.as_array().dim();
    if l != latents.count() || lags.as_array().dim() != (n, l) || len != latents.core_len() {
        return Err(Error::invalid(format!(
            "shape mismatch: weights {n}x{l}x{len}, lags {:?}, {} latents of length {}",
            lags.as_array().dim(),
            latents.count(),
            latents.core_len()
        )));
    }
    if lags.max_abs() > latents.pad() {
        return Err(Error::invalid(format!(
            "lag {} exceeds latent padding {}",
            lags.max_abs(),
            latents.pad()
        )));
    }
    let alpha = weights.as_array();
    let mut out = Array2::zeros((n, len));
    for i in 0..n {
        let mut row = out.row_mut(i);
        let row = row.as_slice_mut().expect("row-major output");
        for (j, latent) in latents.latents().iter().enumerate() {
            let tau = lags.as_array()[[i, j]];
            let start = (latent.pad() as i64 - tau) as usize;
            let source = &latent.values()[start..start + len];
            let w = alpha.slice(s![i, j, ..]);
            for ((c, a), x) in row.iter_mut().zip(w.iter()).zip(source) {
                *c += a * x;
            }
        }
    }
    Ok(out)
}

/// Static LMC: `C_i(t) = sum_j alpha_ij l_j(t)` with fixed weights.
pub fn generate_static_lmc(latents: &LatentBank, weights: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (n, l) = weights.dim();
    if l != latents.count() {
        return Err(Error::invalid(format!(
            "weights have {l} columns but the bank holds {} latents",
            latents.count()
        )));
    }
    let len = latents.core_len();
    let mut out = Array2::zeros((n, len));
    for i in 0..n {
        let mut row = out.row_mut(i);
        let row = row.as_slice_mut().expect("row-major output");
        for (j, latent) in latents.latents().iter().enumerate() {
            let a = weights[[i, j]];
            for (c, x) in row.iter_mut().zip(latent.core()) {
                *c += a * x;
            }
        }
    }
    Ok(out)
}

/// Everything drawn for one sample.
#[derive(Debug, Clone)]
pub struct Sample {
    pub series: Array2<f64>,
    pub latents: LatentBank,
    pub kernels: Vec<KernelSpec>,
    pub weights: WeightTensor,
    pub lags: LagMatrix,
    pub regimes: Option<RegimeSequence>,
}

// Substream tags below a sample seed.
const STREAM_COUNT: u64 = 0;
const STREAM_LATENT: u64 = 1;
const STREAM_LAGS: u64 = 2;
const STREAM_WEIGHTS: u64 = 3;
const STREAM_SWEEP: u64 = u64::MAX;

/// Draws `count` latents, resampling the kernel for degenerate draws.
pub fn sample_latent_bank(
    config: &GeneratorConfig,
    count: usize,
    seed: u64,
) -> Result<(LatentBank, Vec<KernelSpec>)> {
    let len = config.dataset.length;
    let pad = config.lag.max_lag;
    let mut latents = Vec::with_capacity(count);
    let mut kernels = Vec::with_capacity(count);
    for j in 0..count {
        let mut rng = substream(seed, &[STREAM_LATENT, j as u64]);
        let mut last_err = None;
        for _ in 0..MAX_RETRIES {
            let spec = sample_kernel_composition(config.latents.max_kernel_terms, len, &mut rng)?;
            match sample_gp(&spec, len, pad, config.latents.standardize, &mut rng) {
                Ok(latent) => {
                    latents.push(latent);
                    kernels.push(spec);
                    last_err = None;
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        if let Some(e) = last_err {
            return Err(e);
        }
    }
    Ok((LatentBank::new(latents)?, kernels))
}

/// One full draw of the generative process from the stream rooted at `seed`.
pub fn generate_sample(config: &GeneratorConfig, seed: u64) -> Result<Sample> {
    config.validate()?;
    let shape = &config.dataset;
    let count = sample_latent_count(
        shape.channels,
        config.latents.weibull_shape,
        config.latents.weibull_scale,
        config.latents.min_count,
        &mut substream(seed, &[STREAM_COUNT]),
    )?;
    let (latents, kernels) = sample_latent_bank(config, count, seed)?;
    let lags = sample_lag_matrix(
        shape.channels,
        count,
        config.lag.max_lag,
        &mut substream(seed, &[STREAM_LAGS]),
    );
    let (weights, regimes) = build_weight_tensor(config, count, &mut substream(seed, &[STREAM_WEIGHTS]))?;
    let series = generate_series(&latents, &weights, &lags)?;
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("mixing", "non-finite channel value"));
    }
    Ok(Sample {
        series,
        latents,
        kernels,
        weights,
        lags,
        regimes,
    })
}

/// Seed of attempt `attempt` for sample `index` of a dataset.
pub fn sample_seed(master: u64, index: usize, attempt: usize) -> u64 {
    derive_seed(master, &[index as u64, attempt as u64])
}

/// What the sidecar records about one generated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub seed: u64,
    pub attempt: usize,
    pub variant: Variant,
    pub rho: f64,
    pub max_lag: usize,
    pub states: Option<usize>,
    pub latent_count: usize,
    pub kernels: Vec<KernelSpec>,
}

/// Config, variant and per-sample records sufficient to regenerate a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub variant: Variant,
    pub config: GeneratorConfig,
    pub samples: Vec<SampleRecord>,
}

/// Generated or loaded dataset of shape `samples x channels x length`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTensor {
    pub data: Array3<f64>,
    pub provenance: Option<Provenance>,
}

impl SeriesTensor {
    pub fn new(data: Array3<f64>) -> Self {
        Self { data, provenance: None }
    }

    pub fn samples(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn len(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample(&self, index: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(0), index)
    }
}

/// Sub-variant of sample `index` in a combined dataset of `total` samples.
fn combined_part(index: usize, total: usize) -> Variant {
    let third = crate::bo::MixtureWeights::uniform(3);
    let counts = crate::bo::allocate(&third, total);
    if index < counts[0] {
        Variant::Drift
    } else if index < counts[0] + counts[1] {
        Variant::Lag
    } else {
        Variant::Regime
    }
}

/// Resolved config of sample `index` under `variant`.
pub fn sample_config(base: &GeneratorConfig, variant: Variant, index: usize) -> (Variant, GeneratorConfig) {
    let part = match variant {
        Variant::Combined => combined_part(index, base.dataset.samples),
        other => other,
    };
    let mut rng = substream(base.dataset.seed, &[index as u64, STREAM_SWEEP]);
    (part, part.resolve(base, &mut rng))
}

/// Generates sample `index` of a dataset, retrying failed draws.
pub fn generate_indexed(base: &GeneratorConfig, variant: Variant, index: usize) -> Result<(Array2<f64>, SampleRecord)> {
    let (part, cfg) = sample_config(base, variant, index);
    let mut last_err = None;
    for attempt in 0..=MAX_RETRIES {
        let seed = sample_seed(base.dataset.seed, index, attempt);
        match generate_sample(&cfg, seed) {
            Ok(sample) => {
                let record = SampleRecord {
                    index,
                    seed,
                    attempt,
                    variant: part,
                    rho: cfg.drift.rho,
                    max_lag: cfg.lag.max_lag,
                    states: (cfg.regime.mode == RegimeMode::Hmm).then_some(cfg.regime.states),
                    latent_count: sample.latents.count(),
                    kernels: sample.kernels,
                };
                return Ok((sample.series, record));
            }
            Err(e @ Error::InvalidArgument(_)) => return Err(e),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt ran"))
}

const CHUNK: usize = 16;

/// Generates every sample in index order, handing each to `sink`. Samples
/// within a chunk are generated in parallel when the `parallel` feature is on.
pub fn for_each_sample<F>(base: &GeneratorConfig, variant: Variant, mut sink: F) -> Result<()>
where
    F: FnMut(usize, Array2<f64>, SampleRecord) -> Result<()>,
{
    base.validate()?;
    let total = base.dataset.samples;
    let mut start = 0;
    while start < total {
        let end = (start + CHUNK).min(total);
        let batch = generate_range(base, variant, start..end);
        for (index, result) in (start..end).zip(batch) {
            let (series, record) = result?;
            sink(index, series, record)?;
        }
        start = end;
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn generate_range(
    base: &GeneratorConfig,
    variant: Variant,
    range: std::ops::Range<usize>,
) -> Vec<Result<(Array2<f64>, SampleRecord)>> {
    use rayon::prelude::*;
    range.into_par_iter().map(|i| generate_indexed(base, variant, i)).collect()
}

#[cfg(not(feature = "parallel"))]
fn generate_range(
    base: &GeneratorConfig,
    variant: Variant,
    range: std::ops::Range<usize>,
) -> Vec<Result<(Array2<f64>, SampleRecord)>> {
    range.map(|i| generate_indexed(base, variant, i)).collect()
}

/// Generates a whole dataset in memory.
pub fn generate_dataset(config: &GeneratorConfig) -> Result<SeriesTensor> {
    generate_variant(config, Variant::Config)
}

pub fn generate_variant(config: &GeneratorConfig, variant: Variant) -> Result<SeriesTensor> {
    let d = &config.dataset;
    let mut data = Array3::zeros((d.samples, d.channels, d.length));
    let mut records = Vec::with_capacity(d.samples);
    for_each_sample(config, variant, |index, series, record| {
        data.index_axis_mut(Axis(0), index).assign(&series);
        records.push(record);
        Ok(())
    })?;
    Ok(SeriesTensor {
        data,
        provenance: Some(Provenance {
            variant,
            config: config.clone(),
            samples: records,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_synth::{BaseKernel, KernelSpec};

    fn small_config() -> GeneratorConfig {
        let mut c = GeneratorConfig::default();
        c.dataset.samples = 3;
        c.dataset.channels = 6;
        c.dataset.length = 64;
        c
    }

    #[test]
    fn latent_count_clamps() {
        assert_eq!(latent_count_from_draw(10.7, 5, 2), 5);
        assert_eq!(latent_count_from_draw(0.3, 160, 2), 2);
        assert_eq!(latent_count_from_draw(7.4, 160, 2), 8);
        assert_eq!(latent_count_from_draw(f64::INFINITY, 160, 2), 160);
        let mut rng = substream(0, &[]);
        assert!(sample_latent_count(3, 1.5, 6.0, 4, &mut rng).is_err());
        for _ in 0..1000 {
            let l = sample_latent_count(10, 1.5, 6.0, 2, &mut rng).unwrap();
            assert!((2..=10).contains(&l));
        }
    }

    #[test]
    fn ar1_contracts() {
        let mut rng = substream(1, &[]);
        assert!(ar1_path(10, 0.0, 0.0, &mut rng).unwrap().iter().all(|&v| v == 0.0));
        assert!(ar1_path(10, 1.0, 0.1, &mut rng).is_err());
        assert!(ar1_path(10, -1.2, 0.1, &mut rng).is_err());
        assert!(ar1_path(10, 0.5, -0.1, &mut rng).is_err());

        // Stationary variance sigma^2 / (1 - rho^2) = 0.01 / 0.19.
        let path = ar1_path(200_000, 0.9, 0.1, &mut rng).unwrap();
        let (_, var) = crate::kernel_synth::mean_var(&path);
        assert!((var / (0.01 / 0.19) - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn softmax_examples() {
        let w = softmax_rows(&Array3::zeros((1, 3, 1))).unwrap();
        for j in 0..3 {
            assert!((w.as_array()[[0, j, 0]] - 1.0 / 3.0).abs() < 1e-15);
        }
        let logits = Array3::from_shape_vec((1, 2, 1), vec![2f64.ln(), 0.0]).unwrap();
        let w = softmax_rows(&logits).unwrap();
        assert!((w.as_array()[[0, 0, 0]] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w.as_array()[[0, 1, 0]] - 1.0 / 3.0).abs() < 1e-15);

        let shifted = logits.mapv(|v| v + 123.0);
        let ws = softmax_rows(&shifted).unwrap();
        for (a, b) in w.as_array().iter().zip(ws.as_array()) {
            assert!((a - b).abs() < 1e-15);
        }
        let bad = Array3::from_elem((1, 2, 1), f64::NAN);
        assert!(matches!(softmax_rows(&bad), Err(Error::Numeric { .. })));
    }

    #[test]
    fn softmax_survives_large_logits() {
        let logits = Array3::from_shape_vec((1, 2, 1), vec![1000.0, 999.0]).unwrap();
        let w = softmax_rows(&logits).unwrap();
        assert!(w.max_simplex_error() < 1e-12);
    }

    #[test]
    fn regime_edge_cases() {
        let mut rng = substream(2, &[]);
        let constant = sample_regime_sequence(500, 3, 1.0, 2, 2, &mut rng).unwrap();
        assert!(constant.states.iter().all(|&s| s == constant.states[0]));

        let alternating = sample_regime_sequence(500, 2, 0.0, 2, 2, &mut rng).unwrap();
        assert!(alternating.states.windows(2).all(|w| w[0] != w[1]));
        assert!(alternating.states.iter().all(|&s| s < 2));

        assert!(sample_regime_sequence(10, 1, 0.9, 2, 2, &mut rng).is_err());
    }

    #[test]
    fn lag_matrix_bounds() {
        let mut rng = substream(3, &[]);
        assert!(sample_lag_matrix(5, 4, 0, &mut rng).as_array().iter().all(|&v| v == 0));
        let lags = sample_lag_matrix(50, 50, 8, &mut rng);
        assert!(lags.as_array().iter().all(|&v| (-8..=8).contains(&v)));
        assert_eq!(lags.max_abs(), 8);
    }

    fn ramp_latent(len: usize, pad: usize) -> LatentSeries {
        LatentSeries::new((0..len + 2 * pad).map(|t| (t as f64 * 0.37).sin()).collect(), pad).unwrap()
    }

    #[test]
    fn single_latent_shift() {
        let bank = LatentBank::new(vec![ramp_latent(50, 4)]).unwrap();
        let weights = WeightTensor::broadcast(Array2::ones((1, 1)).view(), 50);
        let lags = LagMatrix::new(Array2::from_elem((1, 1), 3));
        let out = generate_series(&bank, &weights, &lags).unwrap();
        let latent = &bank.latents()[0];
        for t in 0..50 {
            assert_eq!(out[[0, t]], latent.values()[4 + t - 3]);
        }
        let too_far = LagMatrix::new(Array2::from_elem((1, 1), 5));
        assert!(generate_series(&bank, &weights, &too_far).is_err());
    }

    #[test]
    fn zero_latents_give_zero_output() {
        let zero = LatentSeries::new(vec![0.0; 40], 0).unwrap();
        let bank = LatentBank::new(vec![zero.clone(), zero]).unwrap();
        let weights = WeightTensor::broadcast(Array2::from_elem((3, 2), 0.5).view(), 40);
        let out = generate_series(&bank, &weights, &LagMatrix::zeros(3, 2)).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn static_lmc_reductions() {
        let bank = LatentBank::new((0..3).map(|k| {
            LatentSeries::new((0..30).map(|t| ((t * (k + 1)) as f64).cos()).collect(), 0).unwrap()
        }).collect()).unwrap();
        let eye = Array2::<f64>::eye(3);
        let out = generate_static_lmc(&bank, eye.view()).unwrap();
        for (j, latent) in bank.latents().iter().enumerate() {
            assert_eq!(out.row(j).to_vec(), latent.core().to_vec());
        }

        let one = LatentBank::new(vec![bank.latents()[0].clone()]).unwrap();
        let same = generate_static_lmc(&one, Array2::ones((4, 1)).view()).unwrap();
        for i in 1..4 {
            assert_eq!(same.row(i), same.row(0));
        }

        let w = Array2::from_shape_vec((2, 3), vec![0.2, 0.3, 0.5, 0.6, 0.1, 0.3]).unwrap();
        let a = generate_static_lmc(&bank, w.view()).unwrap();
        let b = generate_series(&bank, &WeightTensor::broadcast(w.view(), 30), &LagMatrix::zeros(2, 3)).unwrap();
        assert_eq!(a, b);
        assert!(generate_static_lmc(&bank, Array2::ones((2, 2)).view()).is_err());
    }

    #[test]
    fn zero_drift_gives_constant_weights() {
        let mut c = small_config();
        c.drift.sigma = 0.0;
        let (w, _) = build_weight_tensor(&c, 3, &mut substream(4, &[])).unwrap();
        let a = w.as_array();
        for ((i, j, t), v) in a.indexed_iter() {
            assert_eq!(*v, a[[i, j, 0]], "t={t}");
        }

        c.regime.mode = RegimeMode::Hmm;
        c.regime.stickiness = 1.0;
        let (w, reg) = build_weight_tensor(&c, 3, &mut substream(5, &[])).unwrap();
        assert!(reg.is_some());
        let a = w.as_array();
        assert!(a.indexed_iter().all(|((i, j, _), v)| *v == a[[i, j, 0]]));
    }

    #[test]
    fn frozen_drift_is_static() {
        let mut c = small_config();
        c.drift.frozen = true;
        let (w, _) = build_weight_tensor(&c, 4, &mut substream(6, &[])).unwrap();
        let a = w.as_array();
        assert!(a.indexed_iter().all(|((i, j, _), v)| *v == a[[i, j, 0]]));
        assert!(a.iter().any(|&v| (v - 0.25).abs() > 1e-3));
    }

    #[test]
    fn weights_are_on_the_simplex() {
        for mode in [RegimeMode::None, RegimeMode::Hmm] {
            for blend in [RegimeBlend::Additive, RegimeBlend::Convex] {
                let mut c = small_config();
                c.regime.mode = mode;
                c.regime.blend = blend;
                let (w, _) = build_weight_tensor(&c, 5, &mut substream(7, &[])).unwrap();
                assert!(w.max_simplex_error() < 1e-12);
                assert!(w.as_array().iter().all(|&v| v > 0.0 && v < 1.0));
            }
        }
    }

    #[test]
    fn single_channel_reproduces_its_latent() {
        let mut c = small_config();
        c.dataset.samples = 1;
        c.dataset.channels = 1;
        c.latents.min_count = 1;
        c.lag.max_lag = 0;
        c.drift.sigma = 0.0;
        let sample = generate_sample(&c, 99).unwrap();
        assert_eq!(sample.latents.count(), 1);
        assert_eq!(sample.series.row(0).to_vec(), sample.latents.latents()[0].core().to_vec());
    }

    #[test]
    fn dataset_is_deterministic_and_shaped() {
        let c = small_config();
        let a = generate_dataset(&c).unwrap();
        let b = generate_dataset(&c).unwrap();
        assert_eq!(a.data.dim(), (3, 6, 64));
        assert_eq!(a, b);
        assert!(a.data.iter().all(|v| v.is_finite()));
        let mut other = c.clone();
        other.dataset.seed = 1;
        assert_ne!(generate_dataset(&other).unwrap().data, a.data);
    }

    #[test]
    fn combined_variant_splits_in_thirds() {
        let mut c = small_config();
        c.dataset.samples = 10;
        let parts: Vec<_> = (0..10).map(|i| sample_config(&c, Variant::Combined, i).0).collect();
        let count = |v| parts.iter().filter(|&&p| p == v).count();
        assert_eq!((count(Variant::Drift), count(Variant::Lag), count(Variant::Regime)), (4, 3, 3));
    }

    #[test]
    fn latent_bank_rejects_mismatch() {
        assert!(LatentBank::new(vec![]).is_err());
        let a = LatentSeries::new(vec![0.0; 10], 1).unwrap();
        let b = LatentSeries::new(vec![0.0; 10], 2).unwrap();
        assert!(LatentBank::new(vec![a, b]).is_err());
        let spec = KernelSpec::single(BaseKernel::Rbf { lengthscale: 3.0 }).unwrap();
        assert_eq!(spec.terms().len(), 1);
    }
}
