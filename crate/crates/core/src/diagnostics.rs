//! Correlation-drift and lead-lag fingerprints of multichannel series.
//!
//! Two statistics summarise how inter-channel structure behaves over time:
//!
//! - correlation drift: Pearson matrices over sliding windows, and the mean
//!   absolute change of their off-diagonal entries between consecutive windows;
//! - argmax-lag distribution: for every ordered channel pair, the lag that
//!   maximises the absolute normalized cross-correlation.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 96;
pub const DEFAULT_STRIDE: usize = 48;
pub const DEFAULT_MAX_LAG: usize = 16;
pub const MIN_WINDOW: usize = 8;

/// Pearson correlation matrix of one window; `defined[i][k]` is false when
/// either channel is constant inside the window.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationWindow {
    pub start: usize,
    pub values: Array2<f64>,
    pub defined: Array2<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationPath {
    pub window: usize,
    pub stride: usize,
    pub windows: Vec<CorrelationWindow>,
}

/// Centers and scales `x` to unit norm; `None` when `x` is constant.
fn unit_deviations(x: impl ExactSizeIterator<Item = f64> + Clone) -> Option<Vec<f64>> {
    let n = x.len() as f64;
    let mean = x.clone().sum::<f64>() / n;
    let dev: Vec<f64> = x.map(|v| v - mean).collect();
    let norm = dev.iter().map(|d| d * d).sum::<f64>().sqrt();
    if !(norm > 1e-12 * (1.0 + mean.abs()) * n.sqrt()) {
        return None;
    }
    Some(dev.into_iter().map(|d| d / norm).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pearson correlation, `None` if either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let a = unit_deviations(x.iter().copied())?;
    let b = unit_deviations(y.iter().copied())?;
    Some(dot(&a, &b).clamp(-1.0, 1.0))
}

/// Correlation matrices over windows `[k * stride, k * stride + window)`.
pub fn rolling_correlation(series: ArrayView2<f64>, window: usize, stride: usize) -> Result<CorrelationPath> {
    let (n, len) = series.dim();
    if window < MIN_WINDOW {
        return Err(Error::invalid(format!("window must be at least {MIN_WINDOW}, got {window}")));
    }
    if window > len {
        return Err(Error::invalid(format!("window {window} exceeds series length {len}")));
    }
    if stride == 0 {
        return Err(Error::invalid("stride must be at least 1"));
    }
    let mut windows = Vec::new();
    let mut start = 0;
    while start + window <= len {
        let normalized: Vec<Option<Vec<f64>>> = (0..n)
            .map(|i| unit_deviations(series.row(i).iter().skip(start).take(window).copied()))
            .collect();
        let mut values = Array2::zeros((n, n));
        let mut defined = Array2::from_elem((n, n), false);
        for i in 0..n {
            let Some(a) = &normalized[i] else { continue };
            values[[i, i]] = 1.0;
            defined[[i, i]] = true;
            for k in 0..i {
                if let Some(b) = &normalized[k] {
                    let r = dot(a, b).clamp(-1.0, 1.0);
                    values[[i, k]] = r;
                    values[[k, i]] = r;
                    defined[[i, k]] = true;
                    defined[[k, i]] = true;
                }
            }
        }
        windows.push(CorrelationWindow { start, values, defined });
        start += stride;
    }
    Ok(CorrelationPath { window, stride, windows })
}

/// Mean over consecutive window pairs of the mean absolute change in the
/// off-diagonal correlations defined in both windows.
pub fn correlation_drift(path: &CorrelationPath) -> Result<f64> {
    if path.windows.len() < 2 {
        return Err(Error::invalid(format!(
            "correlation drift needs at least 2 windows, got {}",
            path.windows.len()
        )));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for w in path.windows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let n = a.values.nrows();
        let (mut sum, mut count) = (0.0, 0usize);
        for i in 0..n {
            for k in 0..i {
                if a.defined[[i, k]] && b.defined[[i, k]] {
                    sum += (a.values[[i, k]] - b.values[[i, k]]).abs();
                    count += 1;
                }
            }
        }
        if count > 0 {
            total += sum / count as f64;
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(Error::Degenerate("no correlation entry is defined in consecutive windows".into()));
    }
    Ok(total / pairs as f64)
}

/// Normalized cross-correlation at lags `-max_lag..=max_lag` (index
/// `lag + max_lag`). A positive lag means `x` leads `y`: the value at lag `l`
/// correlates `x(t - l)` with `y(t)` over the overlap.
pub fn cross_correlation(x: &[f64], y: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let len = x.len();
    if y.len() != len {
        return Err(Error::invalid(format!("series lengths differ: {} vs {}", len, y.len())));
    }
    if 2 * max_lag >= len {
        return Err(Error::invalid(format!("max lag {max_lag} must be below half the length {len}")));
    }
    if unit_deviations(x.iter().copied()).is_none() || unit_deviations(y.iter().copied()).is_none() {
        return Err(Error::Degenerate("cross-correlation of a constant series".into()));
    }
    let m = max_lag as i64;
    Ok((-m..=m)
        .map(|lag| {
            let shift = lag.unsigned_abs() as usize;
            let (xs, ys) = if lag >= 0 {
                (&x[..len - shift], &y[shift..])
            } else {
                (&x[shift..], &y[..len - shift])
            };
            pearson(xs, ys).unwrap_or(0.0)
        })
        .collect())
}

/// Lag with the largest `|ccf|`; ties go to the smaller `|lag|`, then to the
/// negative lag.
pub fn argmax_lag(ccf: &[f64], max_lag: usize) -> (i64, f64) {
    let at = |lag: i64| ccf[(lag + max_lag as i64) as usize];
    let mut best = (0, at(0));
    for step in 1..=max_lag as i64 {
        for lag in [-step, step] {
            if at(lag).abs() > best.1.abs() {
                best = (lag, at(lag));
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairLag {
    pub from: usize,
    pub to: usize,
    pub lag: i64,
    pub value: f64,
}

/// Argmax lags of every ordered channel pair, binned over `-max_lag..=max_lag`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagHistogram {
    pub max_lag: usize,
    pub counts: Vec<u64>,
    pub skipped: u64,
    pub pairs: Vec<PairLag>,
}

impl LagHistogram {
    pub fn empty(max_lag: usize) -> Self {
        Self {
            max_lag,
            counts: vec![0; 2 * max_lag + 1],
            skipped: 0,
            pairs: Vec::new(),
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn count_at(&self, lag: i64) -> u64 {
        self.counts[(lag + self.max_lag as i64) as usize]
    }

    /// Fraction of evaluated pairs whose argmax lag is not zero.
    pub fn nonzero_fraction(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (total - self.count_at(0)) as f64 / total as f64
    }

    pub fn merge(&mut self, other: &LagHistogram) {
        assert_eq!(self.max_lag, other.max_lag, "histograms over different lag ranges");
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        self.skipped += other.skipped;
    }

    pub fn lags(&self) -> impl Iterator<Item = i64> {
        let m = self.max_lag as i64;
        -m..=m
    }
}

pub fn argmax_lag_distribution(series: ArrayView2<f64>, max_lag: usize) -> Result<LagHistogram> {
    let (n, len) = series.dim();
    if n < 2 {
        return Err(Error::invalid(format!("lag distribution needs at least 2 channels, got {n}")));
    }
    if 2 * max_lag >= len {
        return Err(Error::invalid(format!("max lag {max_lag} must be below half the length {len}")));
    }
    let rows: Vec<Vec<f64>> = series.axis_iter(Axis(0)).map(|r| r.to_vec()).collect();
    let mut hist = LagHistogram::empty(max_lag);
    for from in 0..n {
        for to in 0..n {
            if from == to {
                continue;
            }
            match cross_correlation(&rows[from], &rows[to], max_lag) {
                Ok(ccf) => {
                    let (lag, value) = argmax_lag(&ccf, max_lag);
                    hist.counts[(lag + max_lag as i64) as usize] += 1;
                    hist.pairs.push(PairLag { from, to, lag, value });
                }
                Err(Error::Degenerate(_)) => hist.skipped += 1,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(hist)
}

/// Settings for a whole-dataset diagnostics pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsOptions {
    pub window: usize,
    pub stride: usize,
    pub max_lag: usize,
    pub max_samples: Option<usize>,
    pub max_channels: Option<usize>,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            stride: DEFAULT_STRIDE,
            max_lag: DEFAULT_MAX_LAG,
            max_samples: None,
            max_channels: None,
        }
    }
}

/// Machine-readable summary written by the `diagnose` and `generate` commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub samples_evaluated: usize,
    pub channels_evaluated: usize,
    pub length: usize,
    pub window: usize,
    pub stride: usize,
    pub max_lag: usize,
    pub drift_mean: f64,
    pub drift_undefined_samples: usize,
    pub nonzero_lag_fraction: f64,
    pub pairs_evaluated: u64,
    pub pairs_skipped: u64,
    pub drift_per_sample: Vec<f64>,
    pub lag_values: Vec<i64>,
    pub lag_counts: Vec<u64>,
}

impl DiagnosticsReport {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("report serializes to toml")
    }
}

/// Accumulates per-sample diagnostics into a [`DiagnosticsReport`].
#[derive(Debug, Clone)]
pub struct DiagnosticsAccumulator {
    options: DiagnosticsOptions,
    channels: usize,
    length: usize,
    drifts: Vec<f64>,
    undefined: usize,
    hist: LagHistogram,
    pairs: Vec<(usize, PairLag)>,
}

impl DiagnosticsAccumulator {
    pub fn new(options: DiagnosticsOptions) -> Self {
        let hist = LagHistogram::empty(options.max_lag);
        Self {
            options,
            channels: 0,
            length: 0,
            drifts: Vec::new(),
            undefined: 0,
            hist,
            pairs: Vec::new(),
        }
    }

    pub fn wants_more(&self) -> bool {
        self.options.max_samples.is_none_or(|m| self.samples() < m)
    }

    pub fn samples(&self) -> usize {
        self.drifts.len() + self.undefined
    }

    pub fn push(&mut self, sample: ArrayView2<f64>) -> Result<()> {
        let keep = self.options.max_channels.map_or(sample.nrows(), |m| m.min(sample.nrows()));
        let view = sample.slice(ndarray::s![..keep, ..]);
        let index = self.samples();
        self.channels = keep;
        self.length = view.ncols();
        let path = rolling_correlation(view, self.options.window, self.options.stride)?;
        match correlation_drift(&path) {
            Ok(d) => self.drifts.push(d),
            Err(Error::Degenerate(_)) | Err(Error::InvalidArgument(_)) => self.undefined += 1,
            Err(e) => return Err(e),
        }
        let hist = argmax_lag_distribution(view, self.options.max_lag)?;
        self.hist.merge(&hist);
        self.pairs.extend(hist.pairs.into_iter().map(|p| (index, p)));
        Ok(())
    }

    /// Per-pair rows for the optional CSV: `(sample, pair)`.
    pub fn pairs(&self) -> &[(usize, PairLag)] {
        &self.pairs
    }

    pub fn report(&self) -> DiagnosticsReport {
        let drift_mean = if self.drifts.is_empty() {
            0.0
        } else {
            self.drifts.iter().sum::<f64>() / self.drifts.len() as f64
        };
        DiagnosticsReport {
            samples_evaluated: self.samples(),
            channels_evaluated: self.channels,
            length: self.length,
            window: self.options.window,
            stride: self.options.stride,
            max_lag: self.options.max_lag,
            drift_mean,
            drift_undefined_samples: self.undefined,
            nonzero_lag_fraction: self.hist.nonzero_fraction(),
            pairs_evaluated: self.hist.total(),
            pairs_skipped: self.hist.skipped,
            drift_per_sample: self.drifts.clone(),
            lag_values: self.hist.lags().collect(),
            lag_counts: self.hist.counts.clone(),
        }
    }
}
