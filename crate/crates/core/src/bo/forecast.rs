use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::external::{run_external, ExternalCommand};
use crate::error::{Error, Result};
use crate::mixing::WindowPair;

pub const DEFAULT_RIDGE_ORDER: usize = 24;
pub const DEFAULT_RIDGE_PENALTY: f64 = 1e-2;
pub const DEFAULT_SEASON: usize = 24;

/// Forecaster used inside the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ForecasterSpec {
    NaiveMean,
    NaiveLast,
    SeasonalNaive { season: usize },
    RidgeAr { order: usize, penalty: f64 },
    External(ExternalCommand),
}

impl Default for ForecasterSpec {
    fn default() -> Self {
        ForecasterSpec::RidgeAr {
            order: DEFAULT_RIDGE_ORDER,
            penalty: DEFAULT_RIDGE_PENALTY,
        }
    }
}

impl ForecasterSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ForecasterSpec::SeasonalNaive { season: 0 } => Err(Error::invalid("season must be at least 1")),
            ForecasterSpec::RidgeAr { order: 0, .. } => Err(Error::invalid("AR order must be at least 1")),
            ForecasterSpec::RidgeAr { penalty, .. } if !(penalty >= 0.0 && penalty.is_finite()) => {
                Err(Error::invalid(format!("ridge penalty must be finite and >= 0, got {penalty}")))
            }
            _ => Ok(()),
        }
    }

    /// Shortest context the forecaster accepts.
    pub fn min_context(&self) -> usize {
        match *self {
            ForecasterSpec::SeasonalNaive { season } => season.max(1),
            ForecasterSpec::RidgeAr { order, .. } => order.max(1),
            _ => 1,
        }
    }

    /// Whether the forecaster learns from training windows.
    pub fn needs_training(&self) -> bool {
        matches!(self, ForecasterSpec::RidgeAr { .. } | ForecasterSpec::External(_))
    }
}

impl fmt::Display for ForecasterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForecasterSpec::NaiveMean => f.write_str("naive_mean"),
            ForecasterSpec::NaiveLast => f.write_str("naive_last"),
            ForecasterSpec::SeasonalNaive { season } => write!(f, "seasonal_naive:{season}"),
            ForecasterSpec::RidgeAr { order, penalty } => write!(f, "ridge_ar:{order}:{penalty}"),
            ForecasterSpec::External(cmd) => write!(f, "external:{cmd}"),
        }
    }
}

impl FromStr for ForecasterSpec {
    type Err = Error;

    /// `naive_mean`, `naive_last`, `seasonal_naive[:s]`, `ridge_ar[:p[:lambda]]`
    /// or `external:<command>`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let bad = |what: &str| Error::invalid(format!("bad {what} in forecaster '{s}'"));
        let spec = match kind.trim() {
            "naive_mean" if rest.is_empty() => ForecasterSpec::NaiveMean,
            "naive_last" if rest.is_empty() => ForecasterSpec::NaiveLast,
            "seasonal_naive" => ForecasterSpec::SeasonalNaive {
                season: if rest.is_empty() {
                    DEFAULT_SEASON
                } else {
                    rest.parse().map_err(|_| bad("season"))?
                },
            },
            "ridge_ar" => {
                let mut parts = rest.split(':').filter(|p| !p.is_empty());
                let order = parts
                    .next()
                    .map(|p| p.parse().map_err(|_| bad("order")))
                    .transpose()?
                    .unwrap_or(DEFAULT_RIDGE_ORDER);
                let penalty = parts
                    .next()
                    .map(|p| p.parse().map_err(|_| bad("penalty")))
                    .transpose()?
                    .unwrap_or(DEFAULT_RIDGE_PENALTY);
                if parts.next().is_some() {
                    return Err(bad("argument count"));
                }
                ForecasterSpec::RidgeAr { order, penalty }
            }
            "external" => ForecasterSpec::External(rest.parse()?),
            _ => return Err(Error::invalid(format!("unknown forecaster '{s}'"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl TryFrom<String> for ForecasterSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ForecasterSpec> for String {
    fn from(f: ForecasterSpec) -> Self {
        f.to_string()
    }
}

fn check_context(spec: &ForecasterSpec, context: ArrayView2<f64>) -> Result<()> {
    if context.ncols() < spec.min_context() {
        return Err(Error::invalid(format!(
            "forecaster {spec} needs a context of at least {} steps, got {}",
            spec.min_context(),
            context.ncols()
        )));
    }
    Ok(())
}

fn naive(spec: &ForecasterSpec, context: ArrayView2<f64>, horizon: usize) -> Array2<f64> {
    let len = context.ncols();
    match *spec {
        ForecasterSpec::NaiveMean => {
            let means = context.mean_axis(Axis(1)).expect("non-empty context");
            Array2::from_shape_fn((context.nrows(), horizon), |(c, _)| means[c])
        }
        ForecasterSpec::NaiveLast => Array2::from_shape_fn((context.nrows(), horizon), |(c, _)| context[[c, len - 1]]),
        ForecasterSpec::SeasonalNaive { season } => {
            Array2::from_shape_fn((context.nrows(), horizon), |(c, t)| context[[c, len - season + t % season]])
        }
        _ => unreachable!("not a naive forecaster"),
    }
}

/// Forecast from one context. Ridge AR fits on the context itself.
pub fn forecast(spec: &ForecasterSpec, context: ArrayView2<f64>, horizon: usize) -> Result<Array2<f64>> {
    spec.validate()?;
    check_context(spec, context)?;
    match spec {
        ForecasterSpec::RidgeAr { order, penalty } => {
            let rows: Vec<_> = context.rows().into_iter().collect();
            let model = RidgeAr::fit_series(&rows, *order, *penalty, usize::MAX)?;
            Ok(model.predict(context, horizon))
        }
        ForecasterSpec::External(cmd) => {
            let ctx = [context.to_owned()];
            Ok(run_external(cmd, &[], &ctx, horizon)?.remove(0))
        }
        _ => Ok(naive(spec, context, horizon)),
    }
}

/// Trains on `train` (ridge AR and external kinds) and forecasts every
/// context. `train_budget` caps the number of regression rows.
pub fn predict_all(
    spec: &ForecasterSpec,
    train: &[WindowPair],
    contexts: &[Array2<f64>],
    horizon: usize,
    train_budget: usize,
) -> Result<Vec<Array2<f64>>> {
    spec.validate()?;
    for c in contexts {
        check_context(spec, c.view())?;
    }
    match spec {
        ForecasterSpec::RidgeAr { order, penalty } => {
            let model = RidgeAr::fit_windows(train, *order, *penalty, train_budget)?;
            Ok(contexts.iter().map(|c| model.predict(c.view(), horizon)).collect())
        }
        ForecasterSpec::External(cmd) => run_external(cmd, train, contexts, horizon),
        _ => Ok(contexts.iter().map(|c| naive(spec, c.view(), horizon)).collect()),
    }
}

/// Mean absolute error over all entries of all windows.
pub fn mean_absolute_error(predicted: &[Array2<f64>], truth: &[Array2<f64>]) -> Result<f64> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::invalid(format!(
            "{} forecasts for {} targets",
            predicted.len(),
            truth.len()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (k, (p, t)) in predicted.iter().zip(truth).enumerate() {
        if p.dim() != t.dim() {
            return Err(Error::invalid(format!(
                "forecast {k} has shape {:?}, target {:?}",
                p.dim(),
                t.dim()
            )));
        }
        total += p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>();
        count += t.len();
    }
    let mae = total / count.max(1) as f64;
    if !mae.is_finite() {
        return Err(Error::numeric("mean_absolute_error", "loss is not finite"));
    }
    Ok(mae)
}

/// Univariate AR(p) with intercept shared across channels, fitted by
/// penalized least squares on instance-normalized series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeAr {
    /// Coefficient on `x(t-1)` first.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

struct Scale {
    mean: f64,
    std: f64,
}

impl Scale {
    fn of(x: ArrayView1<f64>) -> Self {
        let n = x.len().max(1) as f64;
        let mean = x.sum() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        Scale {
            mean,
            std: if std > 1e-8 { std } else { 1.0 },
        }
    }
}

struct Normal {
    p: usize,
    ata: Vec<f64>,
    atb: Vec<f64>,
    rows: usize,
}

impl Normal {
    fn new(p: usize) -> Self {
        let d = p + 1;
        Normal {
            p,
            ata: vec![0.0; d * d],
            atb: vec![0.0; d],
            rows: 0,
        }
    }

    fn add(&mut self, z: &[f64], t: usize, feat: &mut [f64]) {
        let d = self.p + 1;
        feat[0] = 1.0;
        for k in 1..=self.p {
            feat[k] = z[t - k];
        }
        for i in 0..d {
            let fi = feat[i];
            self.atb[i] += fi * z[t];
            for j in i..d {
                self.ata[i * d + j] += fi * feat[j];
            }
        }
        self.rows += 1;
    }

    fn solve(mut self, penalty: f64) -> Result<RidgeAr> {
        if self.rows == 0 {
            return Err(Error::invalid("no training rows for the AR fit"));
        }
        let d = self.p + 1;
        for i in 0..d {
            for j in 0..i {
                self.ata[i * d + j] = self.ata[j * d + i];
            }
            if i > 0 {
                self.ata[i * d + i] += penalty;
            }
        }
        let beta = solve_linear(self.ata, self.atb, d)?;
        Ok(RidgeAr {
            intercept: beta[0],
            coefficients: beta[1..].to_vec(),
        })
    }
}

/// Gaussian elimination with partial pivoting on a dense `d×d` system.
fn solve_linear(mut a: Vec<f64>, mut b: Vec<f64>, d: usize) -> Result<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&i, &j| a[i * d + col].abs().total_cmp(&a[j * d + col].abs()))
            .expect("non-empty range");
        if a[pivot * d + col].abs() <= 1e-12 * scale {
            return Err(Error::numeric("ridge_ar", "normal equations are singular"));
        }
        if pivot != col {
            for k in 0..d {
                a.swap(pivot * d + k, col * d + k);
            }
            b.swap(pivot, col);
        }
        for row in col + 1..d {
            let f = a[row * d + col] / a[col * d + col];
            if f != 0.0 {
                for k in col..d {
                    a[row * d + k] -= f * a[col * d + k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; d];
    for row in (0..d).rev() {
        let s: f64 = (row + 1..d).map(|k| a[row * d + k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row * d + row];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("ridge_ar", "solution is not finite"));
    }
    Ok(x)
}

impl RidgeAr {
    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// Fits on whole series, each normalized by its own mean and deviation.
    pub fn fit_series(series: &[ArrayView1<f64>], order: usize, penalty: f64, budget: usize) -> Result<Self> {
        let items: Vec<_> = series.iter().map(|s| (*s, Scale::of(*s))).collect();
        Self::fit(&items, order, penalty, budget)
    }

    /// Fits on joined context and target rows, normalized by context
    /// statistics as at prediction time.
    pub fn fit_windows(train: &[WindowPair], order: usize, penalty: f64, budget: usize) -> Result<Self> {
        let joined: Vec<Array2<f64>> = train.iter().map(|w| w.joined()).collect();
        let mut items = Vec::new();
        for (w, j) in train.iter().zip(&joined) {
            for (row, ctx) in j.rows().into_iter().zip(w.context.rows()) {
                items.push((row, Scale::of(ctx)));
            }
        }
        Self::fit(&items, order, penalty, budget)
    }

    fn fit(items: &[(ArrayView1<f64>, Scale)], order: usize, penalty: f64, budget: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("AR order must be at least 1"));
        }
        let total: usize = items.iter().map(|(s, _)| s.len().saturating_sub(order)).sum();
        if total == 0 {
            return Err(Error::invalid(format!("no series longer than the AR order {order}")));
        }
        let step = total.div_ceil(budget.max(1));
        let mut normal = Normal::new(order);
        let mut feat = vec![0.0; order + 1];
        let mut z = Vec::new();
        let mut r = 0usize;
        for (series, scale) in items {
            z.clear();
            z.extend(series.iter().map(|v| (v - scale.mean) / scale.std));
            for t in order..z.len() {
                if r.is_multiple_of(step) {
                    normal.add(&z, t, &mut feat);
                }
                r += 1;
            }
        }
        normal.solve(penalty)
    }

    /// Iterated multi-step forecast of every channel.
    pub fn predict(&self, context: ArrayView2<f64>, horizon: usize) -> Array2<f64> {
        let p = self.order();
        let mut out = Array2::zeros((context.nrows(), horizon));
        let mut buf = Vec::with_capacity(context.ncols() + horizon);
        for (c, row) in context.rows().into_iter().enumerate() {
            let scale = Scale::of(row);
            buf.clear();
            buf.extend(row.iter().map(|v| (v - scale.mean) / scale.std));
            for h in 0..horizon {
                let t = buf.len();
                let next = self.intercept + (1..=p).map(|k| self.coefficients[k - 1] * buf[t - k]).sum::<f64>();
                buf.push(next);
                out[[c, h]] = next * scale.std + scale.mean;
            }
        }
        out
    }
}
