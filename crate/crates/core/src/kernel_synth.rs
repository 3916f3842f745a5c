//! Random Gaussian-process latents from composed covariance kernels.
//!
//! A [`KernelSpec`] is a left-to-right chain of base kernels joined by `+` or
//! `*`. Every base kernel except [`BaseKernel::Linear`] is stationary on the
//! integer grid, and the linear kernel is rank one, so any composed kernel
//! expands into a sum of components of the form
//!
//! ```text
//! scale * (x_s * x_t)^p * S(|s - t|)
//! ```
//!
//! with `S` a product of stationary kernels. [`sample_gp`] draws each
//! component independently as `sqrt(scale) * x_t^p * g(t)` where `g` is a
//! stationary Gaussian process sampled with the Levinson-Durbin recursion. The
//! sum has exactly the covariance returned by [`kernel_matrix`]. The dense
//! Cholesky route ([`sample_gp_dense`]) draws from the same distribution and
//! is kept for small grids and as a reference.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Candidate base periods for the periodic kernel, in grid steps. The series
/// length divided by four is appended at draw time.
pub const PERIOD_BANK: [f64; 4] = [24.0, 48.0, 96.0, 168.0];

/// One entry of the kernel bank with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseKernel {
    /// `slope * x_s * x_t` on the rescaled grid `x_t = t / n`.
    Linear { slope: f64 },
    Rbf { lengthscale: f64 },
    Periodic { period: f64, lengthscale: f64 },
    RationalQuadratic { alpha: f64, lengthscale: f64 },
    WhiteNoise { variance: f64 },
    Constant { value: f64 },
}

impl BaseKernel {
    pub const BANK_SIZE: usize = 6;

    pub fn id(&self) -> &'static str {
        match self {
            BaseKernel::Linear { .. } => "linear",
            BaseKernel::Rbf { .. } => "rbf",
            BaseKernel::Periodic { .. } => "periodic",
            BaseKernel::RationalQuadratic { .. } => "rational_quadratic",
            BaseKernel::WhiteNoise { .. } => "white_noise",
            BaseKernel::Constant { .. } => "constant",
        }
    }

    /// Draws a kernel uniformly from the bank with hyperparameters from their
    /// priors. `series_len` sets the upper end of the lengthscale ranges.
    pub fn sample<R: Rng + ?Sized>(series_len: usize, rng: &mut R) -> Self {
        let quarter = (series_len as f64 / 4.0).max(1.5);
        match rng.random_range(0..Self::BANK_SIZE) {
            0 => BaseKernel::Linear {
                slope: rng.random_range(0.1..1.0),
            },
            1 => BaseKernel::Rbf {
                lengthscale: rng.random_range(1.0..quarter),
            },
            2 => {
                let choice = rng.random_range(0..PERIOD_BANK.len() + 1);
                let base = PERIOD_BANK.get(choice).copied().unwrap_or(series_len as f64 / 4.0);
                let period = (base * rng.random_range(0.9..1.1)).max(1.0);
                BaseKernel::Periodic {
                    period,
                    lengthscale: rng.random_range(0.5..2.0),
                }
            }
            3 => BaseKernel::RationalQuadratic {
                alpha: rng.random_range(0.5..5.0),
                lengthscale: rng.random_range(1.0..quarter),
            },
            4 => BaseKernel::WhiteNoise {
                variance: rng.random_range(0.01..0.25),
            },
            _ => BaseKernel::Constant {
                value: rng.random_range(0.1..1.0),
            },
        }
    }

    fn hyperparameters(&self) -> Vec<(&'static str, f64)> {
        match *self {
            BaseKernel::Linear { slope } => vec![("slope", slope)],
            BaseKernel::Rbf { lengthscale } => vec![("lengthscale", lengthscale)],
            BaseKernel::Periodic { period, lengthscale } => {
                vec![("period", period), ("lengthscale", lengthscale)]
            }
            BaseKernel::RationalQuadratic { alpha, lengthscale } => {
                vec![("alpha", alpha), ("lengthscale", lengthscale)]
            }
            BaseKernel::WhiteNoise { variance } => vec![("variance", variance)],
            BaseKernel::Constant { value } => vec![("value", value)],
        }
    }

    pub fn is_stationary(&self) -> bool {
        !matches!(self, BaseKernel::Linear { .. })
    }

    /// Stationary profile at integer lag `lag`. Linear kernels have none.
    pub fn profile(&self, lag: usize) -> Option<f64> {
        let tau = lag as f64;
        Some(match *self {
            BaseKernel::Linear { .. } => return None,
            BaseKernel::Rbf { lengthscale } => libm::exp(-tau * tau / (2.0 * lengthscale * lengthscale)),
            BaseKernel::Periodic { period, lengthscale } => {
                let s = libm::sin(PI * tau / period);
                libm::exp(-2.0 * s * s / (lengthscale * lengthscale))
            }
            BaseKernel::RationalQuadratic { alpha, lengthscale } => {
                libm::pow(1.0 + tau * tau / (2.0 * alpha * lengthscale * lengthscale), -alpha)
            }
            BaseKernel::WhiteNoise { variance } => {
                if lag == 0 {
                    variance
                } else {
                    0.0
                }
            }
            BaseKernel::Constant { value } => value,
        })
    }

    /// `k(s, t)` on a grid of `n` points.
    pub fn eval(&self, s: usize, t: usize, n: usize) -> f64 {
        match *self {
            BaseKernel::Linear { slope } => slope * (s as f64 / n as f64) * (t as f64 / n as f64),
            _ => self.profile(s.abs_diff(t)).unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combinator {
    Add,
    Multiply,
}

/// A composed kernel: `terms[0] op[0] terms[1] op[1] ...`, evaluated left to right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    terms: Vec<BaseKernel>,
    combinators: Vec<Combinator>,
    max_terms: usize,
}

impl KernelSpec {
    pub fn new(terms: Vec<BaseKernel>, combinators: Vec<Combinator>, max_terms: usize) -> Result<Self> {
        if terms.is_empty() || terms.len() > max_terms {
            return Err(Error::invalid(format!(
                "kernel spec needs 1..={max_terms} terms, got {}",
                terms.len()
            )));
        }
        if combinators.len() + 1 != terms.len() {
            return Err(Error::invalid(format!(
                "{} terms need {} combinators, got {}",
                terms.len(),
                terms.len() - 1,
                combinators.len()
            )));
        }
        for term in &terms {
            for (name, value) in term.hyperparameters() {
                if !(value.is_finite() && value > 0.0) {
                    return Err(Error::invalid(format!(
                        "{} {name} must be finite and positive, got {value}",
                        term.id()
                    )));
                }
            }
        }
        Ok(Self {
            terms,
            combinators,
            max_terms,
        })
    }

    /// A spec holding exactly one kernel.
    pub fn single(kernel: BaseKernel) -> Result<Self> {
        Self::new(vec![kernel], Vec::new(), 1)
    }

    pub fn terms(&self) -> &[BaseKernel] {
        &self.terms
    }

    pub fn combinators(&self) -> &[Combinator] {
        &self.combinators
    }

    pub fn max_terms(&self) -> usize {
        self.max_terms
    }

    /// Composed kernel value at `(s, t)` on an `n`-point grid.
    pub fn eval(&self, s: usize, t: usize, n: usize) -> f64 {
        let mut acc = self.terms[0].eval(s, t, n);
        for (op, term) in self.combinators.iter().zip(&self.terms[1..]) {
            let k = term.eval(s, t, n);
            acc = match op {
                Combinator::Add => acc + k,
                Combinator::Multiply => acc * k,
            };
        }
        acc
    }

    /// Distributes the left-to-right chain into a sum of components.
    fn components(&self) -> Vec<Component> {
        let mut out = vec![Component::from_kernel(&self.terms[0])];
        for (op, term) in self.combinators.iter().zip(&self.terms[1..]) {
            match op {
                Combinator::Add => out.push(Component::from_kernel(term)),
                Combinator::Multiply => out.iter_mut().for_each(|c| c.multiply(term)),
            }
        }
        out
    }
}

/// Draws a random composition: term count uniform on `1..=max_terms`, each
/// term uniform over the bank, each combinator uniform over `{+, *}`.
pub fn sample_kernel_composition<R: Rng + ?Sized>(
    max_terms: usize,
    series_len: usize,
    rng: &mut R,
) -> Result<KernelSpec> {
    if max_terms == 0 {
        return Err(Error::invalid("max kernel terms must be at least 1"));
    }
    let count = rng.random_range(1..=max_terms);
    let mut terms = Vec::with_capacity(count);
    let mut combinators = Vec::with_capacity(count.saturating_sub(1));
    terms.push(BaseKernel::sample(series_len, rng));
    for _ in 1..count {
        combinators.push(if rng.random_bool(0.5) {
            Combinator::Add
        } else {
            Combinator::Multiply
        });
        terms.push(BaseKernel::sample(series_len, rng));
    }
    KernelSpec::new(terms, combinators, max_terms)
}

/// `scale * (x_s x_t)^linear_power * prod(stationary)(|s - t|)`.
#[derive(Debug, Clone)]
struct Component {
    scale: f64,
    linear_power: i32,
    stationary: Vec<BaseKernel>,
}

impl Component {
    fn from_kernel(kernel: &BaseKernel) -> Self {
        let mut c = Component {
            scale: 1.0,
            linear_power: 0,
            stationary: Vec::new(),
        };
        c.multiply(kernel);
        c
    }

    fn multiply(&mut self, kernel: &BaseKernel) {
        match *kernel {
            BaseKernel::Linear { slope } => {
                self.scale *= slope;
                self.linear_power += 1;
            }
            BaseKernel::Constant { value } => self.scale *= value,
            other => self.stationary.push(other),
        }
    }

    fn profile(&self, n: usize) -> Option<Vec<f64>> {
        if self.stationary.is_empty() {
            return None;
        }
        Some(
            (0..n)
                .map(|lag| {
                    self.stationary
                        .iter()
                        .map(|k| k.profile(lag).unwrap_or(1.0))
                        .product()
                })
                .collect(),
        )
    }
}

/// Dense symmetric covariance matrix of a composed kernel on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    values: Array2<f64>,
}

/// Relative jitter levels tried in order, as multiples of the mean diagonal.
pub const JITTER_LEVELS: [f64; 5] = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2];

impl CovMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn mean_diagonal(&self) -> f64 {
        self.values.diag().mean().unwrap_or(0.0)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..i).all(|j| (self.values[[i, j]] - self.values[[j, i]]).abs() <= tol))
    }

    /// Lower Cholesky factor of `K + jitter * I`, escalating the jitter through
    /// [`JITTER_LEVELS`]. Returns the factor and the absolute jitter used.
    pub fn cholesky(&self) -> Result<(Array2<f64>, f64)> {
        let n = self.dim();
        let base = self.mean_diagonal().abs().max(f64::MIN_POSITIVE);
        let a = self
            .values
            .as_slice()
            .expect("covariance matrices are stored in standard layout");
        let mut lower = vec![0.0; n * n];
        for rel in JITTER_LEVELS {
            let jitter = rel * base;
            if dense_cholesky(a, n, jitter, &mut lower) {
                let factor = Array2::from_shape_vec((n, n), lower).expect("n*n buffer");
                return Ok((factor, jitter));
            }
        }
        Err(Error::numeric(
            "cholesky",
            format!("matrix of size {n} not positive definite at maximum jitter"),
        ))
    }
}

fn dense_cholesky(a: &[f64], n: usize, jitter: f64, lower: &mut [f64]) -> bool {
    lower.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..n {
        for j in 0..=i {
            let (row_i, row_j) = (&lower[i * n..i * n + j], &lower[j * n..j * n + j]);
            let dot: f64 = row_i.iter().zip(row_j).map(|(x, y)| x * y).sum();
            let mut s = a[i * n + j] - dot;
            if i == j {
                s += jitter;
                if !(s > 0.0 && s.is_finite()) {
                    return false;
                }
                lower[i * n + i] = s.sqrt();
            } else {
                lower[i * n + j] = s / lower[j * n + j];
            }
        }
    }
    true
}

/// Evaluates the composed kernel on the grid `0..n`.
pub fn kernel_matrix(spec: &KernelSpec, n: usize) -> Result<CovMatrix> {
    if n < 2 {
        return Err(Error::invalid(format!("kernel grid needs at least 2 points, got {n}")));
    }
    for term in spec.terms() {
        for (s, t) in [(0, 0), (0, n - 1), (n - 1, n - 1)] {
            if !term.eval(s, t, n).is_finite() {
                return Err(Error::numeric(
                    format!("kernel term {}", term.id()),
                    "non-finite kernel value",
                ));
            }
        }
    }
    let mut values = Array2::zeros((n, n));
    for s in 0..n {
        for t in 0..=s {
            let k = spec.eval(s, t, n);
            if !k.is_finite() {
                let culprit = spec
                    .terms()
                    .iter()
                    .find(|term| !term.eval(s, t, n).is_finite())
                    .map_or("composition", |term| term.id());
                return Err(Error::numeric(format!("kernel term {culprit}"), "non-finite kernel value"));
            }
            values[[s, t]] = k;
            values[[t, s]] = k;
        }
    }
    Ok(CovMatrix { values })
}

/// A latent path with `pad` extra steps on each side of the core window.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSeries {
    values: Vec<f64>,
    pad: usize,
}

impl LatentSeries {
    pub fn new(values: Vec<f64>, pad: usize) -> Result<Self> {
        if values.len() <= 2 * pad {
            return Err(Error::invalid(format!(
                "latent of length {} cannot carry padding {pad} on both sides",
                values.len()
            )));
        }
        Ok(Self { values, pad })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    pub fn core_len(&self) -> usize {
        self.values.len() - 2 * self.pad
    }

    pub fn core(&self) -> &[f64] {
        &self.values[self.pad..self.values.len() - self.pad]
    }

    /// Value at core time `t - lag` (may reach into the padding).
    #[inline]
    pub fn shifted(&self, t: usize, lag: i64) -> f64 {
        self.values[(self.pad as i64 + t as i64 - lag) as usize]
    }
}

/// Draws one latent of core length `len` with `pad` steps on each side.
pub fn sample_gp<R: Rng + ?Sized>(
    spec: &KernelSpec,
    len: usize,
    pad: usize,
    standardize: bool,
    rng: &mut R,
) -> Result<LatentSeries> {
    if len < 2 {
        return Err(Error::invalid(format!("series length must be at least 2, got {len}")));
    }
    let n = len + 2 * pad;
    let mut values = vec![0.0; n];
    let mut g = vec![0.0; n];
    for component in spec.components() {
        match component.profile(n) {
            None => {
                let z: f64 = rng.sample(StandardNormal);
                g.iter_mut().for_each(|v| *v = z);
            }
            Some(r) => sample_stationary(&r, rng, &mut g)?,
        }
        let amplitude = component.scale.sqrt();
        for (t, (v, gt)) in values.iter_mut().zip(&g).enumerate() {
            let ramp = libm::pow(t as f64 / n as f64, component.linear_power as f64);
            *v += amplitude * ramp * gt;
        }
    }
    finish_latent(values, pad, standardize)
}

/// Reference sampler: dense Cholesky of [`kernel_matrix`] times a standard
/// normal vector. Cubic in the padded length.
pub fn sample_gp_dense<R: Rng + ?Sized>(
    spec: &KernelSpec,
    len: usize,
    pad: usize,
    standardize: bool,
    rng: &mut R,
) -> Result<LatentSeries> {
    let n = len + 2 * pad;
    let cov = kernel_matrix(spec, n)?;
    let (lower, _) = cov.cholesky()?;
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let values = (0..n)
        .map(|i| (0..=i).map(|j| lower[[i, j]] * z[j]).sum())
        .collect();
    finish_latent(values, pad, standardize)
}

fn finish_latent(mut values: Vec<f64>, pad: usize, standardize: bool) -> Result<LatentSeries> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("gp sampling", "non-finite latent value"));
    }
    if standardize {
        let core = &values[pad..values.len() - pad];
        let (mean, var) = mean_var(core);
        let std = var.sqrt();
        if std == 0.0 || std <= 1e-9 * mean.abs() {
            return Err(Error::Degenerate("latent has no variance over its core window".into()));
        }
        values.iter_mut().for_each(|v| *v = (*v - mean) / std);
    }
    LatentSeries::new(values, pad)
}

/// Population mean and variance.
pub(crate) fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Fills `out` with a zero-mean Gaussian path whose covariance is the
/// symmetric Toeplitz matrix of `r` plus jitter on the diagonal.
fn sample_stationary<R: Rng + ?Sized>(r: &[f64], rng: &mut R, out: &mut [f64]) -> Result<()> {
    debug_assert_eq!(r.len(), out.len());
    if r[1..].iter().all(|&v| v == 0.0) {
        let sd = r[0].sqrt();
        out.iter_mut().for_each(|v| *v = sd * rng.sample::<f64, _>(StandardNormal));
        return Ok(());
    }
    let base = r[0].abs().max(f64::MIN_POSITIVE);
    let z: Vec<f64> = (0..r.len()).map(|_| rng.sample(StandardNormal)).collect();
    for rel in JITTER_LEVELS {
        if levinson_sample(r, rel * base, &z, out) {
            return Ok(());
        }
    }
    Err(Error::numeric(
        "gp sampling",
        format!("toeplitz covariance of size {} not positive definite at maximum jitter", r.len()),
    ))
}

/// Sequential conditional sampling `x_t = sum_j phi_tj x_{t-j} + sqrt(v_t) z_t`
/// with the one-step predictors updated by the Durbin recursion.
fn levinson_sample(r: &[f64], jitter: f64, z: &[f64], out: &mut [f64]) -> bool {
    let n = r.len();
    let r0 = r[0] + jitter;
    let floor = 0.5 * jitter;
    let mut phi = vec![0.0; n];
    let mut v = r0;
    if !(v > floor) {
        return false;
    }
    out[0] = v.sqrt() * z[0];
    for t in 1..n {
        let mut acc = r[t];
        for j in 1..t {
            acc -= phi[j] * r[t - j];
        }
        let k = acc / v;
        let (mut lo, mut hi) = (1, t - 1);
        while lo < hi {
            let (a, b) = (phi[lo], phi[hi]);
            phi[lo] = a - k * b;
            phi[hi] = b - k * a;
            lo += 1;
            hi -= 1;
        }
        if lo == hi {
            let a = phi[lo];
            phi[lo] = a - k * a;
        }
        phi[t] = k;
        v *= 1.0 - k * k;
        if !(v > floor && v.is_finite()) {
            return false;
        }
        let mut pred = 0.0;
        for j in 1..=t {
            pred += phi[j] * out[t - j];
        }
        out[t] = pred + v.sqrt() * z[t];
    }
    true
}
