//! Tree-structured Parzen Estimator over the simplex.
//!
//! Weights are searched in softmax-logit coordinates `z_k = ln γ_k - ln γ_0`
//! (`k ≥ 1`), so every candidate maps back to a feasible point.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{MixtureWeights, TrialRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpeParams {
    pub n_startup: usize,
    pub quantile: f64,
    pub n_candidates: usize,
    pub min_bandwidth: f64,
}

impl Default for TpeParams {
    fn default() -> Self {
        Self {
            n_startup: 10,
            quantile: 0.25,
            n_candidates: 24,
            min_bandwidth: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Tpe(TpeParams),
    Random,
}

impl Default for Strategy {
    fn default() -> Self {
        Strategy::Tpe(TpeParams::default())
    }
}

/// Uniform draw from the simplex (symmetric Dirichlet with unit
/// concentration) via normalized exponentials.
pub fn dirichlet_uniform<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<MixtureWeights> {
    if dim == 0 {
        return Err(Error::invalid("simplex dimension must be at least 1"));
    }
    if dim == 1 {
        return Ok(MixtureWeights(vec![1.0]));
    }
    let e: Vec<f64> = (0..dim).map(|_| Exp1.sample(rng)).collect();
    let sum: f64 = e.iter().sum();
    Ok(MixtureWeights(e.into_iter().map(|x| x / sum).collect()))
}

pub fn random_suggest<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<MixtureWeights> {
    dirichlet_uniform(dim, rng)
}

pub fn suggest<R: Rng + ?Sized>(
    strategy: &Strategy,
    history: &[TrialRecord],
    dim: usize,
    rng: &mut R,
) -> Result<MixtureWeights> {
    match strategy {
        Strategy::Tpe(p) => tpe_suggest(history, dim, p, rng),
        Strategy::Random => random_suggest(dim, rng),
    }
}

fn to_logits(g: &MixtureWeights) -> Vec<f64> {
    let floor = |x: f64| x.max(1e-300).ln();
    let base = floor(g.0[0]);
    g.0[1..].iter().map(|&x| floor(x) - base).collect()
}

fn from_logits(z: &[f64]) -> MixtureWeights {
    let max = z.iter().fold(0.0f64, |m, &v| m.max(v));
    let e: Vec<f64> = std::iter::once(0.0).chain(z.iter().copied()).map(|v| libm::exp(v - max)).collect();
    let sum: f64 = e.iter().sum();
    MixtureWeights(e.into_iter().map(|x| x / sum).collect())
}

/// Axis-aligned Gaussian Parzen mixture, one equally weighted kernel per
/// observation.
struct Kde {
    centres: Vec<Vec<f64>>,
    bandwidth: Vec<f64>,
}

impl Kde {
    /// Scott's rule `spread · n^(-1/(d+4))`, floored.
    fn fit(centres: Vec<Vec<f64>>, spread: &[f64], floor: f64) -> Self {
        let n = centres.len() as f64;
        let factor = n.powf(-1.0 / (spread.len() as f64 + 4.0));
        let bandwidth = spread.iter().map(|s| (s * factor).max(floor)).collect();
        Kde { centres, bandwidth }
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .centres
            .iter()
            .map(|c| {
                c.iter()
                    .zip(x)
                    .zip(&self.bandwidth)
                    .map(|((a, b), h)| -0.5 * ((a - b) / h).powi(2) - h.ln())
                    .sum::<f64>()
            })
            .collect();
        let max = terms.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln() - (terms.len() as f64).ln()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let k = rng.random_range(0..self.centres.len());
        self.centres[k]
            .iter()
            .zip(&self.bandwidth)
            .map(|(c, h)| {
                let e: f64 = StandardNormal.sample(rng);
                c + h * e
            })
            .collect()
    }
}

/// Per-coordinate sample standard deviation (0 for a single point).
fn std_dev(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len() as f64;
    (0..points[0].len())
        .map(|j| {
            if points.len() < 2 {
                return 0.0;
            }
            let mean = points.iter().map(|p| p[j]).sum::<f64>() / n;
            (points.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        })
        .collect()
}

/// Next weights to evaluate given the finished trials.
pub fn tpe_suggest<R: Rng + ?Sized>(
    history: &[TrialRecord],
    dim: usize,
    params: &TpeParams,
    rng: &mut R,
) -> Result<MixtureWeights> {
    if dim == 0 {
        return Err(Error::invalid("simplex dimension must be at least 1"));
    }
    if dim == 1 {
        return Ok(MixtureWeights(vec![1.0]));
    }
    if !(params.quantile > 0.0 && params.quantile < 1.0) || params.n_candidates == 0 {
        return Err(Error::invalid("TPE quantile must lie in (0, 1) with at least one candidate"));
    }
    let usable: Vec<&TrialRecord> = history
        .iter()
        .filter(|r| r.loss.is_finite() && r.gamma.dim() == dim)
        .collect();
    if usable.len() < params.n_startup.max(2) {
        return dirichlet_uniform(dim, rng);
    }
    let mut ranked = usable;
    ranked.sort_by(|a, b| a.loss.total_cmp(&b.loss).then(a.trial.cmp(&b.trial)));
    let n_good = ((params.quantile * ranked.len() as f64).ceil() as usize).clamp(1, ranked.len() - 1);
    let logits = |rs: &[&TrialRecord]| rs.iter().map(|r| to_logits(&r.gamma)).collect::<Vec<_>>();
    // Reference spread comes from the whole history. A per-set spread lets a
    // tight good cluster shrink its kernels to the floor and stall the search.
    let spread = std_dev(&logits(&ranked));
    let good = Kde::fit(logits(&ranked[..n_good]), &spread, params.min_bandwidth);
    let bad = Kde::fit(logits(&ranked[n_good..]), &spread, params.min_bandwidth);

    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..params.n_candidates {
        let z = good.sample(rng);
        let score = good.log_density(&z) - bad.log_density(&z);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, z));
        }
    }
    Ok(from_logits(&best.expect("at least one candidate").1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bo::SIMPLEX_TOL;
    use crate::rng::substream;

    fn quadratic(g: &MixtureWeights) -> f64 {
        let target = [0.6, 0.4];
        g.as_slice().iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum()
    }

    fn run(strategy: Strategy, seed: u64, trials: usize) -> (Vec<TrialRecord>, f64) {
        let mut rng = substream(seed, &[]);
        let mut history = Vec::new();
        for trial in 0..trials {
            let gamma = suggest(&strategy, &history, 2, &mut rng).unwrap();
            let loss = quadratic(&gamma);
            history.push(TrialRecord {
                trial,
                gamma,
                loss,
                seed,
                wall_time: 0.0,
            });
        }
        let best = history.iter().map(|r| r.loss).fold(f64::INFINITY, f64::min);
        (history, best)
    }

    #[test]
    fn degenerate_dimensions() {
        let mut rng = substream(1, &[]);
        assert!(tpe_suggest(&[], 0, &TpeParams::default(), &mut rng).is_err());
        assert_eq!(tpe_suggest(&[], 1, &TpeParams::default(), &mut rng).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn cold_start_is_uniform() {
        // First coordinate of a uniform point on the 2-simplex has mean 1/2
        // and variance 1/12.
        let mut rng = substream(2, &[]);
        let xs: Vec<f64> = (0..20_000)
            .map(|_| tpe_suggest(&[], 2, &TpeParams::default(), &mut rng).unwrap().as_slice()[0])
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((mean - 0.5).abs() < 0.01 && (var - 1.0 / 12.0).abs() < 0.003, "{mean} {var}");
        // Below-triangle fraction on the 3-simplex: P(γ0 > 1/2) = 1/4.
        let hits = (0..20_000)
            .filter(|_| dirichlet_uniform(3, &mut rng).unwrap().as_slice()[0] > 0.5)
            .count();
        assert!((hits as f64 / 20_000.0 - 0.25).abs() < 0.015);
    }

    #[test]
    fn logits_round_trip() {
        let g = MixtureWeights::new(vec![0.2, 0.5, 0.3]).unwrap();
        let back = from_logits(&to_logits(&g));
        for (a, b) in g.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        let extreme = from_logits(&[800.0, -800.0]);
        assert!((extreme.as_slice().iter().sum::<f64>() - 1.0).abs() < SIMPLEX_TOL);
    }

    #[test]
    fn suggestions_on_simplex_and_deterministic() {
        let (h1, _) = run(Strategy::default(), 3, 40);
        let (h2, _) = run(Strategy::default(), 3, 40);
        assert_eq!(h1, h2);
        for r in &h1 {
            let s: f64 = r.gamma.as_slice().iter().sum();
            assert!((s - 1.0).abs() < SIMPLEX_TOL && r.gamma.as_slice().iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn tpe_concentrates_near_optimum() {
        let (history, best) = run(Strategy::default(), 4, 60);
        assert!(best < 1e-3, "{best}");
        let late: f64 = history[40..].iter().map(|r| r.loss).sum::<f64>() / 20.0;
        let early: f64 = history[..10].iter().map(|r| r.loss).sum::<f64>() / 10.0;
        assert!(late < early);
    }
}
