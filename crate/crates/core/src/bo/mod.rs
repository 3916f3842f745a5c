//! Mixture-weight search over synthetic sources.
//!
//! A trial draws weights `γ` on the simplex, allocates training windows
//! across sources accordingly, fits a forecaster on the mixture and scores
//! it on validation windows. [`optimize_mixture`] runs the trials and keeps
//! the best weights.

mod external;
mod forecast;
mod objective;
mod tpe;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use external::{run_external, ExternalCommand};
pub use forecast::{forecast, mean_absolute_error, predict_all, ForecasterSpec, RidgeAr};
pub use objective::{
    assemble_training, evaluate_objective, optimize_mixture, write_trial_log, ObjectiveOptions, OptimizeOptions,
    Optimized, TrialFailure, TrialRecord,
};
pub use tpe::{dirichlet_uniform, random_suggest, suggest, tpe_suggest, Strategy, TpeParams};

/// Tolerance on the simplex sum.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MixtureWeights(Vec<f64>);

impl MixtureWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("mixture weights need at least one source"));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::invalid(format!("mixture weight {w} is not a non-negative number")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!("mixture weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    /// Rescales non-negative weights onto the simplex.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::invalid("cannot normalize weights with a non-positive sum"));
        }
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn uniform(dim: usize) -> Self {
        Self(vec![1.0 / dim as f64; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl TryFrom<Vec<f64>> for MixtureWeights {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MixtureWeights> for Vec<f64> {
    fn from(w: MixtureWeights) -> Self {
        w.0
    }
}

/// Per-source window counts: floors of `γ·N`, with the shortfall handed out
/// by largest remainder (lowest index first on ties).
pub fn allocate(gamma: &MixtureWeights, total: usize) -> Vec<usize> {
    let exact: Vec<f64> = gamma.0.iter().map(|g| g * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| (x.floor() as usize).min(total)).collect();
    let assigned: usize = counts.iter().sum();
    if assigned > total {
        // Only reachable when rounding pushes the floors past N.
        let mut excess = assigned - total;
        for c in counts.iter_mut().rev() {
            let take = excess.min(*c);
            *c -= take;
            excess -= take;
        }
        return counts;
    }
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().cycle().take(total - assigned) {
        counts[k] += 1;
    }
    counts
}
