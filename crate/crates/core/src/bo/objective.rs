use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::forecast::{mean_absolute_error, predict_all, ForecasterSpec};
use super::tpe::{suggest, Strategy};
use super::{allocate, MixtureWeights};
use crate::error::{Error, Result};
use crate::generator::SeriesTensor;
use crate::mixing::{align_channels, sample_windows, WindowLengths, WindowPair};
use crate::rng::{derive_seed, substream};

/// One finished trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub gamma: MixtureWeights,
    pub loss: f64,
    pub seed: u64,
    /// Seconds spent in the objective.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub gamma: MixtureWeights,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveOptions {
    /// Training windows per trial.
    pub windows: usize,
    pub lens: WindowLengths,
    /// Cap on regression rows used to fit the forecaster.
    pub train_budget: usize,
}

impl Default for ObjectiveOptions {
    fn default() -> Self {
        Self {
            windows: 256,
            lens: WindowLengths::new(96, 96),
            train_budget: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    pub trials: usize,
    pub objective: ObjectiveOptions,
    pub strategy: Strategy,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            trials: 30,
            objective: ObjectiveOptions::default(),
            strategy: Strategy::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimized {
    pub best: TrialRecord,
    /// Training windows resampled at the best weights.
    pub mixture: Vec<WindowPair>,
    pub trials: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
}

/// Channel target: the widest source.
fn channel_target(sources: &[&SeriesTensor]) -> usize {
    sources.iter().map(|s| s.channels()).max().unwrap_or(0)
}

/// Training mixture for `gamma`: per-source window counts by
/// [`allocate`], each window aligned to `channels`.
pub fn assemble_training<R: Rng + ?Sized>(
    gamma: &MixtureWeights,
    sources: &[&SeriesTensor],
    windows: usize,
    lens: WindowLengths,
    channels: usize,
    rng: &mut R,
) -> Result<Vec<WindowPair>> {
    if gamma.dim() != sources.len() {
        return Err(Error::invalid(format!(
            "{} weights for {} sources",
            gamma.dim(),
            sources.len()
        )));
    }
    let counts = allocate(gamma, windows);
    let mut out = Vec::with_capacity(windows);
    for (m, (source, &n)) in sources.iter().zip(&counts).enumerate() {
        let seed = rng.next_u64();
        if n == 0 {
            continue;
        }
        for w in sample_windows(source, n, lens, seed)? {
            out.push(align_channels(&w, channels, rng)?.with_source(m));
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("training mixture has no windows"));
    }
    Ok(out)
}

/// Validation MAE of the forecaster trained on the mixture at `gamma`.
/// Naive forecasters skip assembling the mixture.
pub fn evaluate_objective<R: Rng + ?Sized>(
    gamma: &MixtureWeights,
    sources: &[&SeriesTensor],
    val: &[WindowPair],
    spec: &ForecasterSpec,
    opts: &ObjectiveOptions,
    rng: &mut R,
) -> Result<f64> {
    if val.is_empty() {
        return Err(Error::invalid("validation set is empty"));
    }
    let channels = channel_target(sources);
    let train = if spec.needs_training() {
        assemble_training(gamma, sources, opts.windows, opts.lens, channels, rng)?
    } else {
        if opts.windows == 0 {
            return Err(Error::invalid("training mixture has no windows"));
        }
        Vec::new()
    };
    let contexts: Vec<Array2<f64>> = val.iter().map(|w| w.context.clone()).collect();
    let truth: Vec<Array2<f64>> = val.iter().map(|w| w.target.clone()).collect();
    let horizon = truth[0].ncols();
    let predicted = predict_all(spec, &train, &contexts, horizon, opts.train_budget)?;
    mean_absolute_error(&predicted, &truth)
}

/// Sequential search for mixture weights. Trial `k` uses seed
/// `derive_seed(seed, [k])`; the returned mixture is resampled at the best
/// weights from `derive_seed(seed, [u64::MAX])`.
pub fn optimize_mixture(
    sources: &[&SeriesTensor],
    val: &[WindowPair],
    spec: &ForecasterSpec,
    opts: &OptimizeOptions,
    seed: u64,
) -> Result<Optimized> {
    if opts.trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    if sources.is_empty() {
        return Err(Error::invalid("need at least one source"));
    }
    spec.validate()?;
    let dim = sources.len();
    let mut trials: Vec<TrialRecord> = Vec::with_capacity(opts.trials);
    let mut failures = Vec::new();
    for k in 0..opts.trials {
        let trial_seed = derive_seed(seed, &[k as u64]);
        let gamma = suggest(&opts.strategy, &trials, dim, &mut substream(trial_seed, &[0]))?;
        let start = Instant::now();
        let outcome = evaluate_objective(&gamma, sources, val, spec, &opts.objective, &mut substream(trial_seed, &[1]));
        match outcome {
            Ok(loss) => trials.push(TrialRecord {
                trial: k,
                gamma,
                loss,
                seed: trial_seed,
                wall_time: start.elapsed().as_secs_f64(),
            }),
            Err(e @ Error::InvalidArgument(_)) if k == 0 => return Err(e),
            Err(e) => failures.push(TrialFailure {
                trial: k,
                gamma,
                seed: trial_seed,
                error: e.to_string(),
            }),
        }
    }
    let Some(best) = trials
        .iter()
        .min_by(|a, b| a.loss.total_cmp(&b.loss).then(a.trial.cmp(&b.trial)))
        .cloned()
    else {
        return Err(Error::AllTrialsFailed(
            failures.iter().map(|f| format!("trial {}: {}", f.trial, f.error)).collect(),
        ));
    };
    let mut rng = substream(seed, &[u64::MAX]);
    let mixture = assemble_training(
        &best.gamma,
        sources,
        opts.objective.windows,
        opts.objective.lens,
        channel_target(sources),
        &mut rng,
    )?;
    Ok(Optimized {
        best,
        mixture,
        trials,
        failures,
    })
}

/// Trial log as one JSON object per line, in trial order.
pub fn write_trial_log(path: &Path, trials: &[TrialRecord], failures: &[TrialFailure]) -> Result<()> {
    let mut lines: Vec<(usize, String)> = Vec::with_capacity(trials.len() + failures.len());
    let json = |v: serde_json::Result<String>| v.map_err(|e| Error::format(path, e.to_string()));
    for t in trials {
        lines.push((t.trial, json(serde_json::to_string(t))?));
    }
    for f in failures {
        lines.push((f.trial, json(serde_json::to_string(f))?));
    }
    lines.sort_by_key(|(k, _)| *k);
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for (_, line) in lines {
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
