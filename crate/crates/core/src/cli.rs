//! Command-line front end. [`run`] parses arguments and returns the process
//! exit code: 0 on success, 1 on runtime failure, 2 on usage errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::{s, Array2};
use serde::Serialize;

use crate::bo::{optimize_mixture, write_trial_log, ForecasterSpec, ObjectiveOptions, OptimizeOptions, Strategy};
use crate::config::{GeneratorConfig, Variant};
use crate::diagnostics::{DiagnosticsAccumulator, DiagnosticsOptions, DiagnosticsReport};
use crate::error::{Error, Result};
use crate::generator::{for_each_sample, Provenance, SeriesTensor};
use crate::io::{self, DatasetHeader, DatasetWriter, MetadataSidecar, FLAG_STANDARDIZED};
use crate::mixing::{mix_sample, sample_windows, subsample_validation, windows_to_tensor, MixSchedule, WindowLengths, WindowPair};
use crate::rng::substream;

/// Diagnostics summary written by `generate` covers this much of the dataset.
const SUMMARY_SAMPLES: usize = 8;
const SUMMARY_CHANNELS: usize = 32;

#[derive(Parser, Debug)]
#[command(name = "dynlmc", version, about = "Synthetic multivariate time series with dynamic correlations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset with its sidecar and a diagnostics summary.
    Generate(GenerateArgs),
    /// Rolling-correlation drift and argmax-lag histogram of a dataset.
    Diagnose(DiagnoseArgs),
    /// Materialize a progressive mixture of three sources.
    Mix(MixArgs),
    /// Search mixture weights against a validation set.
    OptimizeMix(OptimizeArgs),
    /// Built-in forecaster speaking the external-forecaster protocol.
    Forecast(ForecastArgs),
    /// Window indices drawn by the shared index rule.
    Windows(WindowsArgs),
    /// Write a small conformance fixture for other readers of the format.
    Fixture(FixtureArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// TOML config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "config")]
    variant: Variant,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    length: Option<usize>,
}

#[derive(Args, Debug)]
struct DiagOpts {
    #[arg(long, default_value_t = crate::diagnostics::DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = crate::diagnostics::DEFAULT_STRIDE)]
    stride: usize,
    #[arg(long, default_value_t = crate::diagnostics::DEFAULT_MAX_LAG)]
    max_lag: usize,
    #[arg(long)]
    max_samples: Option<usize>,
    #[arg(long)]
    max_channels: Option<usize>,
}

impl DiagOpts {
    fn options(&self) -> DiagnosticsOptions {
        DiagnosticsOptions {
            window: self.window,
            stride: self.stride,
            max_lag: self.max_lag,
            max_samples: self.max_samples,
            max_channels: self.max_channels,
        }
    }
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    /// Binary dataset, CSV file, or directory of CSV files.
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    opts: DiagOpts,
    #[arg(long)]
    report: PathBuf,
    /// Optional per-pair argmax-lag CSV.
    #[arg(long)]
    pairs: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct WindowOpts {
    #[arg(long, default_value_t = 96)]
    context: usize,
    #[arg(long, default_value_t = 96)]
    horizon: usize,
}

impl WindowOpts {
    fn lens(&self) -> WindowLengths {
        WindowLengths::new(self.context, self.horizon)
    }
}

#[derive(Args, Debug)]
struct MixArgs {
    /// Exactly three datasets, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    sources: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Schedule length M; defaults to the smallest source size.
    #[arg(long)]
    schedule_len: Option<usize>,
    /// Output channels; defaults to the widest source.
    #[arg(long)]
    budget: Option<usize>,
    #[command(flatten)]
    windows: WindowOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    sources: Vec<PathBuf>,
    #[arg(long)]
    val: PathBuf,
    #[arg(long, default_value_t = 30)]
    trials: usize,
    #[arg(long, default_value = "ridge_ar")]
    forecaster: ForecasterSpec,
    #[arg(long)]
    out: PathBuf,
    /// Training windows per trial.
    #[arg(long, default_value_t = 256)]
    windows: usize,
    #[arg(long, default_value_t = 64)]
    val_windows: usize,
    #[arg(long, default_value_t = 200_000)]
    train_budget: usize,
    #[command(flatten)]
    lens: WindowOpts,
    /// `tpe` or `random`.
    #[arg(long, default_value = "tpe")]
    strategy: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ForecastArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    contexts: PathBuf,
    #[arg(long)]
    horizon: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "ridge_ar")]
    forecaster: ForecasterSpec,
    #[arg(long, default_value_t = 200_000)]
    train_budget: usize,
}

#[derive(Args, Debug)]
struct WindowsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[command(flatten)]
    lens: WindowOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON output; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate(a) => generate(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Mix(a) => mix(a),
        Command::OptimizeMix(a) => optimize(a),
        Command::Forecast(a) => forecast_cmd(a),
        Command::Windows(a) => windows(a),
        Command::Fixture(a) => fixture(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T, path: &Path) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))
}

/// Default rolling window and stride, shrunk on short series so that two
/// windows still fit.
fn summary_windows(len: usize) -> (usize, usize) {
    use crate::diagnostics::{DEFAULT_STRIDE, DEFAULT_WINDOW, MIN_WINDOW};
    if len >= DEFAULT_WINDOW + DEFAULT_STRIDE {
        return (DEFAULT_WINDOW, DEFAULT_STRIDE);
    }
    let window = (2 * len / 3).max(MIN_WINDOW).min(len);
    (window, (len - window).max(1))
}

/// Streams a generated dataset to `data`, returning the diagnostics summary
/// computed on the stored (f32) values of the first samples.
pub fn generate_to_file(config: &GeneratorConfig, variant: Variant, data: &Path) -> Result<DiagnosticsReport> {
    config.validate()?;
    let d = &config.dataset;
    let flags = if config.latents.standardize { FLAG_STANDARDIZED } else { 0 };
    let mut writer = DatasetWriter::create(data, DatasetHeader::new(d.samples, d.channels, d.length, flags))?;
    let (window, stride) = summary_windows(d.length);
    let mut diag = DiagnosticsAccumulator::new(DiagnosticsOptions {
        max_samples: Some(SUMMARY_SAMPLES),
        max_channels: Some(SUMMARY_CHANNELS),
        window,
        stride,
        max_lag: crate::diagnostics::DEFAULT_MAX_LAG.min(d.length.saturating_sub(1) / 2),
    });
    let mut records = Vec::with_capacity(d.samples);
    for_each_sample(config, variant, |_, series, record| {
        writer.write_sample(series.view())?;
        if diag.wants_more() {
            diag.push(series.mapv(|v| v as f32 as f64).view())?;
        }
        records.push(record);
        Ok(())
    })?;
    let header = writer.header();
    let sha = writer.finish()?;
    let provenance = Provenance {
        variant,
        config: config.clone(),
        samples: records,
    };
    MetadataSidecar::new(header, sha, Some(provenance)).write(io::sidecar_path(data))?;
    Ok(diag.report())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => GeneratorConfig::from_file(p)?,
        None => GeneratorConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.dataset.seed = seed;
    }
    if let Some(v) = a.samples {
        config.dataset.samples = v;
    }
    if let Some(v) = a.channels {
        config.dataset.channels = v;
    }
    if let Some(v) = a.length {
        config.dataset.length = v;
    }
    create_dir(&a.out)?;
    let data = a.out.join("data.dlmc");
    let report = generate_to_file(&config, a.variant, &data)?;
    let report_path = a.out.join("diagnostics.toml");
    write_text(&report_path, &report.to_toml_string())?;
    println!(
        "wrote {} ({}x{}x{}, variant {})",
        data.display(),
        config.dataset.samples,
        config.dataset.channels,
        config.dataset.length,
        a.variant
    );
    Ok(())
}

fn diagnose_tensor(tensor: &SeriesTensor, options: DiagnosticsOptions) -> Result<DiagnosticsAccumulator> {
    let mut acc = DiagnosticsAccumulator::new(options);
    for sample in tensor.data.outer_iter() {
        if !acc.wants_more() {
            break;
        }
        acc.push(sample)?;
    }
    Ok(acc)
}

fn write_pairs(path: &Path, acc: &DiagnosticsAccumulator) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let fail = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(["sample", "from", "to", "lag", "value"]).map_err(fail)?;
    for (sample, p) in acc.pairs() {
        w.write_record([
            sample.to_string(),
            p.from.to_string(),
            p.to.to_string(),
            p.lag.to_string(),
            p.value.to_string(),
        ])
        .map_err(fail)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn diagnose(a: DiagnoseArgs) -> Result<()> {
    let tensor = io::load_any(&a.input)?;
    let acc = diagnose_tensor(&tensor, a.opts.options())?;
    let report = acc.report();
    write_text(&a.report, &report.to_toml_string())?;
    if let Some(p) = &a.pairs {
        write_pairs(p, &acc)?;
    }
    println!(
        "drift_mean = {:.6}  nonzero_lag_fraction = {:.6}  samples = {}",
        report.drift_mean, report.nonzero_lag_fraction, report.samples_evaluated
    );
    Ok(())
}

fn load_sources(paths: &[PathBuf]) -> Result<Vec<SeriesTensor>> {
    paths.iter().map(io::load_any).collect()
}

#[derive(Serialize)]
struct MixItem<'a> {
    index: usize,
    probability: f64,
    origins: &'a [crate::mixing::WindowOrigin],
}

fn mix(a: MixArgs) -> Result<()> {
    if a.sources.len() != 3 {
        return Err(Error::invalid(format!("mix needs exactly 3 sources, got {}", a.sources.len())));
    }
    let sources = load_sources(&a.sources)?;
    let len = a
        .schedule_len
        .unwrap_or_else(|| sources.iter().map(|s| s.samples()).min().unwrap_or(0));
    let schedule = MixSchedule::new(len)?;
    let budget = a
        .budget
        .unwrap_or_else(|| sources.iter().map(|s| s.channels()).max().unwrap_or(0));
    let refs = [&sources[0], &sources[1], &sources[2]];
    let mut rng = substream(a.seed, &[]);
    let items: Vec<WindowPair> = (0..len)
        .map(|i| mix_sample(i, &schedule, refs, a.windows.lens(), budget, &mut rng))
        .collect::<Result<_>>()?;
    create_dir(&a.out)?;
    io::write_dataset(&windows_to_tensor(&items)?, a.out.join("mix.dlmc"))?;
    let log = a.out.join("origins.jsonl");
    let mut text = String::new();
    for (i, w) in items.iter().enumerate() {
        let item = MixItem {
            index: i,
            probability: schedule.probability(i),
            origins: &w.origins,
        };
        text.push_str(&serde_json::to_string(&item).map_err(|e| Error::format(&log, e.to_string()))?);
        text.push('\n');
    }
    write_text(&log, &text)?;
    println!("wrote {} mixed windows to {}", len, a.out.display());
    Ok(())
}

fn optimize(a: OptimizeArgs) -> Result<()> {
    let strategy = match a.strategy.as_str() {
        "tpe" => Strategy::default(),
        "random" => Strategy::Random,
        other => return Err(Error::invalid(format!("unknown strategy '{other}'"))),
    };
    let sources = load_sources(&a.sources)?;
    let refs: Vec<&SeriesTensor> = sources.iter().collect();
    let channels = refs.iter().map(|s| s.channels()).max().unwrap_or(0);
    let val_data = io::load_any(&a.val)?;
    let lens = a.lens.lens();
    let val = subsample_validation(&val_data, a.val_windows, lens, channels, &mut substream(a.seed, &[u64::MAX - 1]))?;
    let opts = OptimizeOptions {
        trials: a.trials,
        objective: ObjectiveOptions {
            windows: a.windows,
            lens,
            train_budget: a.train_budget,
        },
        strategy,
    };
    let result = optimize_mixture(&refs, &val, &a.forecaster, &opts, a.seed)?;
    create_dir(&a.out)?;
    write_trial_log(&a.out.join("trials.jsonl"), &result.trials, &result.failures)?;
    let best_path = a.out.join("best.json");
    write_text(&best_path, &to_json(&result.best, &best_path)?)?;
    io::write_dataset(&windows_to_tensor(&result.mixture)?, a.out.join("mixture.dlmc"))?;
    println!(
        "best loss {:.6} at gamma {:?} ({} trials, {} failed)",
        result.best.loss,
        result.best.gamma.as_slice(),
        result.trials.len() + result.failures.len(),
        result.failures.len()
    );
    Ok(())
}

fn forecast_cmd(a: ForecastArgs) -> Result<()> {
    let (_, train) = io::read_binary(&a.train)?;
    let (_, contexts) = io::read_binary(&a.contexts)?;
    let split = train.len().checked_sub(a.horizon).filter(|&c| c > 0 || train.samples() == 0);
    let split = split.ok_or_else(|| Error::invalid("training windows are not longer than the horizon"))?;
    let windows: Vec<WindowPair> = train
        .data
        .outer_iter()
        .map(|w| WindowPair {
            context: w.slice(s![.., ..split]).to_owned(),
            target: w.slice(s![.., split..]).to_owned(),
            origins: Vec::new(),
        })
        .collect();
    let ctx: Vec<Array2<f64>> = contexts.data.outer_iter().map(|c| c.to_owned()).collect();
    let predicted = crate::bo::predict_all(&a.forecaster, &windows, &ctx, a.horizon, a.train_budget)?;
    let mut out = ndarray::Array3::zeros((ctx.len(), contexts.channels(), a.horizon));
    for (k, p) in predicted.iter().enumerate() {
        out.index_axis_mut(ndarray::Axis(0), k).assign(p);
    }
    io::write_binary(&SeriesTensor::new(out), &a.out)?;
    Ok(())
}

#[derive(Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct WindowIndex {
    pub k: usize,
    pub sample: usize,
    pub offset: usize,
}

#[derive(Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct WindowListing {
    pub seed: u64,
    pub n: usize,
    pub context: usize,
    pub horizon: usize,
    pub windows: Vec<WindowIndex>,
}

fn listing(tensor: &SeriesTensor, n: usize, lens: WindowLengths, seed: u64) -> Result<WindowListing> {
    let windows = sample_windows(tensor, n, lens, seed)?
        .iter()
        .enumerate()
        .map(|(k, w)| WindowIndex {
            k,
            sample: w.origins[0].sample,
            offset: w.origins[0].offset,
        })
        .collect();
    Ok(WindowListing {
        seed,
        n,
        context: lens.context,
        horizon: lens.horizon,
        windows,
    })
}

fn windows(a: WindowsArgs) -> Result<()> {
    let tensor = io::load_any(&a.input)?;
    let out = listing(&tensor, a.n, a.lens.lens(), a.seed)?;
    match &a.out {
        Some(p) => write_text(p, &to_json(&out, p)?),
        None => {
            let text = to_json(&out, Path::new("<stdout>"))?;
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|e| Error::io("<stdout>", e))
        }
    }
}

#[derive(Serialize)]
struct FixtureWindow {
    k: usize,
    sample: usize,
    offset: usize,
    /// First and last context value of channel 0, as stored.
    context_first: f64,
    context_last: f64,
    target_last: f64,
}

#[derive(Serialize)]
struct FixtureManifest {
    seed: u64,
    samples: usize,
    channels: usize,
    length: usize,
    window_seed: u64,
    context: usize,
    horizon: usize,
    windows: Vec<FixtureWindow>,
    truncated_expected_bytes: u64,
    truncated_actual_bytes: u64,
}

/// Small dataset, its sidecar and diagnostics, a truncated copy and the
/// expected window indices, for cross-implementation checks.
fn fixture(a: FixtureArgs) -> Result<()> {
    let mut config = GeneratorConfig::default();
    config.dataset.samples = 4;
    config.dataset.channels = 6;
    config.dataset.length = 256;
    config.dataset.seed = a.seed;
    config.lag.max_lag = 3;
    create_dir(&a.out)?;
    let data = a.out.join("data.dlmc");
    generate_to_file(&config, Variant::Config, &data)?;

    let (stored, _) = io::read_dataset(&data)?;
    let acc = diagnose_tensor(
        &stored,
        DiagnosticsOptions {
            max_lag: 8,
            ..DiagnosticsOptions::default()
        },
    )?;
    write_text(&a.out.join("diagnostics.toml"), &acc.report().to_toml_string())?;

    let lens = WindowLengths::new(96, 96);
    let window_seed = a.seed ^ 0x5eed;
    let pairs = sample_windows(&stored, 8, lens, window_seed)?;
    let windows = pairs
        .iter()
        .enumerate()
        .map(|(k, w)| FixtureWindow {
            k,
            sample: w.origins[0].sample,
            offset: w.origins[0].offset,
            context_first: w.context[[0, 0]],
            context_last: w.context[[0, lens.context - 1]],
            target_last: w.target[[0, lens.horizon - 1]],
        })
        .collect();

    let bytes = std::fs::read(&data).map_err(|e| Error::io(&data, e))?;
    let cut = bytes.len() - 10;
    let truncated = a.out.join("truncated.dlmc");
    std::fs::write(&truncated, &bytes[..cut]).map_err(|e| Error::io(&truncated, e))?;

    let manifest = FixtureManifest {
        seed: a.seed,
        samples: stored.samples(),
        channels: stored.channels(),
        length: stored.len(),
        window_seed,
        context: lens.context,
        horizon: lens.horizon,
        windows,
        truncated_expected_bytes: bytes.len() as u64,
        truncated_actual_bytes: cut as u64,
    };
    let path = a.out.join("windows.json");
    write_text(&path, &to_json(&manifest, &path)?)?;
    println!("wrote fixture to {}", a.out.display());
    Ok(())
}
