//! Out-of-process forecasters.
//!
//! The command is run as
//! `<program> <args..> --train <file> --contexts <file> --horizon <H> --out <file>`.
//! Inputs are binary datasets: training windows with context and target
//! joined along time, and validation contexts. The command writes one
//! forecast per context to `--out` in the same format, channels matching
//! the contexts and `H` steps long. A non-zero exit status fails the trial.

use std::fmt;
use std::path::PathBuf;
use std::process::Command;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::SeriesTensor;
use crate::io;
use crate::mixing::{windows_to_tensor, WindowPair};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalCommand {
    pub program: String,
    pub args: Vec<String>,
}

impl fmt::Display for ExternalCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.program)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        Ok(())
    }
}

impl FromStr for ExternalCommand {
    type Err = Error;

    /// Whitespace-separated program and arguments; no shell quoting.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split_whitespace().map(str::to_owned);
        let program = parts
            .next()
            .ok_or_else(|| Error::invalid("external forecaster command is empty"))?;
        Ok(Self {
            program,
            args: parts.collect(),
        })
    }
}

struct ScratchDir(PathBuf);

impl ScratchDir {
    fn new() -> Result<Self> {
        static COUNTER: AtomicU64 = AtomicU64::new(0);
        let nanos = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.subsec_nanos())
            .unwrap_or(0);
        let dir = std::env::temp_dir().join(format!(
            "dynlmc-external-{}-{}-{nanos}",
            std::process::id(),
            COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self(dir))
    }
}

impl Drop for ScratchDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

/// Runs the external forecaster once over all contexts.
pub fn run_external(
    cmd: &ExternalCommand,
    train: &[WindowPair],
    contexts: &[Array2<f64>],
    horizon: usize,
) -> Result<Vec<Array2<f64>>> {
    let first = contexts
        .first()
        .ok_or_else(|| Error::invalid("no contexts to forecast"))?;
    let (channels, len) = first.dim();
    let mut ctx = Array3::zeros((contexts.len(), channels, len));
    for (k, c) in contexts.iter().enumerate() {
        if c.dim() != (channels, len) {
            return Err(Error::invalid(format!("context {k} differs in shape from the first")));
        }
        ctx.index_axis_mut(Axis(0), k).assign(c);
    }
    let train = if train.is_empty() {
        SeriesTensor::new(Array3::zeros((0, channels, len + horizon)))
    } else {
        windows_to_tensor(train)?
    };

    let dir = ScratchDir::new()?;
    let (train_path, ctx_path, out_path) = (dir.0.join("train.dlmc"), dir.0.join("contexts.dlmc"), dir.0.join("out.dlmc"));
    io::write_binary(&train, &train_path)?;
    io::write_binary(&SeriesTensor::new(ctx), &ctx_path)?;

    let output = Command::new(&cmd.program)
        .args(&cmd.args)
        .arg("--train")
        .arg(&train_path)
        .arg("--contexts")
        .arg(&ctx_path)
        .arg("--horizon")
        .arg(horizon.to_string())
        .arg("--out")
        .arg(&out_path)
        .output()
        .map_err(|e| Error::External(format!("cannot start '{cmd}': {e}")))?;
    if !output.status.success() {
        let stderr = String::from_utf8_lossy(&output.stderr);
        return Err(Error::External(format!("'{cmd}' exited with {}: {}", output.status, stderr.trim())));
    }

    let (_, forecasts) = io::read_binary(&out_path).map_err(|e| Error::External(format!("'{cmd}' output: {e}")))?;
    let want = (contexts.len(), channels, horizon);
    if forecasts.data.dim() != want {
        return Err(Error::External(format!(
            "'{cmd}' wrote shape {:?}, expected {want:?}",
            forecasts.data.dim()
        )));
    }
    Ok(forecasts.data.outer_iter().map(|f| f.to_owned()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_parsing() {
        let c: ExternalCommand = "python3  model.py --fast".parse().unwrap();
        assert_eq!(c.program, "python3");
        assert_eq!(c.args, vec!["model.py", "--fast"]);
        assert_eq!(c.to_string(), "python3 model.py --fast");
        assert!("   ".parse::<ExternalCommand>().is_err());
    }

    #[test]
    fn missing_program_is_external_error() {
        let c: ExternalCommand = "/nonexistent/forecaster".parse().unwrap();
        let err = run_external(&c, &[], &[Array2::zeros((1, 4))], 2).unwrap_err();
        assert!(matches!(err, Error::External(_)));
    }

    #[cfg(unix)]
    #[test]
    fn nonzero_exit_is_failure() {
        let c: ExternalCommand = "false".parse().unwrap();
        let err = run_external(&c, &[], &[Array2::zeros((1, 4))], 2).unwrap_err();
        assert!(matches!(err, Error::External(ref m) if m.contains("exited")), "{err}");
    }
}
