//! Flag definitions and config-file merging.
//!
//! Every option is `Option<T>` so three layers can be told apart: explicit
//! command line, JSON config file, built-in default. `merged` overlays the
//! config file underneath the command line; defaults are applied inside
//! each command. Config keys are the flag names in snake_case; unknown
//! keys are usage errors.

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Deserialize;
use std::path::PathBuf;

/// A bad invocation (missing/invalid flags or config keys); exits with 2
/// instead of 1.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

/// Unwrap a flag that must be present after merging CLI and config.
pub fn require<T>(value: Option<T>, flag: &str) -> anyhow::Result<T> {
    value.ok_or_else(|| usage(format!("missing required flag --{flag}")))
}

#[derive(Parser)]
#[command(
    name = "dynhawk",
    version,
    about = "Fit, score, and simulate self-exciting event models with learned time-rescaling dynamics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Fit a model and save a checkpoint plus a training log
    Fit(FitOpts),
    /// Score a checkpoint on an event file (NLL, count error, residuals)
    Evaluate(EvaluateOpts),
    /// Expected event counts per interval, next to the observed counts
    Predict(PredictOpts),
    /// Sample synthetic data from a checkpoint
    Simulate(SimulateOpts),
    /// Train one model per hyperparameter combination and tabulate scores
    Sweep(SweepOpts),
    /// Tabulate the learned speed and its integral on a time grid
    #[command(name = "export-dynamics")]
    ExportDynamics(ExportDynamicsOpts),
}

/// Overlay config-file values underneath explicit flags, field by field.
macro_rules! overlay {
    ($cli:expr, $file:expr, [ $($field:ident),* $(,)? ]) => {
        $( if $cli.$field.is_none() { $cli.$field = $file.$field; } )*
    };
}

pub trait FromConfig: Sized {
    fn config_path(&self) -> Option<&PathBuf>;
    fn overlay(&mut self, file: Self);
}

/// Apply `--config` (if any): parse the JSON file into the same option
/// struct and fill every flag the command line left unset.
pub fn merged<T: FromConfig + for<'de> Deserialize<'de>>(mut opts: T) -> anyhow::Result<T> {
    if let Some(path) = opts.config_path().cloned() {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| anyhow::anyhow!("reading config {}: {e}", path.display()))?;
        let file: T = serde_json::from_str(&text)
            .map_err(|e| usage(format!("config {}: {e}", path.display())))?;
        opts.overlay(file);
    }
    Ok(opts)
}

#[derive(Args, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct FitOpts {
    /// JSON file supplying any of this command's flags
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Event file (.csv with a time,mark header, or .jsonl)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Event file format when the extension is ambiguous: csv or jsonl
    #[arg(long)]
    pub format: Option<String>,
    /// Sort events by time on load instead of rejecting unsorted input
    #[arg(long, action = ArgAction::SetTrue)]
    pub sort: Option<bool>,
    /// Observation horizon in the file's raw time units
    #[arg(long)]
    pub data_horizon: Option<f64>,
    /// JSON array of mark labels fixing the dimension order
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Multiplier applied to every raw time at load [default: 1]
    #[arg(long)]
    pub time_scale: Option<f64>,
    /// Free-form description of the raw time unit, kept in the checkpoint
    #[arg(long)]
    pub time_unit: Option<String>,
    /// Model family: dynamic_hawkes, hawkes, poisson, reactive,
    /// self_correcting [default: dynamic_hawkes]
    #[arg(long)]
    pub model_type: Option<String>,
    /// Excitation kernel: exp, pwl, or ray [default: pwl]
    #[arg(long)]
    pub kernel: Option<String>,
    /// Mixture components per dimension in the learned dynamics [default: 3]
    #[arg(long)]
    pub mixtures: Option<usize>,
    /// Hidden layers per component network [default: 2]
    #[arg(long)]
    pub layers: Option<usize>,
    /// Width of each hidden layer [default: 8]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Input normalization for the dynamics network [default: data horizon]
    #[arg(long)]
    pub input_scale: Option<f64>,
    /// Learning rate [default: 0.002]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Events per gradient step [default: 128]
    #[arg(long)]
    pub batch: Option<usize>,
    /// Maximum training epochs [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Epochs without validation improvement before stopping [default: 10]
    #[arg(long)]
    pub patience: Option<usize>,
    /// Fraction of events held out (chronologically) for validation
    /// [default: 0.2]
    #[arg(long)]
    pub val_frac: Option<f64>,
    /// Seed for initialization and batch shuffling [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Visit batches in index order instead of reshuffling each epoch
    #[arg(long, action = ArgAction::SetTrue)]
    pub no_shuffle: Option<bool>,
    /// Checkpoint output path (JSON)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training log output path (CSV) [default: <out>.log.csv]
    #[arg(long)]
    pub log: Option<PathBuf>,
}

impl FromConfig for FitOpts {
    fn config_path(&self) -> Option<&PathBuf> {
        self.config.as_ref()
    }
    fn overlay(&mut self, file: Self) {
        overlay!(self, file, [
            data, format, sort, data_horizon, manifest, time_scale, time_unit,
            model_type, kernel, mixtures, layers, hidden, input_scale, lr,
            batch, epochs, patience, val_frac, seed, no_shuffle, out, log,
        ]);
    }
}

#[derive(Args, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateOpts {
    /// JSON file supplying any of this command's flags
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Checkpoint to score
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Event file (.csv or .jsonl)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Event file format when the extension is ambiguous: csv or jsonl
    #[arg(long)]
    pub format: Option<String>,
    /// Sort events by time on load instead of rejecting unsorted input
    #[arg(long, action = ArgAction::SetTrue)]
    pub sort: Option<bool>,
    /// Observation horizon in the file's raw time units
    #[arg(long)]
    pub data_horizon: Option<f64>,
    /// Start of the scored window, raw units [default: file start]
    #[arg(long)]
    pub from: Option<f64>,
    /// End of the scored window, raw units [default: file horizon]
    #[arg(long)]
    pub to: Option<f64>,
    /// Count-error interval width, raw units [default: 900]
    #[arg(long)]
    pub width: Option<f64>,
    /// Report output path (JSON) [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the report as a one-row CSV for aggregation
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

impl FromConfig for EvaluateOpts {
    fn config_path(&self) -> Option<&PathBuf> {
        self.config.as_ref()
    }
    fn overlay(&mut self, file: Self) {
        overlay!(self, file, [
            model, data, format, sort, data_horizon, from, to, width, out, csv,
        ]);
    }
}

#[derive(Args, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PredictOpts {
    /// JSON file supplying any of this command's flags
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Checkpoint to predict with
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Event file providing the conditioning history and observed counts
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Event file format when the extension is ambiguous: csv or jsonl
    #[arg(long)]
    pub format: Option<String>,
    /// Sort events by time on load instead of rejecting unsorted input
    #[arg(long, action = ArgAction::SetTrue)]
    pub sort: Option<bool>,
    /// Observation horizon in the file's raw time units
    #[arg(long)]
    pub data_horizon: Option<f64>,
    /// Start of the prediction window, raw units [default: file start]
    #[arg(long)]
    pub from: Option<f64>,
    /// End of the prediction window, raw units [default: file horizon]
    #[arg(long)]
    pub to: Option<f64>,
    /// Prediction interval width, raw units [default: 900]
    #[arg(long)]
    pub width: Option<f64>,
    /// Counts output path (CSV)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl FromConfig for PredictOpts {
    fn config_path(&self) -> Option<&PathBuf> {
        self.config.as_ref()
    }
    fn overlay(&mut self, file: Self) {
        overlay!(self, file, [
            model, data, format, sort, data_horizon, from, to, width, out,
        ]);
    }
}

#[derive(Args, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateOpts {
    /// JSON file supplying any of this command's flags
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Checkpoint describing the generating model
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Length of the simulated window, raw units
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Seed; identical seeds give byte-identical output [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Abort if more than this many events are generated [default: 1000000]
    #[arg(long)]
    pub max_events: Option<usize>,
    /// Length of each intensity-bound window, raw units
    /// [default: horizon/64]
    #[arg(long)]
    pub lookahead: Option<f64>,
    /// Events output path (CSV)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sidecar path recording the generating model and seed (JSON)
    /// [default: <out>.sidecar.json]
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
}

impl FromConfig for SimulateOpts {
    fn config_path(&self) -> Option<&PathBuf> {
        self.config.as_ref()
    }
    fn overlay(&mut self, file: Self) {
        overlay!(self, file, [
            model, horizon, seed, max_events, lookahead, out, sidecar,
        ]);
    }
}

#[derive(Args, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOpts {
    /// JSON file supplying any of this command's flags
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Event file (.csv or .jsonl)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Event file format when the extension is ambiguous: csv or jsonl
    #[arg(long)]
    pub format: Option<String>,
    /// Sort events by time on load instead of rejecting unsorted input
    #[arg(long, action = ArgAction::SetTrue)]
    pub sort: Option<bool>,
    /// Observation horizon in the file's raw time units
    #[arg(long)]
    pub data_horizon: Option<f64>,
    /// JSON array of mark labels fixing the dimension order
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Multiplier applied to every raw time at load [default: 1]
    #[arg(long)]
    pub time_scale: Option<f64>,
    /// Free-form description of the raw time unit
    #[arg(long)]
    pub time_unit: Option<String>,
    /// Comma-separated kernel families to try [default: exp,pwl,ray]
    #[arg(long)]
    pub kernels: Option<String>,
    /// Comma-separated mixture sizes to try [default: 1,2,3]
    #[arg(long)]
    pub mixtures: Option<String>,
    /// Comma-separated hidden-layer counts to try [default: 1,2]
    #[arg(long)]
    pub layers: Option<String>,
    /// Width of each hidden layer [default: 8]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Input normalization for the dynamics network [default: data horizon]
    #[arg(long)]
    pub input_scale: Option<f64>,
    /// Learning rate [default: 0.002]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Events per gradient step [default: 128]
    #[arg(long)]
    pub batch: Option<usize>,
    /// Maximum training epochs [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Epochs without validation improvement before stopping [default: 10]
    #[arg(long)]
    pub patience: Option<usize>,
    /// Chronological train fraction [default: 0.7]
    #[arg(long)]
    pub train_frac: Option<f64>,
    /// Chronological validation fraction [default: 0.1]
    #[arg(long)]
    pub val_frac: Option<f64>,
    /// Chronological test fraction [default: 0.2]
    #[arg(long)]
    pub test_frac: Option<f64>,
    /// Seed for initialization and batch shuffling [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Visit batches in index order instead of reshuffling each epoch
    #[arg(long, action = ArgAction::SetTrue)]
    pub no_shuffle: Option<bool>,
    /// Results table output path (CSV)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl FromConfig for SweepOpts {
    fn config_path(&self) -> Option<&PathBuf> {
        self.config.as_ref()
    }
    fn overlay(&mut self, file: Self) {
        overlay!(self, file, [
            data, format, sort, data_horizon, manifest, time_scale, time_unit,
            kernels, mixtures, layers, hidden, input_scale, lr, batch, epochs,
            patience, train_frac, val_frac, test_frac, seed, no_shuffle, out,
        ]);
    }
}

#[derive(Args, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExportDynamicsOpts {
    /// JSON file supplying any of this command's flags
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Checkpoint whose dynamics to tabulate
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Grid start, raw units [default: 0]
    #[arg(long)]
    pub from: Option<f64>,
    /// Grid end, raw units
    #[arg(long)]
    pub to: Option<f64>,
    /// Number of grid points [default: 200]
    #[arg(long)]
    pub points: Option<usize>,
    /// Table output path (CSV)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl FromConfig for ExportDynamicsOpts {
    fn config_path(&self) -> Option<&PathBuf> {
        self.config.as_ref()
    }
    fn overlay(&mut self, file: Self) {
        overlay!(self, file, [model, from, to, points, out]);
    }
}
