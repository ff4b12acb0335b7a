//! Implementations of the six subcommands. Times on the command line and
//! in output files are in the event file's original (raw) units; models
//! work in raw times multiplied by the checkpoint's `time_scale`.
//! Likelihood values are reported in the model's internal units.

use crate::opts::{
    require, usage, EvaluateOpts, ExportDynamicsOpts, FitOpts, PredictOpts, SimulateOpts,
    SweepOpts,
};
use anyhow::{Context, Result};
use dynhawk_core::baselines::{
    HawkesModel, HomogeneousPoissonModel, ReactivePointProcess, SelfCorrectingModel,
};
use dynhawk_core::checkpoint::{AnyModel, Checkpoint};
use dynhawk_core::dynamics::{Dynamics, MixtureIntegralDynamics};
use dynhawk_core::events::{
    chronological_split, grid_boundaries, load_events, load_manifest, slice_counts, EventFormat,
    EventSequence, LoadOptions, SplitSpec,
};
use dynhawk_core::evaluate::evaluate as score;
use dynhawk_core::kernels::KernelSpec;
use dynhawk_core::model::{DynamicHawkesModel, PointProcess};
use dynhawk_core::simulate::{simulate as draw_events, SimConfig};
use dynhawk_core::training::{fit as train, FitConfig, FitOutcome, SweepGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::io::Write;
use std::path::{Path, PathBuf};

// ---------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------

fn parse_format(format: Option<&str>) -> Result<Option<EventFormat>> {
    format
        .map(|s| s.parse::<EventFormat>().map_err(|e| usage(e.to_string())))
        .transpose()
}

fn parse_kernel(kernel: &str) -> Result<KernelSpec> {
    kernel
        .parse::<KernelSpec>()
        .map_err(|e| usage(e.to_string()))
}

fn parse_usize_list(list: &str, flag: &str) -> Result<Vec<usize>> {
    let values: Vec<usize> = list
        .split(',')
        .map(|part| part.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage(format!("--{flag}: expected comma-separated integers, got '{list}'")))?;
    if values.is_empty() {
        return Err(usage(format!("--{flag} must name at least one value")));
    }
    Ok(values)
}

/// Write pretty JSON to a file, or to stdout when no path is given.
fn emit_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

/// One-line machine-readable completion summary on stdout.
fn emit_summary(value: serde_json::Value) {
    println!("{value}");
}

fn opt_cell(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

// ---------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------

/// Chronological train/validation boundary: the first `1 - val_frac` of
/// events train, the rest validate. A tie run straddling the cut stays in
/// the training block.
fn validation_boundary(data: &EventSequence, val_frac: f64) -> Result<f64> {
    if !(val_frac > 0.0 && val_frac < 1.0) {
        return Err(usage(format!(
            "--val-frac must be strictly between 0 and 1, got {val_frac}"
        )));
    }
    let n = data.events.len();
    if n < 2 {
        anyhow::bail!("need at least two events to split off a validation window");
    }
    let mut k = (((1.0 - val_frac) * n as f64).floor() as usize).clamp(1, n - 1);
    while k < n && data.events[k].time == data.events[k - 1].time {
        k += 1;
    }
    if k == n {
        anyhow::bail!("validation window is empty (all candidate events share one timestamp)");
    }
    Ok(data.events[k].time)
}

pub fn fit(o: FitOpts) -> Result<()> {
    let data_path = require(o.data, "data")?;
    let out = require(o.out, "out")?;
    let log_path = o
        .log
        .unwrap_or_else(|| out.with_extension("log.csv"));
    let time_scale = o.time_scale.unwrap_or(1.0);
    let load = LoadOptions {
        format: parse_format(o.format.as_deref())?,
        sort: o.sort.unwrap_or(false),
        time_scale,
        horizon: o.data_horizon,
        manifest: o.manifest.as_deref().map(load_manifest).transpose()?,
        time_unit: o.time_unit.unwrap_or_default(),
    };
    let data = load_events(&data_path, &load)
        .with_context(|| format!("loading {}", data_path.display()))?;
    let boundary = validation_boundary(&data, o.val_frac.unwrap_or(0.2))?;
    let train_seq = data.windowed(data.window_start, boundary)?;
    let val_seq = data.windowed(boundary, data.horizon)?;

    let family = o.model_type.as_deref().unwrap_or("dynamic_hawkes");
    let kernel = parse_kernel(o.kernel.as_deref().unwrap_or("pwl"))?;
    let seed = o.seed.unwrap_or(42);
    let config = FitConfig {
        learning_rate: o.lr.unwrap_or(0.002),
        batch_size: o.batch.unwrap_or(128),
        max_epochs: o.epochs.unwrap_or(100),
        patience: o.patience.unwrap_or(10),
        seed,
        shuffle: !o.no_shuffle.unwrap_or(false),
    };

    let mut model = match family {
        "dynamic_hawkes" => {
            let input_scale = o
                .input_scale
                .unwrap_or(data.horizon - data.window_start);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dynamics = MixtureIntegralDynamics::init(
                data.num_marks(),
                o.mixtures.unwrap_or(3),
                o.layers.unwrap_or(2),
                o.hidden.unwrap_or(8),
                input_scale,
                &mut rng,
            )?;
            AnyModel::DynamicHawkes(DynamicHawkesModel::init_from_data(
                &train_seq,
                kernel,
                Dynamics::Mixture(dynamics),
            )?)
        }
        "hawkes" => AnyModel::Hawkes(HawkesModel::init_from_data(&train_seq, kernel)?),
        "poisson" => AnyModel::Poisson(HomogeneousPoissonModel::mle(&train_seq)?),
        "reactive" => AnyModel::Reactive(ReactivePointProcess::init_from_data(&train_seq)?),
        "self_correcting" => {
            AnyModel::SelfCorrecting(SelfCorrectingModel::init_from_data(&train_seq)?)
        }
        other => {
            return Err(usage(format!(
                "unknown --model-type '{other}' (expected dynamic_hawkes, hawkes, poisson, \
                 reactive, or self_correcting)"
            )))
        }
    };

    let outcome = if matches!(model, AnyModel::Poisson(_)) {
        // Closed-form maximum likelihood; no gradient loop to run.
        FitOutcome {
            best_val_nll: model.nll(&val_seq)?.total,
            best_epoch: 0,
            epochs_run: 0,
            history: Vec::new(),
        }
    } else {
        train(&mut model, &train_seq, &val_seq, &config, |record| {
            log::info!(
                "epoch {}: train nll {:.6}, val nll {:.6} ({:.2} s)",
                record.epoch,
                record.train_nll,
                record.val_nll,
                record.seconds
            );
        })?
    };

    let mut log_file = std::io::BufWriter::new(
        std::fs::File::create(&log_path)
            .with_context(|| format!("writing {}", log_path.display()))?,
    );
    writeln!(log_file, "epoch,train_nll,val_nll")?;
    for record in &outcome.history {
        writeln!(
            log_file,
            "{},{},{}",
            record.epoch, record.train_nll, record.val_nll
        )?;
    }
    log_file.flush()?;

    let checkpoint = Checkpoint::new(model, &train_seq)?;
    checkpoint.save(&out)?;

    emit_summary(json!({
        "command": "fit",
        "model_type": checkpoint.model.kind(),
        "num_train_events": train_seq.num_scored(),
        "num_val_events": val_seq.num_scored(),
        "val_from": boundary / time_scale,
        "val_to": data.horizon / time_scale,
        "best_val_nll": outcome.best_val_nll,
        "best_epoch": outcome.best_epoch,
        "epochs_run": outcome.epochs_run,
        "out": out.display().to_string(),
        "log": log_path.display().to_string(),
    }));
    Ok(())
}

// ---------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------

/// Load a checkpoint and its companion data file, with the stored time
/// scale applied and the stored manifest enforced.
fn load_for_model(
    model_path: &Path,
    data_path: &Path,
    format: Option<&str>,
    sort: Option<bool>,
    data_horizon: Option<f64>,
) -> Result<(Checkpoint, EventSequence)> {
    let checkpoint = Checkpoint::load(model_path)
        .with_context(|| format!("loading {}", model_path.display()))?;
    let load = LoadOptions {
        format: parse_format(format)?,
        sort: sort.unwrap_or(false),
        time_scale: checkpoint.meta.time_scale,
        horizon: data_horizon,
        manifest: Some(checkpoint.meta.mark_manifest.clone()),
        time_unit: checkpoint.meta.time_unit.clone(),
    };
    let data =
        load_events(data_path, &load).with_context(|| format!("loading {}", data_path.display()))?;
    Ok((checkpoint, data))
}

pub fn evaluate(o: EvaluateOpts) -> Result<()> {
    let model_path = require(o.model, "model")?;
    let data_path = require(o.data, "data")?;
    let (checkpoint, data) = load_for_model(
        &model_path,
        &data_path,
        o.format.as_deref(),
        o.sort,
        o.data_horizon,
    )?;
    let scale = checkpoint.meta.time_scale;
    let from = o.from.map_or(data.window_start, |v| v * scale);
    let to = o.to.map_or(data.horizon, |v| v * scale);
    let width = o.width.unwrap_or(900.0) * scale;
    let window = data.windowed(from, to)?;
    let mut report = score(checkpoint.model.as_process(), &window, width)?;
    report.interval_width /= scale;

    if let Some(csv_path) = &o.csv {
        let mut writer = csv::Writer::from_path(csv_path)
            .with_context(|| format!("writing {}", csv_path.display()))?;
        writer.write_record([
            "test_nll",
            "per_event_nll",
            "num_test_events",
            "mape_mean",
            "mape_stddev",
            "interval_width",
            "ks_tested",
            "ks_passed_1pct",
        ])?;
        let tested = report.ks.iter().filter(|k| k.statistic.is_some()).count();
        let passed = report
            .ks
            .iter()
            .filter(|k| k.passes(0.01) == Some(true))
            .count();
        writer.write_record([
            report.test_nll.to_string(),
            opt_cell(report.per_event_nll),
            report.num_test_events.to_string(),
            opt_cell(report.mape_mean),
            opt_cell(report.mape_stddev),
            report.interval_width.to_string(),
            tested.to_string(),
            passed.to_string(),
        ])?;
        writer.flush()?;
    }

    emit_json(&report, o.out.as_deref())?;
    if o.out.is_some() {
        emit_summary(json!({
            "command": "evaluate",
            "test_nll": report.test_nll,
            "num_test_events": report.num_test_events,
            "out": o.out.as_ref().map(|p| p.display().to_string()),
        }));
    }
    Ok(())
}

// ---------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------

pub fn predict(o: PredictOpts) -> Result<()> {
    let model_path = require(o.model, "model")?;
    let data_path = require(o.data, "data")?;
    let out = require(o.out, "out")?;
    let (checkpoint, data) = load_for_model(
        &model_path,
        &data_path,
        o.format.as_deref(),
        o.sort,
        o.data_horizon,
    )?;
    let scale = checkpoint.meta.time_scale;
    let from = o.from.map_or(data.window_start, |v| v * scale);
    let to = o.to.map_or(data.horizon, |v| v * scale);
    let width = o.width.unwrap_or(900.0) * scale;
    let boundaries = grid_boundaries(from, to, width)?;
    let predicted = checkpoint
        .model
        .as_process()
        .predict_counts(&data, &boundaries)?;
    let observed = slice_counts(&data, from, to, width)?;

    let mut writer =
        csv::Writer::from_path(&out).with_context(|| format!("writing {}", out.display()))?;
    writer.write_record(["start", "end", "mark", "predicted", "observed"])?;
    for (s, row) in predicted.iter().enumerate() {
        for (m, value) in row.iter().enumerate() {
            writer.write_record([
                (boundaries[s] / scale).to_string(),
                (boundaries[s + 1] / scale).to_string(),
                checkpoint.meta.mark_manifest[m].clone(),
                value.to_string(),
                observed.count(s, m).to_string(),
            ])?;
        }
    }
    writer.flush()?;

    emit_summary(json!({
        "command": "predict",
        "intervals": predicted.len(),
        "dimensions": checkpoint.meta.num_marks,
        "out": out.display().to_string(),
    }));
    Ok(())
}

// ---------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------

pub fn simulate(o: SimulateOpts) -> Result<()> {
    let model_path = require(o.model, "model")?;
    let horizon = require(o.horizon, "horizon")?;
    let out = require(o.out, "out")?;
    let sidecar = o
        .sidecar
        .unwrap_or_else(|| out.with_extension("sidecar.json"));
    let checkpoint = Checkpoint::load(&model_path)
        .with_context(|| format!("loading {}", model_path.display()))?;
    let scale = checkpoint.meta.time_scale;
    let seed = o.seed.unwrap_or(42);
    let config = SimConfig {
        horizon: horizon * scale,
        seed,
        max_events: o.max_events.unwrap_or(1_000_000),
        lookahead: o.lookahead.map(|v| v * scale),
        labels: Some(checkpoint.meta.mark_manifest.clone()),
    };
    let sequence = draw_events(checkpoint.model.as_process(), &config)?;

    let mut file = std::io::BufWriter::new(
        std::fs::File::create(&out).with_context(|| format!("writing {}", out.display()))?,
    );
    writeln!(file, "time,mark")?;
    for event in &sequence.events {
        writeln!(
            file,
            "{},{}",
            event.time / scale,
            sequence.mark_labels[event.mark]
        )?;
    }
    file.flush()?;

    let sidecar_body = json!({
        "command": "simulate",
        "seed": seed,
        "horizon": horizon,
        "max_events": config.max_events,
        "lookahead": o.lookahead,
        "num_events": sequence.events.len(),
        "generating_model": checkpoint,
    });
    emit_json(&sidecar_body, Some(&sidecar))?;

    emit_summary(json!({
        "command": "simulate",
        "num_events": sequence.events.len(),
        "out": out.display().to_string(),
        "sidecar": sidecar.display().to_string(),
    }));
    Ok(())
}

// ---------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------

pub fn sweep(o: SweepOpts) -> Result<()> {
    let data_path = require(o.data, "data")?;
    let out = require(o.out, "out")?;
    let time_scale = o.time_scale.unwrap_or(1.0);
    let load = LoadOptions {
        format: parse_format(o.format.as_deref())?,
        sort: o.sort.unwrap_or(false),
        time_scale,
        horizon: o.data_horizon,
        manifest: o.manifest.as_deref().map(load_manifest).transpose()?,
        time_unit: o.time_unit.unwrap_or_default(),
    };
    let data = load_events(&data_path, &load)
        .with_context(|| format!("loading {}", data_path.display()))?;
    let split = chronological_split(
        &data,
        &SplitSpec {
            train_frac: o.train_frac.unwrap_or(0.7),
            val_frac: o.val_frac.unwrap_or(0.1),
            test_frac: o.test_frac.unwrap_or(0.2),
        },
    )?;

    let kernels = o
        .kernels
        .as_deref()
        .unwrap_or("exp,pwl,ray")
        .split(',')
        .map(|s| parse_kernel(s.trim()))
        .collect::<Result<Vec<_>>>()?;
    let grid = SweepGrid {
        kernels,
        layers: parse_usize_list(o.layers.as_deref().unwrap_or("1,2"), "layers")?,
        components: parse_usize_list(o.mixtures.as_deref().unwrap_or("1,2,3"), "mixtures")?,
        hidden: o.hidden.unwrap_or(8),
        input_scale: o
            .input_scale
            .unwrap_or(data.horizon - data.window_start),
    };
    let config = FitConfig {
        learning_rate: o.lr.unwrap_or(0.002),
        batch_size: o.batch.unwrap_or(128),
        max_epochs: o.epochs.unwrap_or(100),
        patience: o.patience.unwrap_or(10),
        seed: o.seed.unwrap_or(42),
        shuffle: !o.no_shuffle.unwrap_or(false),
    };
    let rows = dynhawk_core::training::sweep(
        &split.train,
        &split.val,
        &split.test,
        &grid,
        &config,
        |row| {
            log::info!(
                "swept kernel {} L {} C {}: val nll {:.6}, test nll {:.6} ({:.2} s)",
                row.kernel,
                row.layers,
                row.components,
                row.val_nll,
                row.test_nll,
                row.seconds
            );
        },
    )?;

    let mut writer =
        csv::Writer::from_path(&out).with_context(|| format!("writing {}", out.display()))?;
    writer.write_record([
        "kernel",
        "layers",
        "components",
        "hidden",
        "val_nll",
        "test_nll",
        "best_epoch",
        "epochs_run",
    ])?;
    for row in &rows {
        writer.write_record([
            row.kernel.clone(),
            row.layers.to_string(),
            row.components.to_string(),
            row.hidden.to_string(),
            row.val_nll.to_string(),
            row.test_nll.to_string(),
            row.best_epoch.to_string(),
            row.epochs_run.to_string(),
        ])?;
    }
    writer.flush()?;

    emit_summary(json!({
        "command": "sweep",
        "combinations": rows.len(),
        "out": out.display().to_string(),
    }));
    Ok(())
}

// ---------------------------------------------------------------------
// export-dynamics
// ---------------------------------------------------------------------

pub fn export_dynamics(o: ExportDynamicsOpts) -> Result<()> {
    let model_path = require(o.model, "model")?;
    let to = require(o.to, "to")?;
    let out: PathBuf = require(o.out, "out")?;
    let from = o.from.unwrap_or(0.0);
    let points = o.points.unwrap_or(200);
    if points < 2 {
        return Err(usage(format!("--points must be at least 2, got {points}")));
    }
    if !(to > from) {
        return Err(usage(format!(
            "--to ({to}) must be greater than --from ({from})"
        )));
    }
    let checkpoint = Checkpoint::load(&model_path)
        .with_context(|| format!("loading {}", model_path.display()))?;
    let model = checkpoint.model.dynamic().ok_or_else(|| {
        anyhow::anyhow!(
            "checkpoint holds a '{}' model, which has no dynamics to export",
            checkpoint.model.kind()
        )
    })?;
    let scale = checkpoint.meta.time_scale;

    let mut writer =
        csv::Writer::from_path(&out).with_context(|| format!("writing {}", out.display()))?;
    let mut header = vec!["t".to_string()];
    for label in &checkpoint.meta.mark_manifest {
        header.push(format!("f_{label}"));
        header.push(format!("F_{label}"));
    }
    writer.write_record(&header)?;
    for i in 0..points {
        let t_raw = from + (to - from) * i as f64 / (points - 1) as f64;
        let t = t_raw * scale;
        let mut row = vec![t_raw.to_string()];
        for m in 0..checkpoint.meta.num_marks {
            row.push(model.dynamics.derivative_value(m, t).to_string());
            // The antiderivative is in model time; dividing by the scale
            // keeps it the integral of f over raw time.
            row.push((model.dynamics.integral_value(m, t) / scale).to_string());
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;

    emit_summary(json!({
        "command": "export-dynamics",
        "points": points,
        "dimensions": checkpoint.meta.num_marks,
        "out": out.display().to_string(),
    }));
    Ok(())
}
