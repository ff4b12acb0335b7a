//! `dynhawk` — command-line front end for the point-process library.
//!
//! Subcommands: `fit`, `evaluate`, `predict`, `simulate`, `sweep`, and
//! `export-dynamics`. Every flag of a subcommand may also be supplied
//! through a JSON config file (`--config cfg.json`, keys are the flag
//! names in snake_case); explicit command-line flags win. All commands
//! are deterministic given the same inputs and `--seed`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error. Log verbosity
//! comes from the `DYNHAWK_LOG` environment variable (`error`, `warn`,
//! `info`, `debug`, `trace`).

// Flag validation writes `!(x > y)` on purpose: unlike `x <= y` it also
// rejects NaN inputs.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod opts;

use clap::Parser;
use opts::{Cli, Command, Usage};

fn main() {
    env_logger::Builder::from_env(
        env_logger::Env::new()
            .filter_or("DYNHAWK_LOG", "warn")
            .write_style("DYNHAWK_LOG_STYLE"),
    )
    .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(o) => opts::merged(o).and_then(commands::fit),
        Command::Evaluate(o) => opts::merged(o).and_then(commands::evaluate),
        Command::Predict(o) => opts::merged(o).and_then(commands::predict),
        Command::Simulate(o) => opts::merged(o).and_then(commands::simulate),
        Command::Sweep(o) => opts::merged(o).and_then(commands::sweep),
        Command::ExportDynamics(o) => opts::merged(o).and_then(commands::export_dynamics),
    };
    match result {
        Ok(()) => {}
        Err(err) if err.is::<Usage>() => {
            eprintln!("usage error: {err}");
            std::process::exit(2);
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}
