// SPDX-License-Identifier: Apache-2.0

//! `chernoff-kit run | scenarios | rates`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{ExperimentConfig, ScenarioName, SEED_ENV};
use crate::error::{KitError, KitResult, EXIT_CONFIG, EXIT_PASS};
use crate::report::parse_csv;
use crate::runner::{emit_reports, run, RunOptions};

#[derive(Debug, Parser)]
#[command(name = "chernoff-kit", version, about = "Chernoff product-formula experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the suites described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Maximum number of suites run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Directory the output files are written to.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// List the built-in scenarios and the suites they support.
    Scenarios,
    /// Refit convergence rates from an error-table CSV.
    Rates {
        #[arg(long)]
        csv: PathBuf,
    },
}

fn cmd_run(config: &Path, jobs: usize, out: &Path) -> KitResult<i32> {
    let mut cfg = ExperimentConfig::load(config)?;
    cfg.apply_seed_override(std::env::var(SEED_ENV).ok().as_deref())?;
    let base = config.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf();
    let opts = RunOptions { jobs, out_dir: out.to_path_buf(), base_dir: base };
    let summary = run(&cfg, &opts)?;
    emit_reports(&summary)?;
    for s in &summary.suites {
        println!("{:<12} {:<8} {:>9.3}s", s.suite.as_str(), s.verdict.as_str(), s.elapsed.as_secs_f64());
        if let Some(e) = &s.error {
            println!("  error: {e}");
        }
    }
    println!("wrote {} and {}", summary.artifacts.csv, summary.artifacts.json);
    Ok(summary.exit_code())
}

fn cmd_scenarios() -> KitResult<i32> {
    for name in [ScenarioName::Heat, ScenarioName::Schrodinger, ScenarioName::Dissipative, ScenarioName::MultExample] {
        let suites: Vec<&str> = name.applicable().iter().map(|s| s.as_str()).collect();
        println!("{:<12} t0={:<4} suites: {}", name.as_str(), name.default_t0(), suites.join(", "));
    }
    Ok(EXIT_PASS)
}

fn cmd_rates(csv: &Path) -> KitResult<i32> {
    let text = std::fs::read_to_string(csv).map_err(|e| KitError::io(csv, e))?;
    let cells = parse_csv(&text).map_err(|message| KitError::Format { path: csv.to_path_buf(), message })?;
    println!("seminorm,rate,residual,ci_low,ci_high,flagged");
    for r in crate::report::refit_rates(&cells) {
        let label = &r.seminorm;
        match r.fit {
            Ok(f) => println!("{label},{},{},{},{},{}", f.slope, f.residual, f.ci_low, f.ci_high, f.flagged),
            Err(flag) => println!("{label},,,,,{flag}"),
        }
    }
    Ok(EXIT_PASS)
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
        }
    };
    let result = match &cli.command {
        Command::Run { config, jobs, out } => cmd_run(config, *jobs, out),
        Command::Scenarios => cmd_scenarios(),
        Command::Rates { csv } => cmd_rates(csv),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    })
}
