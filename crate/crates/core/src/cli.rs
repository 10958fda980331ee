//! Command-line front end: scenario runs, presets, set verification and Euler cycles.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::analysis::{sweep, write_csv, ConvergenceReport};
use crate::error::{Error, Result};
use crate::model::{verify_decoupling_set, SetVerification};
use crate::scenario::{parity_defect, parse_scenario, preset, Prepared, Scenario, SetSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_BOUND: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "DDSIM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ddsim", version, about = "Dynamical decoupling simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario sweep and write results.csv and summary.json.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a built-in scenario, or print it with --emit.
    Preset {
        name: String,
        #[arg(long)]
        emit: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the decoupling property of a scenario's set.
    VerifySet { scenario: PathBuf },
    /// Print the scenario's cycle as a JSON list of set indices.
    Euler { scenario: PathBuf },
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: ConvergenceReport,
    pub set_verification: SetVerification,
    pub summary: serde_json::Value,
    pub exit_code: i32,
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario(&fs::read_to_string(path)?)
}

fn parity_check(p: &Prepared) -> Option<f64> {
    match &p.scenario.decoupling_set {
        SetSpec::Preset(s) if s == "parity" => Some(parity_defect(&p.hamiltonian)),
        _ => None,
    }
}

/// Sweeps a prepared scenario and writes its artifacts into `out_dir`.
pub fn run_prepared(p: &Prepared, out_dir: &Path) -> Result<RunOutcome> {
    let s = &p.scenario;
    let set_verification = verify_decoupling_set(&p.set)?;
    let report = sweep(&p.hamiltonian, &p.schedule, &s.m_grid, &s.lambda_grid)?;
    fs::create_dir_all(out_dir)?;
    let mut csv = Vec::new();
    write_csv(&report, &mut csv)?;
    fs::write(out_dir.join(&s.outputs.csv), csv)?;

    let errors: Vec<_> = report
        .points
        .iter()
        .filter_map(|pt| {
            pt.error
                .as_ref()
                .map(|e| json!({"m": pt.m, "lambda": pt.lambda, "error": e}))
        })
        .collect();
    let summary = json!({
        "name": s.name,
        "t": s.t,
        "space": s.space,
        "H0": report.h0,
        "H1": report.h1,
        "B": report.b,
        "H1_minus_H0_norm": report.gap,
        "quadrature_nodes": report.quadrature_nodes,
        "predicted_limit": report.predicted_limit()?,
        "predicted_decoupling": report.predicted_decoupling,
        "fitted_rates": report.fitted_rates,
        "pass_flags": report.pass_flags,
        "set_verification": { "passed": set_verification.passed, "max_violation": set_verification.max_violation },
        "parity_defect": parity_check(p),
        "visits": p.cycle.visits(),
        "point_errors": errors,
    });
    fs::write(
        out_dir.join(&s.outputs.summary),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;

    let exit_code = if !report.pass_flags.bounds_hold() {
        EXIT_BOUND
    } else if !report.pass_flags.all_hold() || !set_verification.passed || report.has_point_errors()
    {
        EXIT_CHECK
    } else {
        EXIT_OK
    };
    Ok(RunOutcome {
        report,
        set_verification,
        summary,
        exit_code,
    })
}

pub fn run_scenario(s: &Scenario, out_dir: &Path) -> Result<RunOutcome> {
    run_prepared(&s.prepare()?, out_dir)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Error::Parameter(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Parameter(e.to_string()))?;
    }
    Ok(())
}

// A closed pipe (`ddsim ... | head`) is not an error.
fn print_line(text: &str) {
    let _ = writeln!(io::stdout().lock(), "{text}");
}

fn report_run(outcome: &RunOutcome, out: &Path) {
    let f = &outcome.report.pass_flags;
    print_line(&format!(
        "{}: bound1={} bound2={} lambda_rate={:?} decoupling={:?} trend={:?} set={} -> {}",
        outcome.summary["name"].as_str().unwrap_or(""),
        f.bound1,
        f.bound2,
        f.lambda_rate,
        f.decoupling,
        f.trend,
        outcome.set_verification.passed,
        out.display()
    ));
}

/// Executes a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let result = (|| -> Result<i32> {
        configure_threads()?;
        match cli.command {
            Command::Run { scenario, out } => {
                let outcome = run_scenario(&load_scenario(&scenario)?, &out)?;
                report_run(&outcome, &out);
                Ok(outcome.exit_code)
            }
            Command::Preset { name, emit, out } => {
                let s = preset(&name)?;
                if emit {
                    print_line(&s.to_json());
                    return Ok(EXIT_OK);
                }
                let out = out.unwrap_or_else(|| PathBuf::from("out").join(&name));
                let outcome = run_scenario(&s, &out)?;
                report_run(&outcome, &out);
                Ok(outcome.exit_code)
            }
            Command::VerifySet { scenario } => {
                let p = load_scenario(&scenario)?.prepare()?;
                let v = verify_decoupling_set(&p.set)?;
                let parity = parity_check(&p);
                let passed = v.passed && parity.is_none_or(|d| d == 0.0);
                let out = json!({"passed": passed, "max_violation": v.max_violation, "parity_defect": parity});
                print_line(&serde_json::to_string_pretty(&out)?);
                Ok(if passed { EXIT_OK } else { EXIT_BOUND })
            }
            Command::Euler { scenario } => {
                let p = load_scenario(&scenario)?.prepare()?;
                print_line(&serde_json::to_string(p.cycle.visits())?);
                Ok(EXIT_OK)
            }
        }
    })();
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        EXIT_INPUT
    })
}
