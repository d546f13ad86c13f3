//! `encircle`: run, sweep and check range-only encirclement scenarios.
//!
//! Exit codes: 0 success, 1 failed condition check or I/O error, 2 config
//! error (nothing written), 3 numerical abort.

mod config;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use encircle_core::analysis::{self, AnalysisReport};
use encircle_core::harness::{self, Record, Scenario};
use encircle_core::signals::RefCommand;
use encircle_core::Error as CoreError;
use serde::Serialize;

use config::ConfigFile;

#[derive(Parser)]
#[command(name = "encircle", version, about = "Range-only target encirclement simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write its trajectory and analysis.
    Run {
        config: PathBuf,
        /// Output directory.
        #[arg(long, env = "ENCIRCLE_OUT", default_value = ".")]
        out: PathBuf,
        /// Override the noise seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the integration step (s).
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Run the scenario once per value of one parameter.
    Sweep {
        config: PathBuf,
        /// Parameter name, e.g. k2, rc, sigma, seed or initial_state.
        #[arg(long)]
        param: String,
        /// Comma-separated values; initial states are "x y theta".
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long, env = "ENCIRCLE_OUT", default_value = ".")]
        out: PathBuf,
    },
    /// Print the gain-condition report without running.
    Check { config: PathBuf },
}

enum Failure {
    Check,
    Io(anyhow::Error),
    Config(anyhow::Error),
    Numerical(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Check | Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

fn from_run(e: CoreError) -> Failure {
    match e {
        CoreError::NumericalAbort { .. } | CoreError::NonFinite(_) | CoreError::CoincidentTarget { .. } => {
            Failure::Numerical(e.into())
        }
        CoreError::Io(_) => Failure::Io(e.into()),
        other => Failure::Config(other.into()),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into())
}

#[derive(Serialize)]
struct RunSummary<'a> {
    scenario: &'a Scenario,
    analysis: &'a AnalysisReport,
    final_record: Option<&'a Record>,
}

fn cmd_run(path: &Path, out: &Path, seed: Option<u64>, dt: Option<f64>) -> Result<(), Failure> {
    let mut cfg = ConfigFile::load(path).map_err(Failure::Config)?;
    if let Some(seed) = seed {
        cfg.noise.seed = seed;
    }
    if let Some(dt) = dt {
        cfg.dt = dt;
    }
    let sc = cfg.scenario().map_err(Failure::Config)?;
    let log = harness::run(&sc).map_err(from_run)?;
    let report = analysis::analyze(&log, &cfg.analysis.resolve());

    let io = |e: anyhow::Error| Failure::Io(e);
    fs::create_dir_all(out)
        .with_context(|| format!("cannot create {}", out.display()))
        .map_err(io)?;
    let name = stem(path);
    let csv_path = out.join(format!("{name}.csv"));
    let file = File::create(&csv_path)
        .with_context(|| format!("cannot create {}", csv_path.display()))
        .map_err(io)?;
    log.write_csv(BufWriter::new(file)).map_err(|e| io(e.into()))?;

    if cfg.jsonl {
        let p = out.join(format!("{name}.jsonl"));
        let file = File::create(&p)
            .with_context(|| format!("cannot create {}", p.display()))
            .map_err(io)?;
        log.write_jsonl(BufWriter::new(file)).map_err(|e| io(e.into()))?;
    }

    let json_path = out.join(format!("{name}.analysis.json"));
    let summary = RunSummary {
        scenario: &sc,
        analysis: &report,
        final_record: log.last(),
    };
    let file = File::create(&json_path)
        .with_context(|| format!("cannot create {}", json_path.display()))
        .map_err(io)?;
    serde_json::to_writer_pretty(BufWriter::new(file), &summary)
        .context("cannot write analysis")
        .map_err(io)?;

    println!("wrote {} ({} records)", csv_path.display(), log.records.len());
    println!("wrote {}", json_path.display());
    if let Some(last) = log.last() {
        println!("final: t = {:.3} d = {:.6} phi = {:.6} e1 = {:.3e}", last.t, last.d_true, last.phi, last.e1);
    }
    println!(
        "conditions {}, rho = {:.5}, fitted decay = {}",
        if report.conditions.pass() { "pass" } else { "FAIL" },
        report.linearization.rho,
        report.decay_rate.map_or("n/a".into(), |r| format!("{r:.5}"))
    );
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    value: String,
    t1: Option<f64>,
    settle_time: Option<f64>,
    steady_state_error: Option<f64>,
    rho_hat: Option<f64>,
    oscillation: Option<bool>,
}

fn cmd_sweep(path: &Path, param: &str, values: &str, out: &Path) -> Result<(), Failure> {
    let base = ConfigFile::load(path).map_err(Failure::Config)?;
    let values: Vec<&str> = values.split(',').map(str::trim).collect();
    if values.iter().all(|v| v.is_empty()) {
        return Err(Failure::Config(anyhow!("--values is empty")));
    }
    if values.iter().any(|v| v.is_empty()) {
        return Err(Failure::Config(anyhow!("--values has an empty entry")));
    }
    let mut scenarios = Vec::with_capacity(values.len());
    for v in &values {
        let mut cfg = base.clone();
        cfg.set(param, v).map_err(Failure::Config)?;
        scenarios.push(cfg.scenario().map_err(Failure::Config)?);
    }

    let results = harness::run_batch(&scenarios, &base.analysis.resolve());
    let mut rows = Vec::with_capacity(results.len());
    let mut aborted = None;
    for (v, res) in values.iter().zip(results) {
        match res {
            Ok((_, report)) => rows.push(SweepRow {
                value: v.to_string(),
                t1: report.phases.and_then(|p| p.t1),
                settle_time: report.settle_time,
                steady_state_error: report.steady_state_error,
                rho_hat: report.decay_rate,
                oscillation: Some(report.oscillation),
            }),
            Err(e) => {
                eprintln!("{param} = {v}: {e}");
                rows.push(SweepRow {
                    value: v.to_string(),
                    t1: None,
                    settle_time: None,
                    steady_state_error: None,
                    rho_hat: None,
                    oscillation: None,
                });
                aborted.get_or_insert(from_run(e));
            }
        }
    }

    let io = |e: anyhow::Error| Failure::Io(e);
    fs::create_dir_all(out)
        .with_context(|| format!("cannot create {}", out.display()))
        .map_err(io)?;
    let summary_path = out.join(format!("{}.sweep_{param}.csv", stem(path)));
    let mut w = csv::Writer::from_path(&summary_path)
        .with_context(|| format!("cannot create {}", summary_path.display()))
        .map_err(io)?;
    for row in &rows {
        w.serialize(row).context("cannot write summary").map_err(io)?;
    }
    w.flush().context("cannot write summary").map_err(io)?;

    let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!("{:>16} {:>9} {:>9} {:>11} {:>9} {:>6}", param, "t1", "settle", "ss_error", "rho_hat", "osc");
    for r in &rows {
        println!(
            "{:>16} {:>9} {:>9} {:>11} {:>9} {:>6}",
            r.value,
            fmt(r.t1),
            fmt(r.settle_time),
            r.steady_state_error.map_or("-".to_string(), |v| format!("{v:.2e}")),
            fmt(r.rho_hat),
            r.oscillation.map_or("-".to_string(), |o| o.to_string())
        );
    }
    println!("wrote {}", summary_path.display());
    match aborted {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn cmd_check(path: &Path) -> Result<(), Failure> {
    let cfg = ConfigFile::load(path).map_err(Failure::Config)?;
    let sc = cfg.scenario().map_err(Failure::Config)?;
    let report = encircle_core::controller::ConditionReport::for_command(&sc.params, &sc.command);
    let lin = analysis::linearize(&sc.params);
    match &sc.command {
        RefCommand::Constant { rc } => println!("constant radius rc = {rc}"),
        cmd => {
            let (rv, ra) = cmd.bounds();
            println!("time-varying radius, |r'| <= {rv:.4}, |r''| <= {ra:.4}");
        }
    }
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    println!("linearized rate rho = {:.5} (delta = {:.4})", lin.rho, lin.delta);
    if report.pass() {
        println!("conditions: pass");
        Ok(())
    } else {
        println!("conditions: FAIL");
        Err(Failure::Check)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out, seed, dt } => cmd_run(config, out, *seed, *dt),
        Command::Sweep { config, param, values, out } => cmd_sweep(config, param, values, out),
        Command::Check { config } => cmd_check(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Check => {}
                Failure::Io(e) => eprintln!("error: {e:#}"),
                Failure::Config(e) => eprintln!("config error: {e:#}"),
                Failure::Numerical(e) => eprintln!("numerical abort: {e:#}"),
            }
            ExitCode::from(f.code())
        }
    }
}
