//! `lacuna <command> --config <path> [--set key=value]...`
//!
//! Exit codes: 0 ok, 2 the checked property failed, 1 any error.

mod commands;
mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use commands::Outcome;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "lacuna", version, about = "Experiments on lacunary sums, discrepancy and resonance counts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML or JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override a config entry, e.g. `--set params.n=100`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the Hadamard gap condition on a finite window.
    GapCheck(RunArgs),
    /// Exact variance of the partial sums for N = 1..n.
    Sigma2(RunArgs),
    /// Resonance pair counts.
    Dio(RunArgs),
    /// Star and extreme discrepancy of a point set or an orbit.
    Disc(RunArgs),
    /// Normalized partial sums against limit laws.
    Clt(RunArgs),
    /// Iterated-logarithm paths of the partial sums.
    Lil(RunArgs),
    /// Iterated-logarithm paths of the orbit discrepancy.
    LilDisc(RunArgs),
    /// Koksma-Hlawka inequality on a point set.
    Kh(RunArgs),
    /// Block schedule and martingale increments.
    Martingale(RunArgs),
}

impl Command {
    fn split(&self) -> (&'static str, &RunArgs) {
        match self {
            Command::GapCheck(a) => ("gap-check", a),
            Command::Sigma2(a) => ("sigma2", a),
            Command::Dio(a) => ("dio", a),
            Command::Disc(a) => ("disc", a),
            Command::Clt(a) => ("clt", a),
            Command::Lil(a) => ("lil", a),
            Command::LilDisc(a) => ("lil-disc", a),
            Command::Kh(a) => ("kh", a),
            Command::Martingale(a) => ("martingale", a),
        }
    }
}

fn write_outputs(cfg: &RunConfig, command: &str, out: &Outcome) -> Result<(PathBuf, PathBuf)> {
    let dir = Path::new(&cfg.out);
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let report = json!({
        "command": command,
        "status": if out.failed { "fail" } else { "ok" },
        "config": cfg,
        "result": out.result,
    });
    let report_path = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(&report_path, text).with_context(|| format!("writing {}", report_path.display()))?;

    let table_path = dir.join("table.csv");
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&table_path)
        .with_context(|| format!("writing {}", table_path.display()))?;
    w.write_record(&out.header)?;
    for row in &out.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok((report_path, table_path))
}

fn execute(command: &str, args: &RunArgs) -> Result<bool> {
    let t0 = Instant::now();
    let cfg = config::load(&args.config, &args.set, command)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .context("starting worker threads")?;
    let out = pool.install(|| commands::run(command, &cfg))?;
    let (report, table) = write_outputs(&cfg, command, &out)?;
    let mut err = std::io::stderr();
    let _ = writeln!(
        err,
        "lacuna {command}: {} -> {}, {} [{:.3}s]",
        if out.failed { "FAIL" } else { "ok" },
        report.display(),
        table.display(),
        t0.elapsed().as_secs_f64()
    );
    Ok(!out.failed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (name, args) = cli.command.split();
    debug_assert!(commands::COMMANDS.contains(&name));
    match execute(name, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
