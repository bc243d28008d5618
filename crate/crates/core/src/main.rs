use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fuse_core::harness::{self, ExperimentOutcome};
use fuse_core::FuseError;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUN: u8 = 2;

/// Two-model diffusion fusion on analytic scenes.
#[derive(Parser)]
#[command(name = "fuse", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the base configuration once per seed, ignoring sweep axes.
    Run {
        config: PathBuf,
        /// Output root; overrides FUSE_OUT and the config's out_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every point of the sweep once per seed.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the metric summary of a run directory or an experiment root.
    Inspect { dir: PathBuf },
    /// Write a built-in fixture (scenes plus an experiment file).
    ExportFixture {
        /// `two-region` or `gaussian`.
        name: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn fail(code: u8, err: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(code)
}

fn code_for(err: &FuseError) -> u8 {
    match err.root() {
        FuseError::Io { .. } => EXIT_RUN,
        _ => EXIT_CONFIG,
    }
}

fn experiment(config: &Path, out: Option<PathBuf>, sweep: bool) -> ExitCode {
    let spec = match harness::parse_config(config) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_CONFIG, format!("{}: {e}", config.display())),
    };
    let base = config.parent().unwrap_or(Path::new("."));
    let result = match out {
        Some(dir) => harness::run_experiment_in(&spec, base, sweep, &dir),
        None => harness::run_experiment(&spec, base, sweep),
    };
    let outcome: ExperimentOutcome = match result {
        Ok(o) => o,
        Err(e) => return fail(code_for(&e), e),
    };
    for r in &outcome.records {
        if let Err(msg) = &r.outcome {
            eprintln!("run {} failed: {msg}", r.plan.id);
        }
    }
    let total = outcome.records.len();
    println!(
        "{} of {total} runs completed; report at {}",
        total - outcome.failures(),
        outcome.out_dir.join("report.csv").display()
    );
    if outcome.all_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_RUN)
    }
}

fn inspect(dir: &Path) -> ExitCode {
    if dir.join("metrics.json").exists() {
        return match harness::load_report(dir) {
            Ok(r) => {
                print!("{}", harness::summarize(&r));
                ExitCode::SUCCESS
            }
            Err(e) => fail(EXIT_CONFIG, e),
        };
    }
    let report = dir.join("report.csv");
    let text = match std::fs::read_to_string(&report) {
        Ok(t) => t,
        Err(_) => {
            return fail(
                EXIT_CONFIG,
                format!("{} holds neither metrics.json nor report.csv", dir.display()),
            )
        }
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let rows: Vec<&str> = lines.collect();
    let status = header.iter().position(|h| *h == "status");
    let failed = rows
        .iter()
        .filter(|r| status.and_then(|i| r.split(',').nth(i)) == Some("failed"))
        .count();
    println!("{} runs, {failed} failed", rows.len());
    for row in rows {
        let run = row.split(',').next().unwrap_or_default();
        match harness::load_report(&dir.join(run)) {
            Ok(r) => {
                println!("{run}:");
                for line in harness::summarize(&r).lines() {
                    println!("  {line}");
                }
            }
            Err(_) => println!("{run}: no metrics"),
        }
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run { config, out } => experiment(&config, out, false),
        Command::Sweep { config, out } => experiment(&config, out, true),
        Command::Inspect { dir } => inspect(&dir),
        Command::ExportFixture { name, out } => match harness::export_fixture(&name, &out) {
            Ok(files) => {
                for f in files {
                    println!("{}", f.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(code_for(&e), e),
        },
    }
}
