use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use datakit::analysis::{render_text, stats_report, validate_dataset};
use datakit::pipeline::{generate, ConfigError, GenerationConfig, Progress};

/// Environment variable holding the default worker count.
const WORKERS_ENV: &str = "DATAKIT_WORKERS";

#[derive(Parser)]
#[command(name = "datakit", version, about = "Generate, validate and summarize power-flow datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from a YAML config.
    Generate {
        config: PathBuf,
        /// Override a config key, e.g. `--set seed=7` or `--set solver.pf_tol=1e-10`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Worker threads; beats the config file and the environment.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Recompute every stored quantity of a dataset and report mismatches.
    Validate { dataset: PathBuf },
    /// Write stats.txt and stats.json for a dataset.
    Stats { dataset: PathBuf },
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn worker_count(flag: Option<usize>, config: Option<usize>) -> usize {
    flag.or(config)
        .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .or_else(|| std::thread::available_parallelism().ok().map(usize::from))
        .unwrap_or(1)
        .max(1)
}

fn run_generate(path: PathBuf, overrides: Vec<String>, workers: Option<usize>) -> ExitCode {
    let config = match GenerationConfig::load(&path, &overrides) {
        Ok(c) => c,
        Err(e @ ConfigError::Schema(_)) => return fail(2, e),
        Err(e) => return fail(1, e.to_string().replace('\n', "; ")),
    };
    let workers = worker_count(workers, config.workers);
    let started = Instant::now();
    let progress = |p: &Progress| {
        eprintln!(
            "scenario {} done ({}/{}, {:.1}s)",
            p.scenario,
            p.completed,
            p.total,
            started.elapsed().as_secs_f64()
        );
    };
    match generate(&config, workers, &progress) {
        Ok(data) => {
            let s = &data.manifest.summary;
            println!(
                "samples: {}  converged: {}  convergence rate: {:.2}%  wall time: {:.2}s  output: {}",
                s.samples,
                s.converged,
                100.0 * s.convergence_rate,
                started.elapsed().as_secs_f64(),
                config.output_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(1, e.to_string().replace('\n', "; ")),
    }
}

fn run_validate(dir: PathBuf) -> ExitCode {
    match validate_dataset(&dir) {
        Ok(report) if report.passed() => {
            println!(
                "ok: {} samples, {} checked, max flow error {:e} p.u., max balance residual {:e} p.u. (limit {:e})",
                report.samples, report.checked, report.max_flow_error, report.max_balance_residual, report.balance_limit
            );
            ExitCode::SUCCESS
        }
        Ok(report) => {
            let samples: BTreeSet<_> = report.failures.iter().map(|f| (f.scenario_id, f.topology_id)).collect();
            let checks: BTreeSet<_> = report.failures.iter().map(|f| f.check).collect();
            for f in &report.failures {
                log::debug!("({}, {}) {}: {}", f.scenario_id, f.topology_id, f.check, f.detail);
            }
            let list: Vec<String> = samples.iter().map(|(t, j)| format!("({t},{j})")).collect();
            fail(
                1,
                format!(
                    "validation failed for {} sample(s) [{}] in checks [{}]",
                    samples.len(),
                    list.join(" "),
                    checks.into_iter().collect::<Vec<_>>().join(",")
                ),
            )
        }
        Err(e) => fail(1, e.to_string().replace('\n', "; ")),
    }
}

fn run_stats(dir: PathBuf) -> ExitCode {
    match stats_report(&dir) {
        Ok(report) => {
            print!("{}", render_text(&report));
            ExitCode::SUCCESS
        }
        Err(e) => fail(1, e.to_string().replace('\n', "; ")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Generate { config, overrides, workers } => run_generate(config, overrides, workers),
        Command::Validate { dataset } => run_validate(dataset),
        Command::Stats { dataset } => run_stats(dataset),
    }
}
