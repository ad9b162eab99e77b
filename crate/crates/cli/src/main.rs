use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use varibc_core::config::{parse_config, RunConfig};
use varibc_core::par::with_threads;
use varibc_core::run::{mesh_only, replay_to, run, RunOutput};
use varibc_core::{verify, Error, Result};

/// Topology optimization of compliant mechanisms with movable supports and actuator.
#[derive(Parser)]
#[command(name = "varibc", version)]
struct Cli {
    /// Worker threads; 0 lets the runtime decide.
    #[arg(long, global = true, env = "VARIBC_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an optimization and write all result files.
    Run {
        config: PathBuf,
        /// Output directory, replacing the config's `output_dir`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Run with fixed and with variable boundary conditions, into
        /// `fixed/` and `variable/` subdirectories.
        #[arg(long)]
        compare: bool,
    },
    /// Run the built-in self-checks and print a pass/fail table.
    Verify,
    /// Mesh the configured domain only.
    Mesh {
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Re-solve a stored design in small displacement increments.
    Replay {
        /// A `design.json` written by `run`.
        summary: PathBuf,
        #[arg(long, default_value_t = 50)]
        increments: usize,
        /// Defaults to the summary's directory.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write the per-substep solver trace.
        #[arg(long)]
        trace: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads;
    match with_threads(threads, move || dispatch(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}

fn error_line(e: &Error) -> String {
    let message = e.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    format!("error kind={} message=\"{message}\"", e.kind())
}

fn load(config: &Path, output: Option<PathBuf>) -> Result<RunConfig> {
    let mut c = parse_config(config)?;
    if let Some(dir) = output {
        c.output_dir = dir;
    }
    Ok(c)
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run {
            config,
            output,
            compare,
        } => {
            let c = load(&config, output)?;
            if compare {
                let mut results = Vec::new();
                for (name, fixed) in [("fixed", true), ("variable", false)] {
                    let mut cc = c.clone();
                    cc.fixed_bcs = Some(fixed);
                    cc.output_dir = c.output_dir.join(name);
                    let out = run(&cc)?;
                    report(&out);
                    results.push(out.result.evaluation.objective);
                }
                println!(
                    "objective fixed {:.6e}, variable {:.6e}",
                    results[0], results[1]
                );
            } else {
                report(&run(&c)?);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify => {
            let checks = verify::run_checks();
            let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
            for c in &checks {
                println!(
                    "{:<width$}  {}  {:>7.2} s  {}",
                    c.name,
                    if c.passed { "PASS" } else { "FAIL" },
                    c.seconds,
                    c.detail
                );
            }
            if checks.iter().all(|c| c.passed) {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("error kind=VerifyFailed message=\"one or more checks failed\"");
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Mesh { config, output } => {
            let c = load(&config, output)?;
            let mesh = mesh_only(&c)?;
            println!(
                "{} nodes, {} elements -> {}",
                mesh.num_nodes(),
                mesh.num_elements(),
                c.output_dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay {
            summary,
            increments,
            output,
            trace,
        } => {
            let dir = output.unwrap_or_else(|| summary.parent().map(Path::to_path_buf).unwrap_or_default());
            let r = replay_to(&summary, increments, &dir, trace)?;
            for (i, p) in r.paths.iter().enumerate() {
                let forces: Vec<f64> = p
                    .states
                    .iter()
                    .map(|s| varibc_core::problems::f_in(s.lambda, r.design.theta))
                    .collect();
                let max = forces.iter().copied().fold(f64::MIN, f64::max);
                let min = forces.iter().copied().fold(f64::MAX, f64::min);
                println!("case {}: {} states, F_in in [{min:.4e}, {max:.4e}] N", i + 1, p.states.len());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn report(out: &RunOutput) {
    let r = &out.result;
    let last = r.history.last().map_or(0, |h| h.iteration);
    let worst = r
        .evaluation
        .constraints
        .iter()
        .map(|c| c.normalized)
        .fold(f64::NEG_INFINITY, f64::max);
    println!(
        "{:?} after {last} iterations: objective {:.6e}, largest normalized constraint {worst:.3e} -> {}",
        r.stop,
        r.evaluation.objective,
        out.output_dir.display()
    );
}
