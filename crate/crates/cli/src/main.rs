//! `mhe-lab`: run estimator experiments and evaluate certificate constants.
//!
//! Exit codes: 0 success, 1 simulation failure, 2 bad configuration,
//! 3 horizon condition not satisfied (`check-bound`).

mod bound;
mod config;
mod export;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mhe_core::sim::{self, SimOptions};
use mhe_core::theory::{self, DetectabilityMatrices};

use config::{FlagOverrides, RunConfig, ScenarioKind};
use export::Manifest;

const EXIT_SIMULATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_CONDITION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "mhe-lab",
    version,
    about = "Moving horizon estimation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write one CSV per seed plus a manifest.
    Run {
        /// JSON run configuration, or a manifest from an earlier run.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        scenario: Option<ScenarioKind>,
        /// Pulse period of the academic scenario.
        #[arg(long)]
        period: Option<usize>,
        /// Number of pulse periods of the academic scenario.
        #[arg(long)]
        cycles: Option<usize>,
        /// Seeds as `1..5`, `1,3,4` or a single value.
        #[arg(long)]
        seeds: Option<String>,
        /// Output directory (overrides MHE_LAB_OUT and the config file).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also start each window from the true trajectory.
        #[arg(long)]
        reference_fallback: bool,
    },
    /// Evaluate the horizon condition and the error-bound constants.
    CheckBound {
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value = "I1")]
        p1: String,
        #[arg(long, default_value = "I1")]
        p2x: String,
        #[arg(long, default_value = "I1")]
        p2theta: String,
        #[arg(long, default_value = "I1")]
        q: String,
        #[arg(long, default_value = "I1")]
        r: String,
        /// ‖θ̄₀ − θ‖.
        #[arg(long, default_value_t = 1.0)]
        theta_error: f64,
    },
    /// List built-in scenarios.
    ListScenarios,
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn cmd_run(file: Option<PathBuf>, flags: FlagOverrides) -> ExitCode {
    let file = match file.map(|p| RunConfig::load(&p)).transpose() {
        Ok(f) => f,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let env_out = std::env::var_os("MHE_LAB_OUT").map(PathBuf::from);
    let run = match config::resolve(file, flags, env_out) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if let Err(e) = std::fs::create_dir_all(&run.out) {
        return fail(
            EXIT_CONFIG,
            format!("cannot create {}: {e}", run.out.display()),
        );
    }

    let options = SimOptions {
        reference_fallback: run.reference_fallback,
    };
    let results = mhe_core::par::map(&run.seeds, |seed| {
        sim::simulate(&run.scenario.clone().with_seed(*seed), options)
    });

    let mut summaries = Vec::new();
    let mut error = None;
    for (seed, result) in run.seeds.iter().zip(results) {
        match result {
            Ok(record) => {
                let path = run.out.join(export::csv_name(&record));
                if let Err(e) = export::write_csv(&record, &path) {
                    error.get_or_insert(format!("writing {}: {e}", path.display()));
                    continue;
                }
                summaries.push(export::summarize(&record));
            }
            Err(e) => {
                error.get_or_insert(format!("seed {seed}: {e}"));
            }
        }
    }

    let echo = run.echo();
    let manifest = Manifest {
        config: &echo,
        aggregate: export::aggregate(&summaries),
        runs: &summaries,
        error: error.clone(),
    };
    let manifest_path = run.out.join(export::manifest_name(&run.scenario.name));
    if let Err(e) = export::write_manifest(&manifest_path, &manifest) {
        return fail(
            EXIT_SIMULATION,
            format!("writing {}: {e}", manifest_path.display()),
        );
    }
    for s in &summaries {
        println!("{}", run.out.join(&s.csv).display());
    }
    println!("{}", manifest_path.display());
    match error {
        Some(e) => fail(EXIT_SIMULATION, e),
        None => ExitCode::SUCCESS,
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_check_bound(
    eta: f64,
    horizon: usize,
    p1: &str,
    p2x: &str,
    p2theta: &str,
    q: &str,
    r: &str,
    theta_error: f64,
) -> ExitCode {
    let parsed = [p1, p2x, p2theta, q, r]
        .iter()
        .map(|s| bound::parse_matrix(s))
        .collect::<Result<Vec<_>, _>>();
    let mut m = match parsed {
        Ok(m) => m.into_iter(),
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let matrices = DetectabilityMatrices {
        p1: m.next().expect("five matrices"),
        p2_x: m.next().expect("five matrices"),
        p2_theta: m.next().expect("five matrices"),
        q: m.next().expect("five matrices"),
        r: m.next().expect("five matrices"),
        discount: eta,
    };
    if !(theta_error >= 0.0) {
        return fail(EXIT_CONFIG, "--theta-error must be non-negative");
    }
    let constants = match theory::theorem_constants(&matrices, horizon, theta_error) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    print!("{}", bound::render_text(&constants));
    println!(
        "{}",
        serde_json::to_string(&constants).expect("constants serialize")
    );
    if constants.contraction.satisfied {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CONDITION)
    }
}

fn cmd_list_scenarios() -> ExitCode {
    let academic =
        sim::academic_scenario(sim::ACADEMIC_DEFAULT_PERIOD, sim::ACADEMIC_DEFAULT_CYCLES);
    let car = sim::car_scenario(1);
    for (s, note) in [
        (
            &academic,
            "scalar system, constant sensor bias, sparse pulse input (--period, --cycles)",
        ),
        (
            &car,
            "bicycle model with Pacejka tires, right turn on [3 s, 6 s)",
        ),
    ] {
        let labels: Vec<&str> = s.estimators.iter().map(|e| e.label.as_str()).collect();
        println!(
            "{:<10} {:>5} steps  estimators: {:<30} {note}",
            s.name,
            s.steps,
            labels.join(",")
        );
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run {
            config,
            scenario,
            period,
            cycles,
            seeds,
            out,
            reference_fallback,
        } => {
            let seeds = match seeds.as_deref().map(config::parse_seeds).transpose() {
                Ok(s) => s,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            cmd_run(
                config,
                FlagOverrides {
                    scenario,
                    period,
                    cycles,
                    seeds,
                    out,
                    reference_fallback,
                },
            )
        }
        Command::CheckBound {
            eta,
            horizon,
            p1,
            p2x,
            p2theta,
            q,
            r,
            theta_error,
        } => cmd_check_bound(eta, horizon, &p1, &p2x, &p2theta, &q, &r, theta_error),
        Command::ListScenarios => cmd_list_scenarios(),
    }
}
