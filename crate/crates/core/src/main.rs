use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use vectorhost::config::Scenario;
use vectorhost::dynamics::run_with;
use vectorhost::output;
use vectorhost::steady::{detect_limits, solve_rho_star_with, Thresholds};
use vectorhost::verify::verify;

#[derive(Parser)]
#[command(name = "vectorhost", version, about = "Vector-host epidemic simulator with infection-age structure")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate to t_end and write series.csv, final_state.csv and report.txt.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the vector steady state and write rho_star.csv.
    Steady {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the oracle suite; exit 0 iff every check passes.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<Scenario> {
    Scenario::load(path).with_context(|| format!("loading {}", path.display()))
}

fn run(config: &PathBuf, out: &PathBuf) -> Result<bool> {
    let scenario = load(config)?;
    let model = scenario.model()?;
    let tol = &scenario.tolerances;
    let rho = solve_rho_star_with(&scenario.coeffs, &scenario.grid, tol.steady_tol, tol.cg_tol)?;
    let state = scenario.initial_state(&model)?;
    info!("running {} steps", scenario.steps);
    let mut clamped = false;
    let (series, end) = run_with(&model, state, &rho.rho, scenario.t_end(), scenario.output_every, |_, r| {
        clamped |= r.is_some_and(|r| r.clamped);
        Ok(())
    })?;
    let report = detect_limits(&series, &rho.rho, scenario.coeffs.sigma2_norm(), &Thresholds::default());
    output::write_series(out, &series)?;
    output::write_final_state(out, &scenario.grid, &end)?;
    output::write_report(out, &output::report_text(&scenario, &rho, &report, clamped), &report)?;
    println!("wrote {}", out.display());
    Ok(true)
}

fn steady(config: &PathBuf, out: &PathBuf) -> Result<bool> {
    let scenario = load(config)?;
    let tol = &scenario.tolerances;
    let rho = solve_rho_star_with(&scenario.coeffs, &scenario.grid, tol.steady_tol, tol.cg_tol)?;
    let bound = scenario.coeffs.beta_norm() / scenario.coeffs.m_star;
    output::write_steady(out, &scenario.grid, &rho, bound)?;
    println!("residual_linf = {:.3e}", rho.residual);
    Ok(true)
}

fn verify_cmd(config: &PathBuf) -> Result<bool> {
    let scenario = load(config)?;
    let report = verify(&scenario)?;
    print!("{report}");
    Ok(report.all_passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { config, out } => run(config, out),
        Command::Steady { config, out } => steady(config, out),
        Command::Verify { config } => verify_cmd(config),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
