use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use sislab::scenario::{self, load_axes, load_scenario, run_scenario, ScenarioError};

#[derive(Parser)]
#[command(
    name = "sislab",
    version,
    about = "Spatial SIS epidemic simulator with nonlinear incidence"
)]
struct Cli {
    /// Output root directory.
    #[arg(long, global = true, env = "SISLAB_OUT", default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its time series, snapshots and summary.
    Run { file: PathBuf },
    /// Run every combination of a template scenario over the given axes.
    Sweep {
        template: PathBuf,
        axes: PathBuf,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Validate a scenario and print its certificate and prediction.
    Check { file: PathBuf },
    /// Print R0 and the principal eigenvalue of a scenario.
    R0 { file: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn dispatch(cli: Cli) -> Result<bool, ScenarioError> {
    match cli.command {
        Command::Run { file } => {
            let sc = load_scenario(&file)?;
            let dir = cli.out.join(&sc.id);
            let summary = run_scenario(&sc, &dir)?;
            println!(
                "{}: {} at t = {}, mass-balance residual {:e}, artifacts in {}",
                summary.id,
                summary.stop_reason.label(),
                summary.final_t,
                summary.mass_balance_residual,
                dir.display()
            );
            for e in &summary.errors {
                eprintln!("  {e}");
            }
            Ok(summary.success)
        }
        Command::Sweep { template, axes, jobs } => {
            let text = fs::read_to_string(&template).map_err(|source| ScenarioError::Io {
                path: template.clone(),
                source,
            })?;
            let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| ScenarioError::Parse {
                path: template.display().to_string(),
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
            let axes = load_axes(&axes)?;
            let rows = scenario::sweep(&doc, &axes, jobs, &cli.out)?;
            let failed = rows
                .iter()
                .filter(|r| !matches!(&r.result, Ok(s) if s.success))
                .count();
            println!(
                "{} runs, {} failed, table in {}",
                rows.len(),
                failed,
                cli.out.join("sweep.csv").display()
            );
            Ok(failed == 0)
        }
        Command::Check { file } => {
            let sc = load_scenario(&file)?;
            let prep = sc.prepare()?;
            let mut checked = sc.clone();
            checked.analyses.retain(|a| {
                matches!(
                    a,
                    scenario::Analysis::Certificate | scenario::Analysis::Prediction
                )
            });
            let report = scenario::static_analyses(&scenario::Prepared {
                scenario: checked,
                ..prep
            });
            print_json(&json!({
                "id": sc.id,
                "scenario": sc,
                "certificate": report.certificate,
                "prediction": report.prediction,
                "spectral": report.spectral,
                "errors": report.errors,
            }));
            Ok(report.errors.is_empty())
        }
        Command::R0 { file } => {
            let sc = load_scenario(&file)?;
            let prep = sc.prepare()?;
            let spectral = scenario::spectral_for(&prep)?;
            print_json(&json!({
                "id": sc.id,
                "r0": spectral.r0,
                "lambda_star": spectral.lambda_star,
                "iterations": spectral.iterations,
            }));
            Ok(true)
        }
    }
}
