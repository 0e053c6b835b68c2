use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use graddiv_cli::config::{ConditioningConfig, ExperimentConfig};
use graddiv_cli::{commands, Overrides};

#[derive(Parser)]
#[command(name = "graddiv", version, about = "Taylor-Hood Navier-Stokes runs with sparse grad-div stabilization")]
struct Cli {
    /// Output directory (overrides GRADDIV_OUT_DIR and the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Stop every run after this many steps.
    #[arg(long, global = true)]
    max_steps: Option<usize>,
    /// Force single-threaded execution.
    #[arg(long, global = true)]
    serial: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (gamma, alpha) pair of an experiment config.
    Run { config: PathBuf },
    /// Estimate cond2 of the Step-2 block over a sweep.
    CondSweep { config: PathBuf },
    /// Print mesh statistics as JSON. Accepts a .msh path or gen:square:8.
    MeshInfo { mesh: String },
    /// Recompute summary CSVs from their time series.
    CrossCheck { dir: PathBuf },
}

fn read_config(path: &Path) -> Result<(String, PathBuf)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((text, base))
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(t) = std::env::var("GRADDIV_THREADS").ok().filter(|s| !s.is_empty()) {
        let n: usize = t.parse().with_context(|| format!("GRADDIV_THREADS={t}"))?;
        graddiv::par::configure_threads(n).map_err(anyhow::Error::msg)?;
    }
    let ov = Overrides {
        out: cli.out,
        max_steps: cli.max_steps,
        serial: cli.serial,
    };
    match cli.command {
        Command::Run { config } => {
            let (text, base) = read_config(&config)?;
            let cfg = ExperimentConfig::from_json(&text).with_context(|| config.display().to_string())?;
            let report = commands::run_experiment(&cfg, &base, &ov)?;
            for r in &report.runs {
                let last = r.outcome.records.last();
                println!(
                    "gamma={:?} alpha={:?} steps={} final_ke={:?} final_div={:?}{}",
                    r.gamma,
                    r.alpha,
                    last.map_or(0, |x| x.n),
                    last.map_or(f64::NAN, |x| x.kinetic_energy),
                    last.map_or(f64::NAN, |x| x.div_norm),
                    r.outcome.blowup_step.map(|s| format!(" blowup_step={s}")).unwrap_or_default()
                );
            }
            println!("summary: {}", report.summary_file.display());
            Ok(true)
        }
        Command::CondSweep { config } => {
            let (text, base) = read_config(&config)?;
            let cfg = ConditioningConfig::from_json(&text).with_context(|| config.display().to_string())?;
            let (rows, path) = commands::cond_sweep(&cfg, &base, &ov)?;
            for (n, r) in &rows {
                println!("n={n} s={:?} cond2={:.6e} converged={}", r.gamma_plus_alpha, r.cond2, r.converged);
            }
            println!("written: {}", path.display());
            Ok(true)
        }
        Command::MeshInfo { mesh } => {
            let info = commands::mesh_info(&mesh)?;
            println!("{}", serde_json::to_string_pretty(&info)?);
            Ok(true)
        }
        Command::CrossCheck { dir } => {
            let report = commands::cross_check(&dir)?;
            for m in &report.mismatches {
                eprintln!("mismatch: {m}");
            }
            println!("{} rows checked, {} mismatches", report.rows_checked, report.mismatches.len());
            Ok(report.mismatches.is_empty())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
