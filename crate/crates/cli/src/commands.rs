//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use graddiv::conditioning::{estimate_cond2, ConditioningReport};
use graddiv::diagnostics::{time_average_div, SweepRow, SweepSummary};
use graddiv::mesh::SimplicialMesh;
use graddiv::par::Execution;
use graddiv::schemes::{run_simulation, SchemeParams, SimulationOutcome};
use graddiv::sparse::EigenOptions;
use graddiv::{OperatorSet, TaylorHoodSpace};

use crate::config::{ConditioningConfig, ExperimentConfig, SolverOptions};
use crate::output;

/// Command-line and environment overrides applied on top of a config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub max_steps: Option<usize>,
    pub serial: bool,
}

impl Overrides {
    fn output_dir(&self, configured: &Path, base: &Path) -> PathBuf {
        let dir = self
            .out
            .clone()
            .or_else(|| std::env::var_os("GRADDIV_OUT_DIR").map(PathBuf::from))
            .unwrap_or_else(|| configured.to_path_buf());
        if dir.is_absolute() {
            dir
        } else {
            base.join(dir)
        }
    }

    fn execution(&self, solver: &SolverOptions) -> Execution {
        if self.serial || !solver.parallel {
            Execution::Serial
        } else {
            Execution::Parallel
        }
    }
}

/// One finished (γ, α) run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub gamma: f64,
    pub alpha: f64,
    pub outcome: SimulationOutcome,
    pub file: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub runs: Vec<RunResult>,
    pub summary: Vec<SweepRow>,
    pub summary_file: PathBuf,
}

/// Runs every (γ, α) pair of an experiment and writes its CSV files.
///
/// Relative paths in the config resolve against `base`. Solver failures
/// other than blow-up are collected and reported after all pairs ran.
pub fn run_experiment(cfg: &ExperimentConfig, base: &Path, ov: &Overrides) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mesh = cfg.mesh.load(base)?;
    let space = TaylorHoodSpace::new(mesh);
    let exec = ov.execution(&cfg.solver);
    let ops = OperatorSet::assemble_with(&space, exec)?;
    let forcing = Arc::new(cfg.forcing_kind()?);
    let scheme = cfg.scheme_kind()?;
    let out_dir = ov.output_dir(&cfg.output_dir, base);
    let pairs = cfg.pairs();

    let outcomes = exec.map_slice(&pairs, |&(gamma, alpha)| {
        let mut p = SchemeParams::new(scheme, cfg.nu, cfg.k, gamma, alpha, cfg.t_end, forcing.clone());
        p.max_steps = ov.max_steps.or(cfg.max_steps);
        p.execution = exec;
        p.ledger = cfg.diagnostics.ledger;
        run_simulation(&space, &ops, &p, None, |_, _| {})
    });

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    let mut summary = SweepSummary::default();
    for (&(gamma, alpha), outcome) in pairs.iter().zip(outcomes) {
        match outcome {
            Ok(outcome) => {
                let file = if cfg.diagnostics.timeseries {
                    let name = output::timeseries_name(&cfg.experiment, gamma, alpha);
                    Some(output::write_file(&out_dir, &name, &output::timeseries_csv(&outcome.records)?)?)
                } else {
                    None
                };
                summary.push(gamma, alpha, &outcome.records, outcome.blowup_step);
                runs.push(RunResult {
                    gamma,
                    alpha,
                    outcome,
                    file,
                });
            }
            Err(e) => failures.push(format!("gamma={gamma:?} alpha={alpha:?}: {e}")),
        }
    }
    let summary_file = output::write_file(&out_dir, &output::summary_name(&cfg.experiment), &output::summary_csv(&summary.rows)?)?;
    if !failures.is_empty() {
        bail!("{} run(s) failed:\n  {}", failures.len(), failures.join("\n  "));
    }
    Ok(ExperimentReport {
        runs,
        summary: summary.rows,
        summary_file,
    })
}

/// Runs a conditioning sweep and writes `{experiment}.csv`.
pub fn cond_sweep(cfg: &ConditioningConfig, base: &Path, ov: &Overrides) -> Result<(Vec<(usize, ConditioningReport)>, PathBuf)> {
    let exec = ov.execution(&cfg.solver);
    let options = EigenOptions {
        tol: cfg.solver.eigen_tol,
        residual_tol: cfg.solver.eigen_residual_tol,
        max_iter: cfg.solver.eigen_max_iter,
    };
    let mut rows = Vec::new();
    for &n in &cfg.n {
        let mesh = SimplicialMesh::from_generator_spec(&format!("{}:{n}", cfg.generator))?;
        let space = TaylorHoodSpace::new(mesh);
        let ops = OperatorSet::assemble_with(&space, exec)?;
        let reports = exec.map_slice(&cfg.gamma_plus_alpha, |&s| estimate_cond2(&space, &ops, cfg.k, s, options));
        for r in reports {
            rows.push((n, r?));
        }
    }
    let dir = ov.output_dir(&cfg.output_dir, base);
    let path = output::write_file(&dir, &format!("{}.csv", cfg.experiment), &output::conditioning_csv(&rows)?)?;
    Ok((rows, path))
}

#[derive(Clone, Debug, Serialize)]
pub struct MeshInfo {
    pub dim: usize,
    pub vertices: usize,
    pub cells: usize,
    pub h: f64,
    pub volume: f64,
    pub boundary_facets: BTreeMap<String, usize>,
    pub p2_nodes: usize,
    pub velocity_dofs: usize,
    pub pressure_dofs: usize,
    pub dirichlet_velocity_dofs: usize,
}

/// Mesh summary for `gen:square:8`-style specs or `.msh` paths.
pub fn mesh_info(spec: &str) -> Result<MeshInfo> {
    let mesh = match spec.strip_prefix("gen:") {
        Some(g) => SimplicialMesh::from_generator_spec(g)?,
        None => {
            let bytes = std::fs::read(spec).with_context(|| format!("reading {spec}"))?;
            graddiv::mesh::import_msh(&bytes).with_context(|| format!("parsing {spec}"))?
        }
    };
    let mut tags = BTreeMap::new();
    for f in mesh.boundary_facets() {
        *tags.entry(f.tag.clone()).or_insert(0) += 1;
    }
    let (dim, vertices, cells, h, volume) = (mesh.dim(), mesh.num_vertices(), mesh.num_cells(), mesh.h(), mesh.total_volume());
    let space = TaylorHoodSpace::new(mesh);
    Ok(MeshInfo {
        dim,
        vertices,
        cells,
        h,
        volume,
        boundary_facets: tags,
        p2_nodes: space.n_scalar(),
        velocity_dofs: space.n_velocity(),
        pressure_dofs: space.n_pressure(),
        dirichlet_velocity_dofs: space.dirichlet_velocity_dofs().len(),
    })
}

/// Outcome of recomputing summaries from their time series.
#[derive(Clone, Debug, Default)]
pub struct CrossCheck {
    pub rows_checked: usize,
    pub mismatches: Vec<String>,
}

fn close(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn close_opt(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => close(x, y),
        (None, None) => true,
        _ => false,
    }
}

/// Recomputes every `*_summary.csv` in `dir` from the matching time series.
pub fn cross_check(dir: &Path) -> Result<CrossCheck> {
    let mut report = CrossCheck::default();
    let mut summaries: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with("_summary.csv")))
        .collect();
    summaries.sort();
    if summaries.is_empty() {
        bail!("no *_summary.csv files in {}", dir.display());
    }
    for path in summaries {
        let name = path.file_name().and_then(|n| n.to_str()).ok_or_else(|| anyhow!("bad file name"))?;
        let experiment = name.trim_end_matches("_summary.csv");
        let rows = output::read_summary(&path)?;
        let mut recomputed = SweepSummary::default();
        for row in &rows {
            let ts = dir.join(output::timeseries_name(experiment, row.gamma, row.alpha));
            let records = output::read_timeseries(&ts)?;
            recomputed.push(row.gamma, row.alpha, &records, row.blowup_step);
            if records.is_empty() {
                report.mismatches.push(format!("{}: empty time series", ts.display()));
            } else if time_average_div(&records).is_err() {
                report.mismatches.push(format!("{}: unreadable div_norm", ts.display()));
            }
        }
        for (a, b) in rows.iter().zip(&recomputed.rows) {
            report.rows_checked += 1;
            let ok = close(a.avg_div_sq, b.avg_div_sq)
                && close(a.final_div, b.final_div)
                && close_opt(a.rate_avg, b.rate_avg)
                && close_opt(a.rate_final, b.rate_final);
            if !ok {
                report.mismatches.push(format!(
                    "{name}: gamma={:?} alpha={:?} summary {:?} vs recomputed {:?}",
                    a.gamma, a.alpha, a, b
                ));
            }
        }
    }
    Ok(report)
}
