use std::str::FromStr;

use nwav_core::functional::{solution_bounds, thresholds, ModelParams};
use nwav_core::grid::GridSpec;
use nwav_core::solver::InitPolicy;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::{baseline_init, baseline_store, compute_baseline, ensure_dir, load_thresholds, run_global, run_local};
use crate::{write_text, CliError, Outcome, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    MuBeta,
    Mass,
    Alpha,
    Beta,
}

impl FromStr for Axis {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "mu_beta" | "mu-beta" => Ok(Axis::MuBeta),
            "mass" => Ok(Axis::Mass),
            "alpha" => Ok(Axis::Alpha),
            "beta" => Ok(Axis::Beta),
            other => Err(CliError::Validation(format!(
                "unknown sweep axis {other:?}; expected mu_beta, mass, alpha or beta"
            ))),
        }
    }
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::MuBeta => "mu_beta",
            Axis::Mass => "mass",
            Axis::Alpha => "alpha",
            Axis::Beta => "beta",
        }
    }

    fn apply(&self, p: ModelParams, v: f64) -> ModelParams {
        match self {
            Axis::MuBeta => p.with_mu(v),
            Axis::Mass => p.with_mass(v),
            Axis::Alpha => ModelParams { alpha: v, ..p },
            Axis::Beta => ModelParams { beta: v, ..p },
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub mu_beta: f64,
    pub mass: f64,
    pub e_global: f64,
    pub e_local: f64,
    pub a_global: f64,
    pub a_local: f64,
    pub lambda_global: f64,
    pub lambda_local: f64,
    pub converged_global: bool,
    pub converged_local: bool,
    pub global_kinetic_floor: f64,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn failed(&self) -> bool {
        self.error.is_some() || !self.converged_global || !self.converged_local
    }
}

pub fn csv_header(axis: Axis) -> String {
    format!(
        "{},mu_beta,mass,E_global,E_local,A_global,A_local,lambda_global,lambda_local,converged_global,converged_local,global_kinetic_floor,error",
        axis.name()
    )
}

pub fn to_csv(axis: Axis, rows: &[SweepRow]) -> String {
    let mut out = csv_header(axis);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{},{:.17e},{}\n",
            r.value,
            r.mu_beta,
            r.mass,
            r.e_global,
            r.e_local,
            r.a_global,
            r.a_local,
            r.lambda_global,
            r.lambda_local,
            r.converged_global,
            r.converged_local,
            r.global_kinetic_floor,
            r.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
        ));
    }
    out
}

/// Worker count: `NWAV_THREADS` if set, else rayon's default.
pub fn worker_count() -> usize {
    std::env::var("NWAV_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// Computes any missing baseline records the rows will need.
fn ensure_baselines(cfg: &RunConfig, grid: &GridSpec, params: &[ModelParams]) -> Result<(), CliError> {
    let store = baseline_store(cfg)?;
    let scfg = cfg.solver_config();
    let mut needed: Vec<(f64, f64)> = Vec::new();
    for p in params {
        for g in [p.alpha, p.beta] {
            if !needed.iter().any(|&(a, c)| a == g && c == p.mass_target) {
                needed.push((g, p.mass_target));
            }
        }
    }
    for (gamma, c) in needed {
        if store.lookup(gamma, c, grid).is_err() {
            log::info!("computing missing baseline gamma={gamma} c={c}");
            let (_, rep) = compute_baseline(gamma, c, grid, &scfg, &store)?;
            if !rep.converged {
                return Err(CliError::NonConvergence(format!(
                    "baseline gamma={gamma} c={c} did not converge (residual {:.3e})",
                    rep.grad_residual
                )));
            }
        }
    }
    Ok(())
}

fn solve_row(cfg: &RunConfig, grid: &GridSpec, value: f64, params: ModelParams) -> SweepRow {
    let mut row = SweepRow {
        value,
        mu_beta: params.mu_beta,
        mass: params.mass_target,
        e_global: f64::NAN,
        e_local: f64::NAN,
        a_global: f64::NAN,
        a_local: f64::NAN,
        lambda_global: f64::NAN,
        lambda_local: f64::NAN,
        global_kinetic_floor: f64::NAN,
        ..Default::default()
    };
    let scfg = cfg.solver_config();
    let result = (|| -> Result<(), CliError> {
        let th = load_thresholds(cfg, &params, grid)?;
        row.global_kinetic_floor = solution_bounds(&params, &th).global_kinetic_floor;
        let g = run_global(&params, grid, &InitPolicy::default(), Some(&th), &scfg)?;
        row.e_global = g.report.values.e;
        row.a_global = g.report.values.a;
        row.lambda_global = g.report.lambda;
        row.converged_global = g.report.converged;
        let init = baseline_init(cfg, &params, grid)?;
        let l = run_local(&params, grid, &init, &th, &scfg)?;
        row.e_local = l.report.values.e;
        row.a_local = l.report.values.a;
        row.lambda_local = l.report.lambda;
        row.converged_local = l.report.converged;
        Ok(())
    })();
    if let Err(e) = result {
        row.error = Some(e.to_string());
    }
    row
}

/// Rows of a sweep, in the order of `values`.
pub fn sweep_rows(cfg: &RunConfig, axis: Axis, values: &[f64], relative: bool) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::Validation("sweep needs at least one value".into()));
    }
    if relative && axis != Axis::MuBeta {
        return Err(CliError::Validation("--relative applies to the mu_beta axis only".into()));
    }
    let grid = cfg.grid_spec()?;
    let base = cfg.model;
    let scale = if relative {
        ensure_baselines(cfg, &grid, &[base])?;
        // mu_admissible does not depend on mu_beta itself.
        let store = baseline_store(cfg)?;
        let ra = store.lookup(base.alpha, base.mass_target, &grid)?;
        let rb = store.lookup(base.beta, base.mass_target, &grid)?;
        thresholds(&base.with_mu(-1.0), ra.m_infty, ra.s_gamma, rb.s_gamma)?.mu_admissible
    } else {
        1.0
    };
    let params: Vec<ModelParams> = values.iter().map(|&v| axis.apply(base, v * scale)).collect();
    for p in &params {
        p.validate()?;
    }
    ensure_baselines(cfg, &grid, &params)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(pool.install(|| {
        values
            .par_iter()
            .zip(params.par_iter())
            .map(|(&v, &p)| solve_row(cfg, &grid, v, p))
            .collect()
    }))
}

pub fn run_sweep(cfg: &RunConfig, axis: Axis, values: &[f64], relative: bool) -> Result<Outcome, CliError> {
    let rows = sweep_rows(cfg, axis, values, relative)?;
    let dir = cfg.output_dir.join("sweep");
    ensure_dir(&dir)?;
    let path = dir.join(format!("sweep-{}.csv", axis.name()));
    write_text(&path, &to_csv(axis, &rows))?;
    let failed = rows.iter().filter(|r| r.failed()).count();
    Ok(Outcome {
        summary: json!({
            "status": if failed == 0 {"ok"} else {"partial_failure"},
            "axis": axis.name(),
            "rows": rows.len(),
            "failed": failed,
            "sigma": rows.iter().map(|r| r.e_global).collect::<Vec<_>>(),
            "A_global": rows.iter().map(|r| r.a_global).collect::<Vec<_>>(),
            "csv": path,
        }),
        exit_code: if failed == 0 { 0 } else { 2 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_parsing() {
        assert_eq!("mu_beta".parse::<Axis>().unwrap(), Axis::MuBeta);
        assert_eq!("mass".parse::<Axis>().unwrap(), Axis::Mass);
        assert!("gamma".parse::<Axis>().is_err());
    }

    #[test]
    fn csv_has_one_header_and_a_line_per_row() {
        let rows = vec![SweepRow::default(), SweepRow {
            error: Some("a, b".into()),
            ..Default::default()
        }];
        let csv = to_csv(Axis::Mass, &rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        let ncols = lines[0].split(',').count();
        assert!(lines.iter().all(|l| l.split(',').count() == ncols));
        assert!(rows[1].failed());
    }

    #[test]
    fn empty_values_are_rejected() {
        let cfg = RunConfig::default();
        assert!(matches!(sweep_rows(&cfg, Axis::Mass, &[], false), Err(CliError::Validation(_))));
    }
}
