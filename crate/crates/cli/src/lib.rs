pub mod config;
pub mod sweep;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nwav_core::dynamics::{self, Monitors, StabilityConfig};
use nwav_core::fibering::{fiber_critical_points, fiber_eval, CriticalKind, Triple};
use nwav_core::functional::{
    regime_classify, solution_bounds, thresholds, FunctionalError, Kernels, ModelParams, Regime, Thresholds,
};
use nwav_core::grid::{Field, GridSpec};
use nwav_core::io::{self, BaselineRecord, BaselineStore, IoError};
use nwav_core::solver::{
    baseline_summary, solve_global, solve_hartree_baseline, solve_local, verify_solution, Diagnostics,
    InitPolicy, SolveError, SolveReport, SolverConfig,
};
use serde::Serialize;
use serde_json::{json, Value};

pub use config::{Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    NonConvergence(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::NonConvergence(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::MissingRecord(key) => CliError::Validation(format!(
                "missing baseline record {key}; run `nwav baseline` with the same --alpha/--beta/--mass/--points/--box first"
            )),
            other => CliError::Io(other.to_string()),
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Collapse(_) => CliError::NonConvergence(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<FunctionalError> for CliError {
    fn from(e: FunctionalError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<dynamics::DynamicsError> for CliError {
    fn from(e: dynamics::DynamicsError) -> Self {
        match e {
            dynamics::DynamicsError::NonFinite { .. } => CliError::NonConvergence(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nwav", version, about = "Normalized standing waves with competing Riesz potentials")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    #[arg(long = "mu-beta", global = true, allow_hyphen_values = true)]
    pub mu_beta: Option<f64>,
    #[arg(long, global = true)]
    pub mass: Option<f64>,
    /// Grid points per axis.
    #[arg(long, global = true)]
    pub points: Option<usize>,
    /// Box half-length L.
    #[arg(long = "box", global = true)]
    pub half_length: Option<f64>,
    #[arg(long, global = true)]
    pub tmax: Option<f64>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            alpha: self.alpha,
            beta: self.beta,
            mu_beta: self.mu_beta,
            mass: self.mass,
            points: self.points,
            half_length: self.half_length,
            tmax: self.tmax,
            dt: self.dt,
            out: self.out.clone(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single-potential ground states for alpha and beta; stores baseline records.
    Baseline,
    /// Global minimizer (negative-energy ground state).
    SolveGlobal {
        /// Initial field file (same point count as the grid).
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Local minimizer on the P^- branch, started from the alpha baseline.
    SolveLocal {
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Fibering regime of the model parameters.
    Classify,
    /// Critical points and a dense scan of the fiber of a triple.
    FiberingScan {
        /// `A,B_alpha,B_beta`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        triple: Vec<f64>,
        #[arg(long, default_value_t = 400)]
        samples: usize,
    },
    /// Evolve a stored solution (optionally perturbed) and record a trace.
    Evolve {
        /// Field to evolve; defaults to the stored global solution.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        delta0: Option<f64>,
        /// Also measure the time-reversal error (doubles the cost).
        #[arg(long)]
        reversal: bool,
    },
    /// Perturb the global solution and track its orbit distance.
    Stability {
        #[arg(long)]
        delta0: Option<f64>,
    },
    /// Independent global+local solves over a parameter list.
    Sweep {
        /// One of mu_beta, mass, alpha, beta.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<f64>,
        /// Interpret mu_beta values as multiples of mu_admissible.
        #[arg(long)]
        relative: bool,
    },
}

/// Outcome of a subcommand: the stdout summary and the exit status it implies.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: Value,
    pub exit_code: i32,
}

impl Outcome {
    fn ok(summary: Value) -> Self {
        Self { summary, exit_code: 0 }
    }
}

/// Parses `argv` (including the program name), runs, prints the summary line.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(out) => {
            println!("{}", out.summary);
            out.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            println!("{}", json!({"status": "error", "exit_code": e.exit_code(), "message": e.to_string()}));
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let mut cfg = RunConfig::load(cli.common.config.as_deref())?;
    cfg.apply(&cli.common.overrides());
    match &cli.command {
        Command::Classify => classify(&cfg),
        Command::FiberingScan { triple, samples } => fibering_scan(&cfg, triple, *samples),
        Command::Baseline => {
            cfg.validate()?;
            baseline(&cfg)
        }
        Command::SolveGlobal { init } => {
            cfg.validate()?;
            solve_global_cmd(&cfg, init.as_deref())
        }
        Command::SolveLocal { init } => {
            cfg.validate()?;
            solve_local_cmd(&cfg, init.as_deref())
        }
        Command::Evolve { init, delta0, reversal } => {
            if let Some(d) = delta0 {
                cfg.dynamics.delta0 = *d;
            }
            cfg.validate()?;
            evolve_cmd(&cfg, init.as_deref(), *reversal)
        }
        Command::Stability { delta0 } => {
            if let Some(d) = delta0 {
                cfg.dynamics.delta0 = *d;
            }
            cfg.validate()?;
            stability_cmd(&cfg)
        }
        Command::Sweep { axis, values, relative } => {
            cfg.validate()?;
            let axis: sweep::Axis = axis.parse()?;
            sweep::run_sweep(&cfg, axis, values, *relative)
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn as_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

pub fn baseline_store(cfg: &RunConfig) -> Result<BaselineStore, CliError> {
    Ok(BaselineStore::new(cfg.output_dir.join("baselines"))?)
}

fn classify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    cfg.model.validate()?;
    let regime = regime_classify(&cfg.model);
    Ok(Outcome::ok(json!({
        "status": "ok",
        "case": regime.label(),
        "dim": cfg.model.dim,
        "alpha": cfg.model.alpha,
        "beta": cfg.model.beta,
        "mu_beta": cfg.model.mu_beta,
    })))
}

fn kind_label(k: Option<CriticalKind>) -> &'static str {
    match k {
        Some(CriticalKind::LocalMax) => "local_max",
        Some(CriticalKind::LocalMin) => "local_min",
        Some(CriticalKind::Inflection) => "inflection",
        None => "regular",
    }
}

fn fibering_scan(cfg: &RunConfig, triple: &[f64], samples: usize) -> Result<Outcome, CliError> {
    cfg.model.validate()?;
    if triple.len() != 3 {
        return Err(CliError::Validation("--triple needs A,B_alpha,B_beta".into()));
    }
    if samples < 2 {
        return Err(CliError::Validation("--samples must be at least 2".into()));
    }
    let t = Triple::new(triple[0], triple[1], triple[2]);
    let p = &cfg.model;
    let cps = fiber_critical_points(&t, p).map_err(|e| CliError::Validation(e.to_string()))?;
    let dir = cfg.output_dir.join("fibering");
    ensure_dir(&dir)?;

    let mut crit = String::from("kind,s,g,g1,g2\n");
    for c in &cps.points {
        crit.push_str(&format!("{},{:.17e},{:.17e},{:.17e},{:.17e}\n", kind_label(c.kind), c.s, c.g, c.g1, c.g2));
    }
    let crit_path = dir.join("critical_points.csv");
    write_text(&crit_path, &crit)?;

    // Log-spaced scan spanning two decades around the critical points.
    let (lo, hi) = match (cps.points.first(), cps.points.last()) {
        (Some(a), Some(b)) => (a.s / 100.0, b.s * 100.0),
        _ => (1e-3, 1e3),
    };
    let mut scan = String::from("s,g,g1,g2\n");
    for i in 0..samples {
        let s = lo * (hi / lo).powf(i as f64 / (samples - 1) as f64);
        let fp = fiber_eval(&t, p, s).map_err(|e| CliError::Validation(e.to_string()))?;
        scan.push_str(&format!("{:.17e},{:.17e},{:.17e},{:.17e}\n", s, fp.g, fp.g1, fp.g2));
    }
    let scan_path = dir.join("scan.csv");
    write_text(&scan_path, &scan)?;

    Ok(Outcome::ok(json!({
        "status": "ok",
        "case": regime_classify(p).label(),
        "critical_points": cps.points.len(),
        "kinds": cps.points.iter().map(|c| kind_label(c.kind)).collect::<Vec<_>>(),
        "s": cps.points.iter().map(|c| c.s).collect::<Vec<_>>(),
        "tangency": cps.tangency,
        "critical_csv": crit_path,
        "scan_csv": scan_path,
    })))
}

/// Runs (or re-runs) the baseline for `gamma` at the configured mass and grid.
pub fn compute_baseline(
    gamma: f64,
    mass: f64,
    grid: &GridSpec,
    scfg: &SolverConfig,
    store: &BaselineStore,
) -> Result<(BaselineRecord, SolveReport), CliError> {
    let rep = solve_hartree_baseline(gamma, mass, grid, &InitPolicy::default(), scfg)?;
    let sum = baseline_summary(&rep, gamma, grid.dim)?;
    let rec = BaselineRecord {
        gamma,
        mass,
        grid: *grid,
        grid_fingerprint: grid.fingerprint(),
        m_infty: sum.m_infty,
        s_gamma: sum.s_gamma,
        s_gamma_formula: sum.s_gamma_formula,
        omega_mass: sum.q_mass,
        lambda: sum.lambda,
        grad_residual: rep.grad_residual,
        field_file: None,
    };
    if rep.converged {
        store.store(&rec, Some(&rep.working_field()))?;
    }
    Ok((rec, rep))
}

fn baseline(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = cfg.grid_spec()?;
    let store = baseline_store(cfg)?;
    let scfg = cfg.solver_config();
    let mut rows = Vec::new();
    let mut all_converged = true;
    let mut exps = vec![cfg.model.alpha];
    if cfg.model.beta != cfg.model.alpha && cfg.model.beta < nwav_core::functional::critical_exponent(grid.dim) {
        exps.push(cfg.model.beta);
    }
    for gamma in exps {
        let (rec, rep) = compute_baseline(gamma, cfg.model.mass_target, &grid, &scfg, &store)?;
        all_converged &= rep.converged;
        rows.push(json!({
            "gamma": gamma,
            "m_infty": rec.m_infty,
            "S_gamma": rec.s_gamma,
            "saturation": rec.s_gamma / rec.s_gamma_formula - 1.0,
            "lambda": rec.lambda,
            "grad_residual": rec.grad_residual,
            "iterations": rep.iterations,
            "converged": rep.converged,
            "key": rec.own_key(),
        }));
    }
    Ok(Outcome {
        summary: json!({"status": if all_converged {"ok"} else {"not_converged"}, "baselines": rows}),
        exit_code: if all_converged { 0 } else { 2 },
    })
}

/// Thresholds from stored alpha and beta baselines.
pub fn load_thresholds(cfg: &RunConfig, params: &ModelParams, grid: &GridSpec) -> Result<Thresholds, CliError> {
    let store = baseline_store(cfg)?;
    let ra = store.lookup(params.alpha, params.mass_target, grid)?;
    let rb = store.lookup(params.beta, params.mass_target, grid)?;
    if regime_classify(params) != Regime::CaseIV {
        return Err(CliError::Validation(format!(
            "thresholds need the two-solution regime (case IV); parameters are case {}",
            regime_classify(params).label()
        )));
    }
    Ok(thresholds(params, ra.m_infty, ra.s_gamma, rb.s_gamma)?)
}

fn load_init(path: Option<&Path>) -> Result<Option<InitPolicy>, CliError> {
    Ok(match path {
        Some(p) => Some(InitPolicy::Field(io::read_field(p)?)),
        None => None,
    })
}

/// Stores report, diagnostics and solution under `output_dir/<name>/`.
fn persist_solution(dir: &Path, rep: &SolveReport, diag: &Diagnostics, extra: Value) -> Result<Value, CliError> {
    ensure_dir(dir)?;
    let field_path = dir.join("solution.nwav");
    io::write_field(&field_path, rep.solution())?;
    let doc = json!({
        "report": as_value(rep),
        "diagnostics": as_value(diag),
        "solution_file": "solution.nwav",
        "extra": extra,
    });
    io::write_report(&dir.join("report.json"), &doc)?;
    Ok(doc)
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchResult {
    pub report: SolveReport,
    pub diagnostics: Diagnostics,
}

pub fn run_global(
    params: &ModelParams,
    grid: &GridSpec,
    init: &InitPolicy,
    th: Option<&Thresholds>,
    scfg: &SolverConfig,
) -> Result<BranchResult, CliError> {
    let report = solve_global(params, grid, init, th, scfg)?;
    let kernels = Kernels::new(&report.solution_grid, params)?;
    let diagnostics = verify_solution(&report, params, &kernels, th)?;
    Ok(BranchResult { report, diagnostics })
}

pub fn run_local(
    params: &ModelParams,
    grid: &GridSpec,
    init: &InitPolicy,
    th: &Thresholds,
    scfg: &SolverConfig,
) -> Result<BranchResult, CliError> {
    let report = solve_local(params, grid, init, th, scfg)?;
    let kernels = Kernels::new(&report.solution_grid, params)?;
    let diagnostics = verify_solution(&report, params, &kernels, Some(th))?;
    Ok(BranchResult { report, diagnostics })
}

/// The alpha baseline ground state as the default local-branch start.
pub fn baseline_init(cfg: &RunConfig, params: &ModelParams, grid: &GridSpec) -> Result<InitPolicy, CliError> {
    let store = baseline_store(cfg)?;
    let rec = store.lookup(params.alpha, params.mass_target, grid)?;
    Ok(InitPolicy::Field(store.load_field(&rec)?))
}

fn branch_summary(name: &str, r: &BranchResult, th: &Thresholds, params: &ModelParams, dir: &Path) -> Value {
    let b = solution_bounds(params, th);
    let v = r.report.values;
    json!({
        "status": if r.report.converged {"ok"} else {"not_converged"},
        "branch": name,
        "E": v.e,
        "A": v.a,
        "lambda": r.report.lambda,
        "Q_over_A": r.report.pohozaev_residual,
        "g2_at_one": r.report.g2_at_one,
        "grad_residual": r.diagnostics.grad_residual,
        "iterations": r.report.iterations,
        "converged": r.report.converged,
        "flags": as_value(&r.report.flags),
        "bounds": as_value(&b),
        "output": dir,
    })
}

fn solve_global_cmd(cfg: &RunConfig, init: Option<&Path>) -> Result<Outcome, CliError> {
    let grid = cfg.grid_spec()?;
    let params = cfg.model;
    let th = load_thresholds(cfg, &params, &grid)?;
    let init = load_init(init)?.unwrap_or_default();
    let r = run_global(&params, &grid, &init, Some(&th), &cfg.solver_config())?;
    let dir = cfg.output_dir.join("global");
    persist_solution(&dir, &r.report, &r.diagnostics, json!({"thresholds": as_value(&th)}))?;
    let summary = branch_summary("global", &r, &th, &params, &dir);
    Ok(Outcome {
        summary,
        exit_code: if r.report.converged { 0 } else { 2 },
    })
}

fn solve_local_cmd(cfg: &RunConfig, init: Option<&Path>) -> Result<Outcome, CliError> {
    let grid = cfg.grid_spec()?;
    let params = cfg.model;
    let th = load_thresholds(cfg, &params, &grid)?;
    let init = match load_init(init)? {
        Some(i) => i,
        None => baseline_init(cfg, &params, &grid)?,
    };
    let r = run_local(&params, &grid, &init, &th, &cfg.solver_config())?;
    let dir = cfg.output_dir.join("local");
    persist_solution(&dir, &r.report, &r.diagnostics, json!({"thresholds": as_value(&th)}))?;
    let summary = branch_summary("local", &r, &th, &params, &dir);
    Ok(Outcome {
        summary,
        exit_code: if r.report.converged { 0 } else { 2 },
    })
}

fn stored_global(cfg: &RunConfig) -> Result<Field, CliError> {
    let path = cfg.output_dir.join("global").join("solution.nwav");
    if !path.exists() {
        return Err(CliError::Validation(format!(
            "no global solution at {}; run `nwav solve-global` first",
            path.display()
        )));
    }
    Ok(io::read_field(&path)?)
}

fn evolve_cmd(cfg: &RunConfig, init: Option<&Path>, reversal: bool) -> Result<Outcome, CliError> {
    let params = cfg.model;
    let u = match init {
        Some(p) => io::read_field(p)?,
        None => stored_global(cfg)?,
    };
    if u.grid.dim != params.dim {
        return Err(CliError::Validation("field dimension differs from the model".into()));
    }
    let kernels = Kernels::new(&u.grid, &params)?;
    let d = &cfg.dynamics;
    let psi0 = dynamics::perturb(&u, d.delta0, cfg.seed, StabilityConfig::default().band, &kernels.spectral);
    let monitors = Monitors {
        cadence: d.monitor_cadence,
        reference: Some(u.clone()),
        ..Default::default()
    };
    let (psi, trace) = dynamics::evolve(&psi0, d.t, d.dt, &params, &kernels, &monitors)?;
    let reversal_error = if reversal {
        Some(dynamics::time_reversal_error(&psi0, d.t, d.dt, &params, &kernels)?)
    } else {
        None
    };
    let dir = cfg.output_dir.join("evolve");
    ensure_dir(&dir)?;
    io::write_trace(&dir.join("trace.csv"), &trace, params.dim)?;
    io::write_field(&dir.join("final.nwav"), &psi)?;
    let doc = json!({
        "status": if trace.aborted.is_none() {"ok"} else {"aborted"},
        "samples": trace.len(),
        "mass_drift": trace.mass_drift(),
        "energy_drift": trace.energy_drift(),
        "max_momentum": trace.max_momentum(),
        "reversal_error": reversal_error,
        "aborted": trace.aborted,
        "output": dir,
    });
    io::write_report(&dir.join("report.json"), &doc)?;
    Ok(Outcome {
        exit_code: if trace.aborted.is_none() { 0 } else { 2 },
        summary: doc,
    })
}

fn stability_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let params = cfg.model;
    let u = stored_global(cfg)?;
    let kernels = Kernels::new(&u.grid, &params)?;
    let d = &cfg.dynamics;
    let scfg = StabilityConfig {
        delta0: d.delta0,
        t_end: d.t,
        dt: d.dt,
        seed: cfg.seed,
        cadence: d.monitor_cadence,
        ..StabilityConfig::default()
    };
    let rep = dynamics::stability_experiment(&u, &params, &kernels, &scfg)?;
    let dir = cfg.output_dir.join("stability");
    ensure_dir(&dir)?;
    io::write_trace(&dir.join("trace.csv"), &rep.trace, params.dim)?;
    let doc = json!({
        "status": "ok",
        "delta0": d.delta0,
        "perturbation_size": rep.perturbation_size,
        "max_distance": rep.max_distance,
        "stable_flag": rep.stable_flag,
        "mass_drift": rep.trace.mass_drift(),
        "energy_drift": rep.trace.energy_drift(),
        "output": dir,
    });
    io::write_report(&dir.join("report.json"), &doc)?;
    Ok(Outcome::ok(doc))
}
