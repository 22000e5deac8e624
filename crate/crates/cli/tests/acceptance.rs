//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria that fail are reported, not panicked on, so the suite always runs
//! to the end. Dynamics runs stop early once their verdict is settled (a
//! tolerance already exceeded); set `NWAV_ACCEPTANCE_FULL=1` to run them to
//! the full horizon regardless.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use nwav_cli::sweep::{sweep_rows, Axis, SweepRow};
use nwav_cli::{baseline_store, compute_baseline, run_global, run_local, BranchResult, RunConfig};
use nwav_core::dynamics::{self, Monitors, StabilityConfig};
use nwav_core::fibering::{
    fiber_critical_points, fiber_eval, s_hat, s_star, CriticalKind, Triple,
};
use nwav_core::functional::{
    evaluate, l2_gradient, solution_bounds, thresholds, Kernels, ModelParams, SolutionBounds, Thresholds,
};
use nwav_core::grid::{dilate_field, inner_product, make_grid, mass, sample_profile, Field, GridSpec, ProfileSpec};
use nwav_core::riesz::{b_value, build_kernel_with, origin_cell_average, KernelRule};
use nwav_core::solver::InitPolicy;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALPHA: f64 = 2.5;
const BETA: f64 = 2.8;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn report(n: usize, title: &str, v: &Verdict, elapsed: Duration) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!("criterion {n:>2} [{tag}] {title} ({:.1} s): {}", elapsed.as_secs_f64(), v.detail);
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn full_runs() -> bool {
    std::env::var_os("NWAV_ACCEPTANCE_FULL").is_some()
}

fn random_field(grid: &GridSpec, rng: &mut ChaCha8Rng, envelope: f64) -> Field {
    let xs = grid.coordinates();
    let values = (0..grid.len())
        .map(|flat| {
            let idx = grid.unravel(flat);
            let r2: f64 = (0..grid.dim).map(|d| xs[idx[d]] * xs[idx[d]]).sum();
            let w = (-r2 / (2.0 * envelope * envelope)).exp();
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * w
        })
        .collect();
    Field::new(*grid, values).unwrap()
}

// ---------------------------------------------------------------------------
// 1. FFT convolution against the direct double sum.

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let grid = make_grid(3, 16, 4.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u = random_field(&grid, &mut rng, 1.5);
    let rho = u.densities();
    let xs = grid.coordinates();
    let dv = grid.cell_volume();
    let pts: Vec<[f64; 3]> = (0..grid.len())
        .map(|f| {
            let i = grid.unravel(f);
            [xs[i[0]], xs[i[1]], xs[i[2]]]
        })
        .collect();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for gamma in [1.0, 2.5, 2.8] {
        let kernel = build_kernel_with(&grid, gamma, KernelRule::CellAverage).unwrap();
        let fast = b_value(&kernel, &u).unwrap();
        let origin = origin_cell_average(3, grid.spacing(), gamma);
        let mut direct = 0.0;
        for (i, p) in pts.iter().enumerate() {
            let mut acc = rho[i] * origin;
            for (j, q) in pts.iter().enumerate() {
                if i != j {
                    let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                    acc += rho[j] * d2.powf(-gamma / 2.0);
                }
            }
            direct += rho[i] * acc;
        }
        direct *= dv * dv;
        let e = rel(fast, direct);
        worst = worst.max(e);
        parts.push(format!("γ={gamma}: {e:.2e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst < 1e-10 && secs < 10.0,
        format!("max rel err {worst:.2e} [{}], {secs:.2} s (limits 1e-10, 10 s)", parts.join(", ")),
    )
}

// ---------------------------------------------------------------------------
// 2. Gaussian closed forms.

/// `E|Z|^{-1}` for `Z ~ N(0, tau^2 I_3)` by quadrature of the chi(3) density.
fn chi_inverse_moment(tau: f64) -> f64 {
    let n = 200_000;
    let h = 40.0 / n as f64;
    let mut acc = 0.0;
    for i in 1..n {
        let r = i as f64 * h;
        acc += (2.0 / std::f64::consts::PI).sqrt() * r * (-r * r / 2.0).exp();
    }
    acc * h / tau
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let grid = make_grid(3, 64, 12.0).unwrap();
    let u = sample_profile(&grid, &ProfileSpec::gaussian(1.0)).unwrap();
    let k = Kernels::single(&grid, 1.0).unwrap();
    let p = ModelParams {
        dim: 3,
        alpha: 1.0,
        beta: 1.0,
        mu_beta: 0.0,
        mass_target: 1.0,
    };
    let v = evaluate(&u, &p, &k).unwrap();
    // |u|^2 is the N(0, I/2) density; X - Y ~ N(0, I).
    let oracle = chi_inverse_moment(1.0);
    let closed = (2.0 / std::f64::consts::PI).sqrt();
    let secs = start.elapsed().as_secs_f64();
    let (em, ea, eb) = ((v.mass - 1.0).abs(), rel(v.a, 1.5), rel(v.b_alpha, oracle));
    verdict(
        em < 1e-12 && ea < 1e-6 && eb < 1e-4 && rel(oracle, closed) < 1e-8 && secs < 5.0,
        format!(
            "mass err {em:.1e}, A rel {ea:.1e}, B_1 = {:.8} vs chi-moment oracle {oracle:.8} (rel {eb:.1e}; the literal 1/√π = {:.6} is not the value), {secs:.2} s",
            v.b_alpha,
            1.0 / std::f64::consts::PI.sqrt()
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. Gradient against central differences.

fn criterion_3() -> Verdict {
    let grid = make_grid(3, 16, 8.0).unwrap();
    let p = ModelParams::new(3, ALPHA, BETA, -0.05, 1.0).unwrap();
    let k = Kernels::new(&grid, &p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let u = random_field(&grid, &mut rng, 2.0).normalized_to(1.0);
        let h = random_field(&grid, &mut rng, 2.0).normalized_to(1.0);
        let g = l2_gradient(&u, &p, &k).unwrap();
        let analytic = inner_product(&g, &h).unwrap().re;
        let eps = 1e-4;
        let shift = |t: f64| {
            let vals = u.values.iter().zip(&h.values).map(|(a, b)| a + b * t).collect();
            evaluate(&Field::new(grid, vals).unwrap(), &p, &k).unwrap().e
        };
        let fd = (shift(eps) - shift(-eps)) / (2.0 * eps);
        worst = worst.max((analytic - fd).abs() / analytic.abs().max(fd.abs()));
    }
    verdict(worst < 1e-5, format!("20 pairs, max rel err {worst:.2e} (limit 1e-5)"))
}

// ---------------------------------------------------------------------------
// 4. Fibering laws.

fn criterion_4() -> Verdict {
    let p = ModelParams::new(3, ALPHA, BETA, -0.05, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut w_deriv, mut w_scale): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let t = Triple::new(rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0));
        let s: f64 = rng.gen_range(0.2..5.0);
        let fp = fiber_eval(&t, &p, s).unwrap();
        let d = t.dilated(s, &p);
        let q = d.a - ALPHA * d.b_alpha / 4.0 - p.mu_beta * BETA * d.b_beta / 4.0;
        w_deriv = w_deriv.max((fp.g1 - q / s).abs() / (q / s).abs().max(1e-300));
        w_scale = w_scale
            .max(rel(d.a, s * s * t.a))
            .max(rel(d.b_alpha, s.powf(ALPHA) * t.b_alpha))
            .max(rel(d.b_beta, s.powf(BETA) * t.b_beta));
    }
    let grid = make_grid(3, 64, 12.0).unwrap();
    let k = Kernels::new(&grid, &p).unwrap();
    let u = sample_profile(&grid, &ProfileSpec::gaussian(1.2)).unwrap();
    let v0 = evaluate(&u, &p, &k).unwrap();
    let mut w_grid: f64 = 0.0;
    for s in [0.8, 1.25] {
        let us = dilate_field(&u, s).unwrap().field;
        let v = evaluate(&us, &p, &k).unwrap();
        w_grid = w_grid
            .max(rel(v.a, s * s * v0.a))
            .max(rel(v.b_alpha, s.powf(ALPHA) * v0.b_alpha))
            .max(rel(v.b_beta, s.powf(BETA) * v0.b_beta));
    }
    verdict(
        w_deriv < 1e-10 && w_scale < 1e-10 && w_grid < 1e-5,
        format!(
            "g' = Q(u_s)/s rel err {w_deriv:.1e}, triple scaling {w_scale:.1e}, regridded fields {w_grid:.1e} (limits 1e-10, exact, 1e-5)"
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. Regime shapes.

/// Sign changes of `g'(s)/s = A - alpha B_alpha s^{alpha-2}/4 - mu beta B_beta s^{beta-2}/4`
/// on a dense grid in `ln s`, as brackets `(s_lo, s_hi)`.
fn dense_roots(t: &Triple, p: &ModelParams) -> Vec<(f64, f64)> {
    let f = |ls: f64| {
        let s = ls.exp();
        t.a - p.alpha * t.b_alpha * s.powf(p.alpha - 2.0) / 4.0 - p.mu_beta * p.beta * t.b_beta * s.powf(p.beta - 2.0) / 4.0
    };
    let (lo, hi, n) = (-60.0, 160.0, 44_000);
    let h = (hi - lo) / n as f64;
    let mut out = Vec::new();
    let mut prev = f(lo);
    for i in 1..=n {
        let x = lo + i as f64 * h;
        let cur = f(x);
        if prev.signum() != cur.signum() {
            out.push(((x - h).exp(), x.exp()));
        }
        prev = cur;
    }
    out
}

fn matches_scan(t: &Triple, p: &ModelParams, kinds: &[CriticalKind]) -> Result<(), String> {
    let cps = fiber_critical_points(t, p).map_err(|e| e.to_string())?;
    let got: Vec<CriticalKind> = cps.points.iter().filter_map(|c| c.kind).collect();
    if got != kinds {
        return Err(format!("{t:?}: kinds {got:?}, expected {kinds:?}"));
    }
    let scan = dense_roots(t, p);
    if scan.len() != cps.points.len() {
        return Err(format!("{t:?}: scan finds {} roots, solver {}", scan.len(), cps.points.len()));
    }
    for (c, (lo, hi)) in cps.points.iter().zip(&scan) {
        if !(c.s >= lo * (1.0 - 1e-12) && c.s <= hi * (1.0 + 1e-12)) {
            return Err(format!("{t:?}: root {} outside scan bracket [{lo}, {hi}]", c.s));
        }
    }
    Ok(())
}

fn criterion_5(th: &Thresholds, params: &ModelParams) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c = params.mass_target;
    let mut failures = Vec::new();
    // V_D triples that also respect both Gagliardo–Nirenberg bounds.
    for _ in 0..1000 {
        let a: f64 = 10f64.powf(rng.gen_range(-2.0..3.0));
        let cap_a = th.s_alpha * a.powf(ALPHA / 2.0) * c.powf((4.0 - ALPHA) / 2.0);
        let floor_a = th.gamma * a.powf(ALPHA / 2.0);
        let b_alpha = floor_a + (cap_a - floor_a) * rng.gen_range(1e-3..1.0);
        let b_beta = th.s_beta * a.powf(BETA / 2.0) * c.powf((4.0 - BETA) / 2.0) * rng.gen_range(1e-3..1.0);
        let t = Triple::new(a, b_alpha, b_beta);
        if let Err(e) = matches_scan(&t, params, &[CriticalKind::LocalMax, CriticalKind::LocalMin]) {
            failures.push(e);
            continue;
        }
        let cps = fiber_critical_points(&t, params).unwrap();
        let (sm, sp) = (cps.points[0].s, cps.points[1].s);
        let (sh, ss) = (s_hat(&t, params), s_star(&t, params));
        if !(sh < sm && sm < ss && ss < sp) {
            failures.push(format!("{t:?}: ordering ŝ={sh} s⁻={sm} s*={ss} s⁺={sp}"));
        }
    }
    let case_iv_failures = failures.len();

    use CriticalKind::*;
    let cases: [(&str, ModelParams, &[CriticalKind]); 3] = [
        ("i (μ>0)", ModelParams::new(3, 1.0, 1.5, 0.3, 1.0).unwrap(), &[LocalMin]),
        ("iii (μ>0)", ModelParams::new(3, 2.5, 2.8, 0.3, 1.0).unwrap(), &[LocalMax]),
        ("iii (μ<0)", ModelParams::new(3, 2.8, 2.5, -0.3, 1.0).unwrap(), &[LocalMax]),
    ];
    for (name, p, kinds) in cases {
        for _ in 0..250 {
            let t = Triple::new(rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0));
            if let Err(e) = matches_scan(&t, &p, kinds) {
                failures.push(format!("case {name}: {e}"));
            }
        }
    }
    // Case i with mu < 0 (beta < alpha < 2): g'(s)/s -> A > 0 at both ends, so
    // the count is 0 or 2, never the single minimum the case summary states.
    let p = ModelParams::new(3, 1.5, 1.0, -0.3, 1.0).unwrap();
    let mut counts = [0usize; 3];
    for _ in 0..250 {
        let t = Triple::new(rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0));
        let n = fiber_critical_points(&t, &p).unwrap().points.len();
        let kinds: &[CriticalKind] = if n == 0 { &[] } else { &[LocalMax, LocalMin] };
        if let Err(e) = matches_scan(&t, &p, kinds) {
            failures.push(format!("case i (μ<0): {e}"));
        }
        counts[n.min(2)] += 1;
    }
    // Case ii with alpha = 3/2, beta = 5/2: g'(s)/s = A - a1 s^{-1/2} - a2 s^{1/2}
    // tends to -inf at both ends, so the min-then-max shape needs A > 2 sqrt(a1 a2);
    // otherwise the fiber is monotone decreasing.
    let p = ModelParams::new(3, 1.5, 2.5, 0.3, 1.0).unwrap();
    let mut ii_empty = 0;
    for _ in 0..250 {
        let t = Triple::new(rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0));
        let (a1, a2) = (1.5 * t.b_alpha / 4.0, p.mu_beta * 2.5 * t.b_beta / 4.0);
        let kinds: &[CriticalKind] = if t.a > 2.0 * (a1 * a2).sqrt() {
            &[LocalMin, LocalMax]
        } else {
            ii_empty += 1;
            &[]
        };
        if let Err(e) = matches_scan(&t, &p, kinds) {
            failures.push(format!("case ii: {e}"));
        }
    }
    let first = failures.first().cloned().unwrap_or_default();
    verdict(
        failures.is_empty(),
        format!(
            "case iv: 1000 V_D triples, {case_iv_failures} failures; cases i–iii: {} failures; case i with μ<0 yields 0/1/2 points in {}/{}/{} triples (analysis: 0 or 2); case ii has no critical point in {ii_empty}/250 triples, exactly where A <= 2 sqrt(a1 a2){}",
            failures.len() - case_iv_failures,
            counts[0],
            counts[1],
            counts[2],
            if first.is_empty() { String::new() } else { format!("; first: {first}") }
        ),
    )
}

// ---------------------------------------------------------------------------
// 6–7. Baseline and the two-solution structure.

struct Pipeline {
    cfg: RunConfig,
    grid: GridSpec,
    th: Thresholds,
    params: ModelParams,
    bounds: SolutionBounds,
}

fn criterion_6(cfg: &RunConfig) -> (Verdict, Option<(Thresholds, ModelParams)>) {
    let grid = cfg.grid_spec().unwrap();
    let store = baseline_store(cfg).unwrap();
    let scfg = cfg.solver_config();
    let start = Instant::now();
    let (ra, rep) = match compute_baseline(ALPHA, 1.0, &grid, &scfg, &store) {
        Ok(r) => r,
        Err(e) => return (verdict(false, format!("alpha baseline failed: {e}")), None),
    };
    let secs = start.elapsed().as_secs_f64();
    let sat = ra.s_gamma / ra.s_gamma_formula - 1.0;
    let identity = rel(ra.m_infty, (ALPHA - 2.0) / (2.0 * ALPHA) * rep.values.a);
    let v = verdict(
        rep.converged && rep.grad_residual < 1e-6 && ra.m_infty > 0.0 && sat.abs() < 1e-3 && secs < 300.0,
        format!(
            "{} iterations, residual {:.2e}, m_∞ = {:.10}, m_∞ identity rel err {identity:.1e}, S_α = {:.8}, GN saturation {sat:.2e}, {secs:.1} s",
            rep.iterations, rep.grad_residual, ra.m_infty, ra.s_gamma
        ),
    );
    // The beta baseline supplies S_beta for the thresholds.
    let rb = match compute_baseline(BETA, 1.0, &grid, &scfg, &store) {
        Ok((rb, r)) if r.converged => rb,
        Ok((_, r)) => return (verdict(false, format!("{}; beta baseline not converged ({:.2e})", v.detail, r.grad_residual)), None),
        Err(e) => return (verdict(false, format!("{}; beta baseline failed: {e}", v.detail)), None),
    };
    let probe = cfg.model.with_mu(-1.0);
    let th = thresholds(&probe, ra.m_infty, ra.s_gamma, rb.s_gamma).unwrap();
    let params = probe.with_mu(-0.5 * th.mu_admissible);
    let th = thresholds(&params, ra.m_infty, ra.s_gamma, rb.s_gamma).unwrap();
    let v = verdict(v.pass, format!("{}; S_β = {:.8}, mu_admissible = {:.8e}", v.detail, rb.s_gamma, th.mu_admissible));
    (v, Some((th, params)))
}

fn branch_line(r: &BranchResult) -> String {
    let v = r.report.values;
    format!(
        "E {:.6e}, A {:.6e}, λ {:.6e}, |Q|/A {:.1e}, g''(1) {:.3e}, residual {:.1e}, {} it",
        v.e, v.a, r.report.lambda, r.report.pohozaev_residual, r.report.g2_at_one, r.report.grad_residual, r.report.iterations
    )
}

fn criterion_7(pl: &Pipeline) -> (Verdict, Option<BranchResult>) {
    let scfg = pl.cfg.solver_config();
    let start = Instant::now();
    let store = baseline_store(&pl.cfg).unwrap();
    let rec = store.lookup(ALPHA, 1.0, &pl.grid).unwrap();
    let init = InitPolicy::Field(store.load_field(&rec).unwrap());
    let local = run_local(&pl.params, &pl.grid, &init, &pl.th, &scfg);
    let global = run_global(&pl.params, &pl.grid, &InitPolicy::default(), Some(&pl.th), &scfg);
    let secs = start.elapsed().as_secs_f64();
    let (local, global) = match (local, global) {
        (Ok(l), Ok(g)) => (l, g),
        (l, g) => {
            return (
                verdict(false, format!("local: {:?}; global: {:?}", l.err().map(|e| e.to_string()), g.err().map(|e| e.to_string()))),
                None,
            )
        }
    };
    let b = &pl.bounds;
    let (l, g) = (&local.report, &global.report);
    let checks = [
        ("both converged", l.converged && g.converged),
        ("E(ũ) < 0 < E(u⁻) < level", g.values.e < 0.0 && 0.0 < l.values.e && l.values.e < b.level),
        ("A(u⁻) < kinetic bound < A(ũ)", l.values.a < b.kinetic && b.kinetic < g.values.a),
        ("λ > 0", l.lambda > 0.0 && g.lambda > 0.0),
        ("|Q|/A < 1e-6", l.pohozaev_residual < 1e-6 && g.pohozaev_residual < 1e-6),
        ("g''(1) signs", l.g2_at_one < 0.0 && g.g2_at_one > 0.0),
        ("runtime < 30 min", secs < 1800.0),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let v = verdict(
        failed.is_empty(),
        format!(
            "μ_β = {:.6e}; u⁻: {}; ũ: {}; level {:.4}, kinetic {:.4}; {secs:.1} s{}",
            pl.params.mu_beta,
            branch_line(&local),
            branch_line(&global),
            b.level,
            b.kinetic,
            if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
        ),
    );
    (v, Some(global))
}

// ---------------------------------------------------------------------------
// 8, 11. Sweeps.

fn row_errors(rows: &[SweepRow]) -> Vec<String> {
    rows.iter()
        .filter(|r| r.failed())
        .map(|r| format!("value {}: {}", r.value, r.error.clone().unwrap_or_else(|| "not converged".into())))
        .collect()
}

fn criterion_8(pl: &Pipeline) -> Verdict {
    let mut cfg = pl.cfg.clone();
    cfg.model = pl.params;
    let rows = match sweep_rows(&cfg, Axis::Mass, &[0.8, 1.0, 1.2], false) {
        Ok(r) => r,
        Err(e) => return verdict(false, e.to_string()),
    };
    let sigma: Vec<f64> = rows.iter().map(|r| r.e_global).collect();
    let monotone = sigma.windows(2).all(|w| w[0] >= w[1] - 1e-6 * w[1].abs());
    let errs = row_errors(&rows);
    verdict(
        monotone && errs.is_empty(),
        format!(
            "σ(0.8), σ(1.0), σ(1.2) = {:.9e}, {:.9e}, {:.9e}{}",
            sigma[0],
            sigma[1],
            sigma[2],
            if errs.is_empty() { String::new() } else { format!("; failed rows: {}", errs.join("; ")) }
        ),
    )
}

fn criterion_11(pl: &Pipeline) -> Verdict {
    let mut cfg = pl.cfg.clone();
    cfg.model = pl.params;
    let rows = match sweep_rows(&cfg, Axis::MuBeta, &[-0.8, -0.5, -0.3], true) {
        Ok(r) => r,
        Err(e) => return verdict(false, e.to_string()),
    };
    let a: Vec<f64> = rows.iter().map(|r| r.a_global).collect();
    let increasing = a.windows(2).all(|w| w[0] < w[1]);
    let above = rows.iter().all(|r| r.a_global > r.global_kinetic_floor);
    let errs = row_errors(&rows);
    verdict(
        increasing && above && errs.is_empty(),
        format!(
            "A(ũ) = {} against floors {}{}",
            a.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(", "),
            rows.iter().map(|r| format!("{:.4e}", r.global_kinetic_floor)).collect::<Vec<_>>().join(", "),
            if errs.is_empty() { String::new() } else { format!("; failed rows: {}", errs.join("; ")) }
        ),
    )
}

// ---------------------------------------------------------------------------
// 9–10. Dynamics on the global solution.

const T_END: f64 = 10.0;
const DT: f64 = 1e-3;

fn criterion_9(u: &Field, params: &ModelParams) -> Verdict {
    let kernels = Kernels::new(&u.grid, params).unwrap();
    let psi0 = dynamics::perturb(u, 1e-2, 0x5eed, 0.25, &kernels.spectral);
    let monitors = Monitors {
        cadence: 10,
        energy_abort: (!full_runs()).then_some(1e-5),
        ..Default::default()
    };
    let (_, trace) = match dynamics::evolve(&psi0, T_END, DT, params, &kernels, &monitors) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("evolution failed: {e}")),
    };
    let horizon = *trace.times.last().unwrap();
    let reversal = dynamics::time_reversal_error(&psi0, horizon, DT, params, &kernels).unwrap_or(f64::NAN)
        / mass(&psi0).sqrt();
    let (md, ed) = (trace.mass_drift(), trace.energy_drift());
    let complete = trace.aborted.is_none();
    verdict(
        complete && md < 1e-12 && ed < 1e-5 && reversal < 1e-6,
        format!(
            "mass drift {md:.2e}, energy drift {ed:.2e}, time-reversal error {reversal:.2e} over t ∈ [0, {horizon}]{}; dt·λ = {:.2e}",
            trace.aborted.as_ref().map(|a| format!(" (stopped: {a})")).unwrap_or_default(),
            DT * evaluate_lambda(u, params, &kernels)
        ),
    )
}

fn evaluate_lambda(u: &Field, params: &ModelParams, kernels: &Kernels) -> f64 {
    let v = evaluate(u, params, kernels).unwrap();
    (v.b_alpha - v.a + params.mu_beta * v.b_beta) / v.mass
}

fn criterion_10(u: &Field, params: &ModelParams) -> Verdict {
    let kernels = Kernels::new(&u.grid, params).unwrap();
    let delta0 = 1e-2;
    let cfg = StabilityConfig {
        delta0,
        t_end: T_END,
        dt: DT,
        stop_when_unstable: !full_runs(),
        ..StabilityConfig::default()
    };
    let rep = match dynamics::stability_experiment(u, params, &kernels, &cfg) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("perturbed run failed: {e}")),
    };
    let monitors = Monitors {
        cadence: 10,
        reference: Some(u.clone()),
        modulus_abort: (!full_runs()).then_some(1e-4),
        ..Default::default()
    };
    let (_, still) = match dynamics::evolve(u, T_END, DT, params, &kernels, &monitors) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("standing-wave run failed: {e}")),
    };
    let dev = still.modulus_deviation.as_deref().unwrap_or(&[]).iter().fold(0.0_f64, |m, d| m.max(*d));
    let complete = rep.trace.aborted.is_none() && still.aborted.is_none();
    verdict(
        complete && rep.stable_flag && dev < 1e-4,
        format!(
            "perturbed: size {:.2e}, max orbit distance {:.2e} (limit {:.1e}) up to t = {}{}; standing wave: max || |ψ|-|ũ| || = {dev:.2e} (limit 1e-4) up to t = {}{}",
            rep.perturbation_size,
            rep.max_distance,
            5.0 * delta0,
            rep.trace.times.last().unwrap(),
            rep.trace.aborted.as_ref().map(|a| format!(" (stopped: {a})")).unwrap_or_default(),
            still.times.last().unwrap(),
            still.aborted.as_ref().map(|a| format!(" (stopped: {a})")).unwrap_or_default(),
        ),
    )
}

fn main() {
    // Only the acceptance run itself; ignore libtest flags such as --nocapture.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let out: PathBuf = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&out);
    let mut cfg = RunConfig::default();
    cfg.output_dir = out;
    cfg.grid.points = 64;
    cfg.grid.half_length = 12.0;
    cfg.model = ModelParams::new(3, ALPHA, BETA, -0.02, 1.0).unwrap();

    let started = Instant::now();
    let passed = std::cell::Cell::new(0);
    let tally = |n: usize, title: &str, f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = f();
        report(n, title, &v, t.elapsed());
        if v.pass {
            passed.set(passed.get() + 1);
        }
    };
    tally(1, "convolution oracle", &mut criterion_1);
    tally(2, "gaussian analytics", &mut criterion_2);
    tally(3, "gradient correctness", &mut criterion_3);
    tally(4, "fibering laws", &mut criterion_4);

    // Criterion 5 needs the thresholds of criterion 6; compute those first.
    let t6 = Instant::now();
    let (v6, pipeline) = criterion_6(&cfg);
    let d6 = t6.elapsed();
    let pipeline = pipeline.map(|(th, params)| Pipeline {
        grid: cfg.grid_spec().unwrap(),
        bounds: solution_bounds(&params, &th),
        cfg: cfg.clone(),
        th,
        params,
    });
    let missing = || verdict(false, "baseline pipeline unavailable");
    tally(5, "regime shapes", &mut || match &pipeline {
        Some(pl) => criterion_5(&pl.th, &pl.params),
        None => missing(),
    });
    report(6, "hartree baseline", &v6, d6);
    if v6.pass {
        passed.set(passed.get() + 1);
    }
    let mut global = None;
    tally(7, "two-solution structure", &mut || match &pipeline {
        Some(pl) => {
            let (v, g) = criterion_7(pl);
            global = g;
            v
        }
        None => missing(),
    });
    tally(8, "σ(c) monotonicity", &mut || match &pipeline {
        Some(pl) => criterion_8(pl),
        None => missing(),
    });
    let u = global.as_ref().map(|g| g.report.solution().clone());
    let params = pipeline.as_ref().map(|p| p.params);
    tally(9, "dynamics conservation", &mut || match (&u, &params) {
        (Some(u), Some(p)) => criterion_9(u, p),
        _ => verdict(false, "no global solution"),
    });
    tally(10, "orbital-stability proxy", &mut || match (&u, &params) {
        (Some(u), Some(p)) => criterion_10(u, p),
        _ => verdict(false, "no global solution"),
    });
    tally(11, "μ_β trend", &mut || match &pipeline {
        Some(pl) => criterion_11(pl),
        None => missing(),
    });
    println!(
        "acceptance: {}/11 criteria passed in {:.1} min",
        passed.get(),
        started.elapsed().as_secs_f64() / 60.0
    );
}
