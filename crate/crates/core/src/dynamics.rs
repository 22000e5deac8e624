//! Time integration of `i psi_t + Laplacian psi + (W * |psi|^2) psi = 0`,
//! `W = |x|^{-alpha} + mu_beta |x|^{-beta}`, by Strang splitting.
//!
//! The nonlinear substep `psi <- exp(i h V[psi]) psi` preserves `|psi|`, hence
//! `V`, so it is solved exactly; the kinetic substep is exact in Fourier space.
//! Both are unitary, and the composition is symmetric, so `S(-dt) S(dt) = id`
//! up to roundoff.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::functional::{evaluate, FunctionalError, Kernels, ModelParams};
use crate::grid::{mass, Field, Spectral};
use crate::riesz::RieszError;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("final time must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("field and kernels live on different grids")]
    GridMismatch,
    #[error("non-finite field at t = {time}")]
    NonFinite { time: f64, trace: Box<EvolutionTrace> },
    #[error(transparent)]
    Riesz(#[from] RieszError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
    pub kinetic: Vec<f64>,
    /// One `N`-vector per sample.
    pub momentum: Vec<Vec<f64>>,
    /// H^1 distance to the orbit of the reference, when one is monitored.
    pub orbit_distance: Option<Vec<f64>>,
    /// `|| |psi| - |u| ||_2` against the reference.
    pub modulus_deviation: Option<Vec<f64>>,
    /// Set when a guard stopped the run early.
    pub aborted: Option<String>,
}

impl EvolutionTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn max_rel_drift(series: &[f64]) -> f64 {
        let Some(&first) = series.first() else {
            return 0.0;
        };
        let scale = first.abs().max(f64::MIN_POSITIVE);
        series.iter().map(|v| (v - first).abs() / scale).fold(0.0, f64::max)
    }

    pub fn mass_drift(&self) -> f64 {
        Self::max_rel_drift(&self.mass)
    }

    pub fn energy_drift(&self) -> f64 {
        Self::max_rel_drift(&self.energy)
    }

    pub fn max_momentum(&self) -> f64 {
        self.momentum
            .iter()
            .flat_map(|p| p.iter().map(|v| v.abs()))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct Monitors {
    /// Sample every `cadence` steps (and at the final time).
    pub cadence: usize,
    pub reference: Option<Field>,
    /// Stop once the relative energy drift exceeds this.
    pub energy_abort: Option<f64>,
    /// Stop once the orbit distance to `reference` exceeds this.
    pub orbit_abort: Option<f64>,
    /// Stop once `|| |psi| - |reference| ||_2` exceeds this.
    pub modulus_abort: Option<f64>,
}

impl Default for Monitors {
    fn default() -> Self {
        Self {
            cadence: 10,
            reference: None,
            energy_abort: None,
            orbit_abort: None,
            modulus_abort: None,
        }
    }
}

fn abort_reason(trace: &EvolutionTrace, monitors: &Monitors, t: f64) -> Option<String> {
    let last = |v: &Option<Vec<f64>>| v.as_ref().and_then(|v| v.last().copied());
    if let Some(limit) = monitors.energy_abort {
        let drift = trace.energy_drift();
        if drift > limit {
            return Some(format!("energy drift {drift:.3e} exceeded {limit:.3e} at t = {t}"));
        }
    }
    if let (Some(limit), Some(d)) = (monitors.orbit_abort, last(&trace.orbit_distance)) {
        if d > limit {
            return Some(format!("orbit distance {d:.3e} exceeded {limit:.3e} at t = {t}"));
        }
    }
    if let (Some(limit), Some(d)) = (monitors.modulus_abort, last(&trace.modulus_deviation)) {
        if d > limit {
            return Some(format!("modulus deviation {d:.3e} exceeded {limit:.3e} at t = {t}"));
        }
    }
    None
}

/// `V = |x|^{-alpha} * |psi|^2 + mu_beta |x|^{-beta} * |psi|^2`.
pub fn interaction_potential(psi: &Field, params: &ModelParams, kernels: &Kernels) -> Result<Vec<f64>, DynamicsError> {
    if psi.grid != kernels.grid {
        return Err(DynamicsError::GridMismatch);
    }
    let rho = psi.densities();
    Ok(match &kernels.beta {
        Some(kb) => kernels
            .convolver
            .combined_potential(&kernels.alpha, 1.0, kb, params.mu_beta, &rho)?,
        None => kernels.convolver.potential(&kernels.alpha, &rho)?,
    })
}

struct Stepper<'a> {
    params: &'a ModelParams,
    kernels: &'a Kernels,
    dt: f64,
    kinetic_phase: Vec<Complex64>,
}

impl<'a> Stepper<'a> {
    fn new(params: &'a ModelParams, kernels: &'a Kernels, dt: f64) -> Self {
        let kinetic_phase = kernels
            .spectral
            .k_squared()
            .iter()
            .map(|k2| Complex64::from_polar(1.0, -dt * k2))
            .collect();
        Self {
            params,
            kernels,
            dt,
            kinetic_phase,
        }
    }

    fn half_phase(&self, psi: &mut Field, v: &[f64]) {
        let h = 0.5 * self.dt;
        psi.values
            .iter_mut()
            .zip(v)
            .for_each(|(z, vi)| *z *= Complex64::from_polar(1.0, h * vi));
    }

    /// One Strang step. `cache` holds the potential of the current modulus; the
    /// phase substep leaves the modulus alone, so the closing potential of one
    /// step is the opening potential of the next.
    fn step(&self, psi: &mut Field, cache: &mut Option<Vec<f64>>) -> Result<(), DynamicsError> {
        let v = match cache.take() {
            Some(v) => v,
            None => interaction_potential(psi, self.params, self.kernels)?,
        };
        self.half_phase(psi, &v);
        let spectral = &self.kernels.spectral;
        let mut hat = spectral.forward(&psi.values);
        hat.iter_mut().zip(&self.kinetic_phase).for_each(|(z, p)| *z *= p);
        psi.values = spectral.inverse(&hat);
        let v = interaction_potential(psi, self.params, self.kernels)?;
        self.half_phase(psi, &v);
        *cache = Some(v);
        Ok(())
    }
}

fn check_step(dt: f64) -> Result<(), DynamicsError> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(DynamicsError::BadStep(dt))
    }
}

pub fn strang_step(psi: &Field, dt: f64, params: &ModelParams, kernels: &Kernels) -> Result<Field, DynamicsError> {
    check_step(dt)?;
    if psi.grid != kernels.grid {
        return Err(DynamicsError::GridMismatch);
    }
    let mut out = psi.clone();
    Stepper::new(params, kernels, dt).step(&mut out, &mut None)?;
    Ok(out)
}

fn n_steps(t_end: f64, dt: f64) -> Result<usize, DynamicsError> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(DynamicsError::BadHorizon(t_end));
    }
    check_step(dt)?;
    Ok(((t_end / dt).round() as usize).max(1))
}

fn sample(
    trace: &mut EvolutionTrace,
    t: f64,
    psi: &Field,
    params: &ModelParams,
    kernels: &Kernels,
    monitors: &Monitors,
) -> Result<(), DynamicsError> {
    let v = evaluate(psi, params, kernels)?;
    trace.times.push(t);
    trace.mass.push(v.mass);
    trace.energy.push(v.e);
    trace.kinetic.push(v.a);
    trace.momentum.push(kernels.spectral.momentum(psi));
    if let Some(u) = &monitors.reference {
        let d = orbit_distance(psi, u, &kernels.spectral)?;
        trace.orbit_distance.get_or_insert_with(Vec::new).push(d);
        let dev: f64 = psi
            .values
            .iter()
            .zip(&u.values)
            .map(|(a, b)| (a.norm() - b.norm()).powi(2))
            .sum::<f64>()
            * psi.grid.cell_volume();
        trace.modulus_deviation.get_or_insert_with(Vec::new).push(dev.sqrt());
    }
    Ok(())
}

fn run(
    psi0: &Field,
    steps: usize,
    dt: f64,
    params: &ModelParams,
    kernels: &Kernels,
    monitors: &Monitors,
) -> Result<(Field, EvolutionTrace), DynamicsError> {
    if psi0.grid != kernels.grid {
        return Err(DynamicsError::GridMismatch);
    }
    let stepper = Stepper::new(params, kernels, dt);
    let mut psi = psi0.clone();
    let mut trace = EvolutionTrace::default();
    sample(&mut trace, 0.0, &psi, params, kernels, monitors)?;
    let v0 = interaction_potential(&psi, params, kernels)?;
    let vmax = v0.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if dt.abs() * vmax > 0.5 {
        log::warn!("dt * max|V| = {:.3e} exceeds 0.5; phases are under-resolved", dt.abs() * vmax);
    }
    let mut cache = Some(v0);
    let cadence = monitors.cadence.max(1);
    for n in 1..=steps {
        stepper.step(&mut psi, &mut cache)?;
        let t = n as f64 * dt;
        if !psi.is_finite() {
            return Err(DynamicsError::NonFinite {
                time: t,
                trace: Box::new(trace),
            });
        }
        if n % cadence == 0 || n == steps {
            sample(&mut trace, t, &psi, params, kernels, monitors)?;
            if let Some(reason) = abort_reason(&trace, monitors, t) {
                trace.aborted = Some(reason);
                break;
            }
        }
    }
    Ok((psi, trace))
}

/// Evolves to `t_end` (rounded to a whole number of steps).
pub fn evolve(
    psi0: &Field,
    t_end: f64,
    dt: f64,
    params: &ModelParams,
    kernels: &Kernels,
    monitors: &Monitors,
) -> Result<(Field, EvolutionTrace), DynamicsError> {
    let steps = n_steps(t_end, dt)?;
    run(psi0, steps, dt, params, kernels, monitors)
}

/// `||S(-dt)^n S(dt)^n psi0 - psi0||_2`, with `n dt = t_end`.
pub fn time_reversal_error(
    psi0: &Field,
    t_end: f64,
    dt: f64,
    params: &ModelParams,
    kernels: &Kernels,
) -> Result<f64, DynamicsError> {
    let steps = n_steps(t_end, dt)?;
    let quiet = Monitors {
        cadence: usize::MAX,
        ..Default::default()
    };
    let (forward, _) = run(psi0, steps, dt, params, kernels, &quiet)?;
    let (back, _) = run(&forward, steps, -dt, params, kernels, &quiet)?;
    let err: f64 = back
        .values
        .iter()
        .zip(&psi0.values)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        * psi0.grid.cell_volume();
    Ok(err.sqrt())
}

fn h1_inner_spectrum(spectral: &Spectral, f: &[Complex64], g: &[Complex64]) -> Vec<Complex64> {
    // conj(f^) g^ (1 + |k|^2): transforms to the H^1 cross-correlation.
    f.iter()
        .zip(g)
        .zip(spectral.k_squared())
        .map(|((a, b), k2)| a.conj() * b * (1.0 + k2))
        .collect()
}

fn roll(field: &Field, shift: [usize; 3]) -> Field {
    let g = field.grid;
    let m = g.points;
    let mut values = vec![Complex64::new(0.0, 0.0); g.len()];
    for (flat, slot) in values.iter_mut().enumerate() {
        let idx = g.unravel(flat);
        let mut src = 0;
        for d in 0..g.dim {
            src = src * m + (idx[d] + m - shift[d]) % m;
        }
        *slot = field.values[src];
    }
    Field { grid: g, values }
}

/// `min_{theta, a} || e^{i theta} psi(. - a) - u ||_{H^1}` over global phases and
/// lattice translations. The maximizing translation is the peak of the H^1
/// cross-correlation; the optimal phase aligns the inner product.
pub fn orbit_distance(psi: &Field, u: &Field, spectral: &Spectral) -> Result<f64, DynamicsError> {
    if psi.grid != u.grid || psi.grid != spectral.grid {
        return Err(DynamicsError::GridMismatch);
    }
    let g = psi.grid;
    let ph = spectral.forward(&psi.values);
    let uh = spectral.forward(&u.values);
    // corr(a) = sum_x conj(u_H(x)) psi(x - a): correlate in reverse via conj(psi^) u^.
    let corr = spectral.inverse(&h1_inner_spectrum(spectral, &ph, &uh));
    let (best, _) = corr
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc });
    let shift = g.unravel(best);
    let shifted = roll(psi, shift);
    let sh = spectral.forward(&shifted.values);
    let overlap: Complex64 = h1_inner_spectrum(spectral, &sh, &uh).iter().sum();
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let diff: f64 = sh
        .iter()
        .zip(&uh)
        .zip(spectral.k_squared())
        .map(|((a, b), k2)| (a * phase - b).norm_sqr() * (1.0 + k2))
        .sum();
    Ok((diff * g.cell_volume() / g.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    /// Perturbation size relative to `||u||_{H^1}`.
    pub delta0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    /// Stable when the relative orbit distance stays below `factor * delta0`.
    pub factor: f64,
    /// Perturbation band as a fraction of the Nyquist wavenumber.
    pub band: f64,
    pub cadence: usize,
    /// End the run as soon as the distance leaves the stability band.
    pub stop_when_unstable: bool,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            delta0: 1e-2,
            t_end: 10.0,
            dt: 1e-3,
            seed: 0x5eed,
            factor: 5.0,
            band: 0.25,
            cadence: 10,
            stop_when_unstable: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Initial relative H^1 distance of the perturbed data to the orbit.
    pub perturbation_size: f64,
    /// Largest relative orbit distance over the run.
    pub max_distance: f64,
    pub stable_flag: bool,
    pub reference_norm: f64,
    pub trace: EvolutionTrace,
}

/// Adds a seeded random field band-limited to `|k| <= band * k_Nyquist`, scaled
/// to relative H^1 size `delta0`, then restores the mass of `u`.
pub fn perturb(u: &Field, delta0: f64, seed: u64, band: f64, spectral: &Spectral) -> Field {
    if delta0 == 0.0 {
        return u.clone();
    }
    let g = u.grid;
    let kc = band * std::f64::consts::PI / g.spacing();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hat: Vec<Complex64> = spectral
        .k_squared()
        .iter()
        .map(|&k2| {
            let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if k2.sqrt() <= kc {
                z
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let noise = Field {
        grid: g,
        values: spectral.inverse(&hat),
    };
    let scale = delta0 * spectral.h1_norm_sqr(u).sqrt() / spectral.h1_norm_sqr(&noise).sqrt();
    let values = u.values.iter().zip(&noise.values).map(|(a, b)| a + b * scale).collect();
    Field { grid: g, values }.normalized_to(mass(u))
}

pub fn stability_experiment(
    u: &Field,
    params: &ModelParams,
    kernels: &Kernels,
    cfg: &StabilityConfig,
) -> Result<StabilityReport, DynamicsError> {
    let spectral = &kernels.spectral;
    let psi0 = perturb(u, cfg.delta0, cfg.seed, cfg.band, spectral);
    let norm = spectral.h1_norm_sqr(u).sqrt();
    let monitors = Monitors {
        cadence: cfg.cadence,
        reference: Some(u.clone()),
        orbit_abort: cfg.stop_when_unstable.then_some(cfg.factor * cfg.delta0 * norm),
        ..Default::default()
    };
    let (_, trace) = evolve(&psi0, cfg.t_end, cfg.dt, params, kernels, &monitors)?;
    let dist = trace.orbit_distance.as_deref().unwrap_or(&[]);
    let perturbation_size = dist.first().copied().unwrap_or(0.0) / norm;
    let max_distance = dist.iter().fold(0.0_f64, |m, d| m.max(*d)) / norm;
    Ok(StabilityReport {
        perturbation_size,
        max_distance,
        stable_flag: max_distance < cfg.factor * cfg.delta0,
        reference_norm: norm,
        trace,
    })
}
