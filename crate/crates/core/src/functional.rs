//! Energy `E`, Pohozaev functional `Q`, the `L^2` gradient, the Lagrange
//! multiplier, Gagliardo–Nirenberg constants, thresholds and regimes.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Field, GridError, GridSpec, Spectral};
use crate::riesz::{build_kernel, pairing, Convolver, RieszError, RieszKernel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionalError {
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("mass must be positive, got {0}")]
    BadMass(f64),
    #[error("thresholds need 2 < alpha < beta < min(N, 4) and mu_beta < 0")]
    NotCaseIv,
    #[error(transparent)]
    Riesz(#[from] RieszError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// `(N, alpha, beta, mu_beta, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dim: usize,
    pub alpha: f64,
    pub beta: f64,
    pub mu_beta: f64,
    #[serde(alias = "mass")]
    pub mass_target: f64,
}

impl ModelParams {
    pub fn new(dim: usize, alpha: f64, beta: f64, mu_beta: f64, mass_target: f64) -> Result<Self, FunctionalError> {
        let p = Self {
            dim,
            alpha,
            beta,
            mu_beta,
            mass_target,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), FunctionalError> {
        let cap = critical_exponent(self.dim);
        let bad = |msg: String| Err(FunctionalError::BadParams(msg));
        if self.dim == 0 {
            return bad("dimension must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < cap) {
            return bad(format!("alpha = {} outside (0, {cap})", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta < cap) {
            return bad(format!("beta = {} outside (0, {cap})", self.beta));
        }
        if self.alpha == self.beta {
            return bad("alpha and beta must differ".into());
        }
        if !self.mu_beta.is_finite() {
            return bad("mu_beta must be finite".into());
        }
        if !(self.mass_target > 0.0 && self.mass_target.is_finite()) {
            return Err(FunctionalError::BadMass(self.mass_target));
        }
        Ok(())
    }

    pub fn with_mu(self, mu_beta: f64) -> Self {
        Self { mu_beta, ..self }
    }

    pub fn with_mass(self, mass_target: f64) -> Self {
        Self { mass_target, ..self }
    }
}

/// `min(N, 4)`.
pub fn critical_exponent(dim: usize) -> f64 {
    (dim as f64).min(4.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "I")]
    CaseI,
    #[serde(rename = "II")]
    CaseII,
    #[serde(rename = "III")]
    CaseIII,
    #[serde(rename = "IV")]
    CaseIV,
    Unclassified,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::CaseI => "I",
            Regime::CaseII => "II",
            Regime::CaseIII => "III",
            Regime::CaseIV => "IV",
            Regime::Unclassified => "Unclassified",
        }
    }
}

/// Fibering geometry class. Total on any parameter values; the
/// endpoint `beta = min(N, 4)` with `N = 3` is left unclassified.
pub fn regime_classify(params: &ModelParams) -> Regime {
    let (a, b, mu) = (params.alpha, params.beta, params.mu_beta);
    let cap = critical_exponent(params.dim);
    if mu > 0.0 {
        if 0.0 < a && a < b && b <= 2.0 {
            return Regime::CaseI;
        }
        if 0.0 < a && a < 2.0 && 2.0 < b && b < cap {
            return Regime::CaseII;
        }
        if 2.0 <= a && a < b && b < cap {
            return Regime::CaseIII;
        }
    } else if mu < 0.0 {
        if 0.0 < b && b < a && a < 2.0 {
            return Regime::CaseI;
        }
        if b.max(2.0) < a && a < cap {
            return Regime::CaseIII;
        }
        if 2.0 < a && a < b && b < cap {
            return Regime::CaseIV;
        }
    }
    Regime::Unclassified
}

/// Kernels and transform plans for one grid. `beta` is absent for the
/// single-potential problem.
#[derive(Debug, Clone)]
pub struct Kernels {
    pub grid: GridSpec,
    pub alpha: RieszKernel,
    pub beta: Option<RieszKernel>,
    pub spectral: Spectral,
    pub convolver: Convolver,
}

impl Kernels {
    pub fn new(grid: &GridSpec, params: &ModelParams) -> Result<Self, FunctionalError> {
        let alpha = build_kernel(grid, params.alpha)?;
        let beta = build_kernel(grid, params.beta)?;
        Ok(Self::from_parts(alpha, Some(beta)))
    }

    pub fn single(grid: &GridSpec, gamma: f64) -> Result<Self, FunctionalError> {
        Ok(Self::from_parts(build_kernel(grid, gamma)?, None))
    }

    pub fn from_parts(alpha: RieszKernel, beta: Option<RieszKernel>) -> Self {
        let grid = alpha.grid;
        Self {
            grid,
            alpha,
            beta,
            spectral: Spectral::new(grid),
            convolver: Convolver::new(grid),
        }
    }

    /// Kernels for the lattice dilated by `x -> x / s` (exactly covariant).
    pub fn rescaled(&self, s: f64) -> Self {
        Self::from_parts(self.alpha.rescaled(s), self.beta.as_ref().map(|k| k.rescaled(s)))
    }

    /// `(V_alpha, V_beta)` for the density `rho`; `V_beta` is empty when absent.
    pub fn potentials(&self, rho: &[f64]) -> Result<(Vec<f64>, Vec<f64>), RieszError> {
        match &self.beta {
            Some(kb) => self.convolver.potential_pair(&self.alpha, kb, rho),
            None => Ok((self.convolver.potential(&self.alpha, rho)?, Vec::new())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalValues {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B_alpha")]
    pub b_alpha: f64,
    #[serde(rename = "B_beta")]
    pub b_beta: f64,
    pub mass: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(default)]
    pub lambda: Option<f64>,
}

impl FunctionalValues {
    pub fn from_parts(a: f64, b_alpha: f64, b_beta: f64, mass: f64, params: &ModelParams) -> Self {
        let mu = params.mu_beta;
        Self {
            a,
            b_alpha,
            b_beta,
            mass,
            e: a / 2.0 - b_alpha / 4.0 - mu * b_beta / 4.0,
            q: a - params.alpha * b_alpha / 4.0 - mu * params.beta * b_beta / 4.0,
            lambda: None,
        }
    }

    /// Values for the dilation `u_s`, from the scaling laws.
    pub fn dilated(&self, s: f64, params: &ModelParams) -> Self {
        let mut out = Self::from_parts(
            s * s * self.a,
            s.powf(params.alpha) * self.b_alpha,
            s.powf(params.beta) * self.b_beta,
            self.mass,
            params,
        );
        out.lambda = self.lambda;
        out
    }
}

/// Functionals plus the intermediate potentials, reusable for the gradient.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub values: FunctionalValues,
    pub v_alpha: Vec<f64>,
    pub v_beta: Vec<f64>,
    pub spectrum: Vec<Complex64>,
}

pub fn evaluate_full(u: &Field, params: &ModelParams, kernels: &Kernels) -> Result<Evaluation, FunctionalError> {
    if u.grid != kernels.grid {
        return Err(FunctionalError::Riesz(RieszError::GridMismatch));
    }
    let rho = u.densities();
    let (v_alpha, v_beta) = kernels.potentials(&rho)?;
    let spectrum = kernels.spectral.forward(&u.values);
    let a = kernels.spectral.kinetic_from_spectrum(&spectrum);
    let b_alpha = pairing(&u.grid, &rho, &v_alpha);
    let b_beta = if v_beta.is_empty() {
        0.0
    } else {
        pairing(&u.grid, &rho, &v_beta)
    };
    let mass = rho.iter().sum::<f64>() * u.grid.cell_volume();
    let mut p = *params;
    if kernels.beta.is_none() {
        p.mu_beta = 0.0;
    }
    Ok(Evaluation {
        values: FunctionalValues::from_parts(a, b_alpha, b_beta, mass, &p),
        v_alpha,
        v_beta,
        spectrum,
    })
}

pub fn evaluate(u: &Field, params: &ModelParams, kernels: &Kernels) -> Result<FunctionalValues, FunctionalError> {
    Ok(evaluate_full(u, params, kernels)?.values)
}

/// `a (-Laplacian u) - b V_alpha u - c V_beta u` from a finished evaluation.
pub fn weighted_gradient(u: &Field, ev: &Evaluation, kernels: &Kernels, weights: [f64; 3]) -> Field {
    let [wk, wa, wb] = weights;
    let mut hat = ev.spectrum.clone();
    hat.iter_mut().zip(kernels.spectral.k_squared()).for_each(|(z, k2)| *z *= k2);
    let mut values = kernels.spectral.inverse(&hat);
    for (i, slot) in values.iter_mut().enumerate() {
        let mut v = wa * ev.v_alpha[i];
        if !ev.v_beta.is_empty() {
            v += wb * ev.v_beta[i];
        }
        *slot = wk * *slot - v * u.values[i];
    }
    Field { grid: u.grid, values }
}

/// `grad E(u) = -Laplacian u - (|x|^{-alpha} * |u|^2) u - mu_beta (|x|^{-beta} * |u|^2) u`.
pub fn l2_gradient(u: &Field, params: &ModelParams, kernels: &Kernels) -> Result<Field, FunctionalError> {
    let ev = evaluate_full(u, params, kernels)?;
    Ok(weighted_gradient(u, &ev, kernels, [1.0, 1.0, params.mu_beta]))
}

/// `lambda c = B_alpha - A + mu_beta B_beta`.
pub fn lagrange_multiplier(values: &FunctionalValues, mu_beta: f64, c: f64) -> Result<f64, FunctionalError> {
    if !(c > 0.0) {
        return Err(FunctionalError::BadMass(c));
    }
    Ok((values.b_alpha - values.a + mu_beta * values.b_beta) / c)
}

/// The same multiplier after eliminating `B_alpha` with `Q = 0`:
/// `lambda c = (4 - alpha)/alpha A + mu_beta (alpha - beta)/alpha B_beta`.
pub fn lagrange_multiplier_on_pohozaev(values: &FunctionalValues, params: &ModelParams, c: f64) -> Result<f64, FunctionalError> {
    if !(c > 0.0) {
        return Err(FunctionalError::BadMass(c));
    }
    let a = params.alpha;
    Ok(((4.0 - a) / a * values.a + params.mu_beta * (a - params.beta) / a * values.b_beta) / c)
}

/// `S_gamma = ((4-gamma)/gamma)^{gamma/2} 4 / ((4-gamma) ||Q_gamma||^2)` from the
/// mass of the ground state of `-Delta Q + Q = (|x|^{-gamma} * Q^2) Q`.
pub fn gn_constant(gamma: f64, dim: usize, q_mass: f64) -> Result<f64, FunctionalError> {
    if !(q_mass > 0.0) {
        return Err(FunctionalError::BadMass(q_mass));
    }
    if !(gamma > 0.0 && gamma < critical_exponent(dim)) {
        return Err(FunctionalError::BadParams(format!("gamma = {gamma} outside (0, min(N, 4))")));
    }
    Ok(((4.0 - gamma) / gamma).powf(gamma / 2.0) * 4.0 / ((4.0 - gamma) * q_mass))
}

/// `B / (A^{gamma/2} mass^{(4-gamma)/2})`; equals `S_gamma` at an optimizer.
pub fn gn_quotient(gamma: f64, a: f64, b: f64, mass: f64) -> f64 {
    b / (a.powf(gamma / 2.0) * mass.powf((4.0 - gamma) / 2.0))
}

/// Mass of the unit-frequency ground state `Q_gamma`, from a ground state
/// with multiplier `lambda` and mass `c`: `||Q||^2 = lambda^{(gamma-2)/2} c`.
pub fn unit_frequency_mass(gamma: f64, lambda: f64, c: f64) -> f64 {
    lambda.powf((gamma - 2.0) / 2.0) * c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub m_infty: f64,
    #[serde(rename = "S_alpha")]
    pub s_alpha: f64,
    #[serde(rename = "S_beta")]
    pub s_beta: f64,
    #[serde(rename = "Gamma")]
    pub gamma: f64,
    pub mu_star: f64,
    pub mu_admissible: f64,
}

pub fn is_case_iv(params: &ModelParams) -> bool {
    regime_classify(params) == Regime::CaseIV
}

/// The admissible-window thresholds of the two-solution regime.
pub fn thresholds(params: &ModelParams, m_infty: f64, s_alpha: f64, s_beta: f64) -> Result<Thresholds, FunctionalError> {
    params.validate()?;
    if !is_case_iv(params) {
        return Err(FunctionalError::NotCaseIv);
    }
    if !(m_infty > 0.0 && s_beta > 0.0 && s_alpha > 0.0) {
        return Err(FunctionalError::BadParams(
            "m_infty, S_alpha and S_beta must be positive".into(),
        ));
    }
    let (a, b, c) = (params.alpha, params.beta, params.mass_target);
    let gamma = gamma_threshold(params, s_beta);
    let mu_star = 4.0 * (a - 2.0) / (a * (b - 2.0) * s_beta * c.powf((4.0 - b) / 2.0))
        * ((b - a) / (b - 2.0)).powf((b - 2.0) / (a - 2.0))
        * (b * (a - 2.0).powi(2) / (2.0 * a * a * (b - 2.0) * m_infty)).powf((b - 2.0) / 2.0);
    let factor = a * (b - 2.0) / (b * (b - a))
        * (2.0 / a).powf((b - 2.0) / (a - 2.0))
        * (a * (b - 2.0) / (b * (a - 2.0))).powf((b - 2.0) / 2.0);
    Ok(Thresholds {
        m_infty,
        s_alpha,
        s_beta,
        gamma,
        mu_star,
        mu_admissible: mu_star.min(factor * mu_star),
    })
}

/// `Gamma = 2(beta-2)/(beta-alpha) [|mu| beta (beta-alpha) S_beta c^{(4-beta)/2} / (4(alpha-2))]^{(alpha-2)/(beta-2)}`.
pub fn gamma_threshold(params: &ModelParams, s_beta: f64) -> f64 {
    let (a, b, c) = (params.alpha, params.beta, params.mass_target);
    let inner = params.mu_beta.abs() * b * (b - a) * s_beta * c.powf((4.0 - b) / 2.0) / (4.0 * (a - 2.0));
    2.0 * (b - 2.0) / (b - a) * inner.powf((a - 2.0) / (b - 2.0))
}

/// Explicit bounds that the two Case-iv solutions must respect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionBounds {
    /// Upper bound for `E(u^-)`.
    pub level: f64,
    /// Separates `A(u^-)` (below) from `A(tilde u)` (above).
    pub kinetic: f64,
    /// Lower bound for `A(tilde u)`.
    pub global_kinetic_floor: f64,
    /// Lower bound for `A(u^-)`.
    pub local_kinetic_floor: f64,
}

pub fn solution_bounds(params: &ModelParams, th: &Thresholds) -> SolutionBounds {
    let (a, b, c, m) = (params.alpha, params.beta, params.mass_target, th.m_infty);
    let bracket = (a * (b - 2.0) / (b * (b - a))).powf(2.0 / (b - 2.0));
    SolutionBounds {
        level: a * (b - 2.0).powi(2) * m / (b * b * (a - 2.0)) * bracket,
        kinetic: 2.0 * a * a * (b - 2.0) * m / (b * (a - 2.0).powi(2)) * bracket,
        global_kinetic_floor: (4.0 * (a - 2.0)
            / (params.mu_beta.abs() * th.s_beta * b * (b - a) * c.powf((4.0 - b) / 2.0)))
        .powf(2.0 / (b - 2.0)),
        local_kinetic_floor: (4.0 / (a * th.s_alpha * c.powf((4.0 - a) / 2.0))).powf(2.0 / (a - 2.0)),
    }
}
