//! Fibering-map analysis on the scalar triple `(A, B_alpha, B_beta)`.
//!
//! Along the mass-preserving dilation `u_s(x) = s^{N/2} u(s x)` the energy is
//! the explicit function
//! `g(s) = s^2 A/2 - s^alpha B_alpha/4 - mu s^beta B_beta/4`, so every root
//! find here is exact up to floating point and never touches a grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::functional::{FunctionalValues, ModelParams, Thresholds};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FiberError {
    #[error("dilation must be positive, got {0}")]
    BadDilation(f64),
    #[error("triple components must be finite and non-negative: {0:?}")]
    BadTriple(Triple),
    #[error("root bracketing failed near s = {0}")]
    BracketFailure(f64),
    #[error("triple outside V_D: Gamma A^(alpha/2) - B_alpha = {deficit:.6e} >= 0")]
    OutsideVd { deficit: f64 },
    #[error("no critical point of the requested kind on this fiber")]
    NoCriticalPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub a: f64,
    pub b_alpha: f64,
    pub b_beta: f64,
}

impl Triple {
    pub fn new(a: f64, b_alpha: f64, b_beta: f64) -> Self {
        Self { a, b_alpha, b_beta }
    }

    /// Dilation laws `A -> s^2 A`, `B_gamma -> s^gamma B_gamma`.
    pub fn dilated(&self, s: f64, params: &ModelParams) -> Self {
        Self {
            a: s * s * self.a,
            b_alpha: s.powf(params.alpha) * self.b_alpha,
            b_beta: s.powf(params.beta) * self.b_beta,
        }
    }

    fn validate(&self) -> Result<(), FiberError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if ok(self.a) && ok(self.b_alpha) && ok(self.b_beta) {
            Ok(())
        } else {
            Err(FiberError::BadTriple(*self))
        }
    }
}

impl From<&FunctionalValues> for Triple {
    fn from(v: &FunctionalValues) -> Self {
        Self::new(v.a, v.b_alpha, v.b_beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriticalKind {
    LocalMax,
    LocalMin,
    Inflection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberPoint {
    pub s: f64,
    pub g: f64,
    pub g1: f64,
    pub g2: f64,
    pub kind: Option<CriticalKind>,
}

pub fn fiber_eval(triple: &Triple, params: &ModelParams, s: f64) -> Result<FiberPoint, FiberError> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(FiberError::BadDilation(s));
    }
    triple.validate()?;
    let (al, be, mu) = (params.alpha, params.beta, params.mu_beta);
    let (a, ba, bb) = (triple.a, triple.b_alpha, triple.b_beta);
    let sa = s.powf(al);
    let sb = s.powf(be);
    Ok(FiberPoint {
        s,
        g: s * s * a / 2.0 - sa * ba / 4.0 - mu * sb * bb / 4.0,
        g1: s * a - al / 4.0 * sa / s * ba - mu * be / 4.0 * sb / s * bb,
        g2: a - al * (al - 1.0) / 4.0 * sa / (s * s) * ba - mu * be * (be - 1.0) / 4.0 * sb / (s * s) * bb,
        kind: None,
    })
}

/// `g'(s)/s` written as `c0 + sum_i d_i exp(p_i t)` with `t = ln s`.
#[derive(Debug, Clone)]
struct ExpSum {
    c0: f64,
    terms: Vec<(f64, f64)>,
}

impl ExpSum {
    fn new(triple: &Triple, params: &ModelParams) -> Self {
        let mut c0 = triple.a;
        let mut terms = Vec::new();
        for (d, p) in [
            (-params.alpha / 4.0 * triple.b_alpha, params.alpha - 2.0),
            (-params.mu_beta * params.beta / 4.0 * triple.b_beta, params.beta - 2.0),
        ] {
            if d == 0.0 {
                continue;
            }
            if p == 0.0 {
                c0 += d;
            } else {
                terms.push((d, p));
            }
        }
        Self { c0, terms }
    }

    fn eval(&self, t: f64) -> f64 {
        self.c0 + self.terms.iter().map(|(d, p)| d * (p * t).exp()).sum::<f64>()
    }

    fn magnitude(&self, t: f64) -> f64 {
        self.c0.abs() + self.terms.iter().map(|(d, p)| (d * (p * t).exp()).abs()).sum::<f64>()
    }

    /// The unique stationary point in `t`, if any.
    fn stationary(&self) -> Option<f64> {
        if let [(d1, p1), (d2, p2)] = self.terms[..] {
            let ratio = -(d2 * p2) / (d1 * p1);
            if ratio > 0.0 && p1 != p2 {
                return Some(ratio.ln() / (p1 - p2));
            }
        }
        None
    }

    /// Sign of the limit as `t -> +inf` (`dir > 0`) or `t -> -inf`.
    fn limit_sign(&self, dir: f64) -> f64 {
        // The dominant term has the extreme exponent in the direction of travel.
        let dominant = self
            .terms
            .iter()
            .filter(|(_, p)| p * dir > 0.0)
            .max_by(|x, y| (x.1 * dir).partial_cmp(&(y.1 * dir)).unwrap());
        if let Some((d, _)) = dominant {
            return d.signum();
        }
        if self.c0 != 0.0 {
            return self.c0.signum();
        }
        // Only decaying terms remain: the slowest one decides the approach to 0.
        self.terms
            .iter()
            .max_by(|x, y| (x.1 * dir).partial_cmp(&(y.1 * dir)).unwrap())
            .map(|(d, _)| d.signum())
            .unwrap_or(0.0)
    }
}

/// Critical points of the fiber plus a flag for near-double roots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoints {
    pub points: Vec<FiberPoint>,
    pub tangency: bool,
}

/// Relative size below which the extremum of `g'/s` counts as a double root.
const TANGENCY_TOL: f64 = 1e-10;
const T_LIMIT: f64 = 700.0;

/// All roots of `g'` on `s > 0`, in increasing order, classified.
///
/// `g'(s)/s` is a sum of at most three exponentials in `ln s`, so it has at
/// most one stationary point, computed in closed form. Each monotone piece is
/// bracketed by geometric expansion and bisected in `ln s`.
pub fn fiber_critical_points(triple: &Triple, params: &ModelParams) -> Result<CriticalPoints, FiberError> {
    triple.validate()?;
    let f = ExpSum::new(triple, params);
    if f.terms.is_empty() {
        return Ok(CriticalPoints {
            points: Vec::new(),
            tangency: false,
        });
    }
    let mut roots = Vec::new();
    let mut tangency = false;
    match f.stationary() {
        Some(ts) if ts.abs() < T_LIMIT => {
            let peak = f.eval(ts);
            if peak.abs() <= TANGENCY_TOL * f.magnitude(ts) {
                tangency = true;
                roots.push(ts);
            } else {
                let sp = peak.signum();
                for dir in [-1.0, 1.0] {
                    if f.limit_sign(dir) == -sp {
                        roots.push(bracket_and_bisect(&f, ts, dir)?);
                    }
                }
            }
        }
        _ => {
            let lo = f.limit_sign(-1.0);
            let hi = f.limit_sign(1.0);
            if lo * hi < 0.0 {
                let start = 0.0;
                let s0 = f.eval(start).signum();
                let dir = if s0 == lo { 1.0 } else { -1.0 };
                if f.eval(start) == 0.0 {
                    roots.push(start);
                } else {
                    roots.push(bracket_and_bisect(&f, start, dir)?);
                }
            }
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let points = roots
        .into_iter()
        .map(|t| {
            let mut p = fiber_eval(triple, params, t.exp())?;
            p.kind = Some(if tangency {
                CriticalKind::Inflection
            } else {
                classify_curvature(&p, triple)
            });
            Ok(p)
        })
        .collect::<Result<Vec<_>, FiberError>>()?;
    Ok(CriticalPoints { points, tangency })
}

fn classify_curvature(p: &FiberPoint, triple: &Triple) -> CriticalKind {
    let scale = triple.a.max(f64::MIN_POSITIVE);
    if p.g2.abs() < 1e-12 * scale {
        CriticalKind::Inflection
    } else if p.g2 < 0.0 {
        CriticalKind::LocalMax
    } else {
        CriticalKind::LocalMin
    }
}

/// Finds the root of `f` on the monotone ray from `t0` in direction `dir`,
/// given that the sign at infinity differs from the sign at `t0`.
fn bracket_and_bisect(f: &ExpSum, t0: f64, dir: f64) -> Result<f64, FiberError> {
    let s0 = f.eval(t0).signum();
    let mut step = 1.0;
    let mut far = t0 + dir * step;
    while f.eval(far).signum() == s0 {
        step *= 2.0;
        far = t0 + dir * step;
        if far.abs() > T_LIMIT {
            return Err(FiberError::BracketFailure(far.exp()));
        }
    }
    let (mut lo, mut hi) = if dir > 0.0 { (t0, far) } else { (far, t0) };
    let sign_lo = f.eval(lo).signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f.eval(mid).signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * (1.0 + lo.abs()) {
            break;
        }
    }
    // Both ends bound the root; take whichever has the smaller residual.
    Ok(if f.eval(lo).abs() <= f.eval(hi).abs() { lo } else { hi })
}

/// `hat s_u = (4A / (alpha B_alpha))^{1/(alpha-2)}`, the critical point of
/// `s^2 A/2 - s^alpha B_alpha/4`.
pub fn s_hat(triple: &Triple, params: &ModelParams) -> f64 {
    (4.0 * triple.a / (params.alpha * triple.b_alpha)).powf(1.0 / (params.alpha - 2.0))
}

/// `s_u^* = (4(beta-2)A / (alpha(beta-alpha)B_alpha))^{1/(alpha-2)}`, separating
/// the two Case-iv critical points.
pub fn s_star(triple: &Triple, params: &ModelParams) -> f64 {
    let (a, b) = (params.alpha, params.beta);
    (4.0 * (b - 2.0) * triple.a / (a * (b - a) * triple.b_alpha)).powf(1.0 / (a - 2.0))
}

/// Dilation at which Case-iv fibers through `V_S` are certified negative.
pub fn witness_dilation(triple: &Triple, params: &ModelParams) -> f64 {
    let (a, b) = (params.alpha, params.beta);
    (2.0 * (b - 2.0) * triple.a / ((b - a) * triple.b_alpha)).powf(1.0 / (a - 2.0))
}

/// `Gamma A^{alpha/2} - B_alpha`; negative inside `V_D`.
pub fn vd_deficit(triple: &Triple, params: &ModelParams, gamma: f64) -> f64 {
    gamma * triple.a.powf(params.alpha / 2.0) - triple.b_alpha
}

/// `s_*^-`: the smallest critical point of local-maximum type.
pub fn project_pminus(triple: &Triple, params: &ModelParams, gamma: f64) -> Result<FiberPoint, FiberError> {
    let deficit = vd_deficit(triple, params, gamma);
    if deficit >= 0.0 {
        return Err(FiberError::OutsideVd { deficit });
    }
    first_of_kind(triple, params, CriticalKind::LocalMax)
}

/// `s_*^+`: the largest critical point of local-minimum type.
pub fn project_pplus(triple: &Triple, params: &ModelParams) -> Result<FiberPoint, FiberError> {
    let cp = fiber_critical_points(triple, params)?;
    cp.points
        .into_iter()
        .rev()
        .find(|p| p.kind == Some(CriticalKind::LocalMin))
        .ok_or(FiberError::NoCriticalPoint)
}

fn first_of_kind(triple: &Triple, params: &ModelParams, kind: CriticalKind) -> Result<FiberPoint, FiberError> {
    let cp = fiber_critical_points(triple, params)?;
    cp.points
        .into_iter()
        .find(|p| p.kind == Some(kind))
        .ok_or(FiberError::NoCriticalPoint)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct MembershipFlags {
    pub in_vd: bool,
    pub on_p: bool,
    pub in_pminus: bool,
    pub in_pplus: bool,
}

/// Relative tolerance for `|Q| < tol max(A, 1)`.
pub const ON_P_TOL: f64 = 1e-8;

pub fn membership(triple: &Triple, mass: f64, params: &ModelParams, th: &Thresholds) -> MembershipFlags {
    let deficit = vd_deficit(triple, params, th.gamma);
    let in_vd = deficit < 0.0 && mass <= params.mass_target * (1.0 + 1e-12);
    let at_one = fiber_eval(triple, params, 1.0).ok();
    let (q, g2) = at_one.map(|p| (p.g1, p.g2)).unwrap_or((f64::NAN, f64::NAN));
    let on_p = q.abs() < ON_P_TOL * triple.a.max(1.0);
    MembershipFlags {
        in_vd,
        on_p,
        in_pminus: on_p && g2 < 0.0,
        in_pplus: on_p && g2 > 0.0,
    }
}
