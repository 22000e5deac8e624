use std::path::{Path, PathBuf};

use nwav_core::functional::ModelParams;
use nwav_core::grid::GridSpec;
use nwav_core::solver::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub dim: usize,
    pub points: usize,
    pub half_length: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            points: 64,
            half_length: 12.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step0: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            max_iter: d.max_iter,
            grad_tol: d.grad_tol,
            step0: d.step0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsSettings {
    #[serde(alias = "T")]
    pub t: f64,
    pub dt: f64,
    pub monitor_cadence: usize,
    pub delta0: f64,
}

impl Default for DynamicsSettings {
    fn default() -> Self {
        Self {
            t: 10.0,
            dt: 1e-3,
            monitor_cadence: 10,
            delta0: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelParams,
    pub grid: GridConfig,
    pub solver: SolverSettings,
    pub dynamics: DynamicsSettings,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelParams {
                dim: 3,
                alpha: 2.5,
                beta: 2.8,
                mu_beta: -0.02,
                mass_target: 1.0,
            },
            grid: GridConfig::default(),
            solver: SolverSettings::default(),
            dynamics: DynamicsSettings::default(),
            output_dir: PathBuf::from("nwav-out"),
            seed: 0x5eed,
        }
    }
}

/// Command-line overrides; `None` keeps the config value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub mu_beta: Option<f64>,
    pub mass: Option<f64>,
    pub points: Option<usize>,
    pub half_length: Option<f64>,
    pub tmax: Option<f64>,
    pub dt: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        let m = &mut self.model;
        m.alpha = o.alpha.unwrap_or(m.alpha);
        m.beta = o.beta.unwrap_or(m.beta);
        m.mu_beta = o.mu_beta.unwrap_or(m.mu_beta);
        m.mass_target = o.mass.unwrap_or(m.mass_target);
        self.grid.points = o.points.unwrap_or(self.grid.points);
        self.grid.half_length = o.half_length.unwrap_or(self.grid.half_length);
        self.dynamics.t = o.tmax.unwrap_or(self.dynamics.t);
        self.dynamics.dt = o.dt.unwrap_or(self.dynamics.dt);
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        self.seed = o.seed.unwrap_or(self.seed);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.grid.dim != self.model.dim {
            return Err(CliError::Validation(format!(
                "grid dimension {} differs from model dimension {}",
                self.grid.dim, self.model.dim
            )));
        }
        self.model.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        self.grid_spec()?;
        let s = &self.solver;
        let d = &self.dynamics;
        let positive = [
            ("solver.grad_tol", s.grad_tol),
            ("solver.step0", s.step0),
            ("dynamics.t", d.t),
            ("dynamics.dt", d.dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        if !(d.delta0 >= 0.0) {
            return Err(CliError::Validation(format!("dynamics.delta0 must be >= 0, got {}", d.delta0)));
        }
        if s.max_iter == 0 || d.monitor_cadence == 0 {
            return Err(CliError::Validation("iteration counts must be positive".into()));
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec, CliError> {
        GridSpec::new(self.grid.dim, self.grid.points, self.grid.half_length).map_err(|e| CliError::Validation(e.to_string()))
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            max_iter: self.solver.max_iter,
            grad_tol: self.solver.grad_tol,
            step0: self.solver.step0,
            ..SolverConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"model": {"dim": 3, "alpha": 2.4, "beta": 2.9, "mu_beta": -0.01, "mass": 1.5}, "seed": 3}"#).unwrap();
        assert_eq!(cfg.model.alpha, 2.4);
        assert_eq!(cfg.model.mass_target, 1.5);
        assert_eq!(cfg.model.dim, 3);
        assert_eq!(cfg.grid.points, 64);
        assert_eq!(cfg.seed, 3);
        cfg.validate().unwrap();
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::default();
        cfg.apply(&Overrides {
            mu_beta: Some(-0.01),
            points: Some(32),
            ..Default::default()
        });
        assert_eq!(cfg.model.mu_beta, -0.01);
        assert_eq!(cfg.grid.points, 32);
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = RunConfig::default();
        cfg.dynamics.dt = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.grid.dim = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.model.alpha = 3.5;
        assert!(cfg.validate().is_err());
    }
}
