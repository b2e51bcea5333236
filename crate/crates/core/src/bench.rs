//! Benchmark plants: the isothermal plug-flow reactor discretized by the
//! method of lines, a Hammerstein plant and a first-order linear plant.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{EscError, Result};
use crate::plant::PlantModel;

/// Parameters of the tubular reactor `A → B → C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactorConfig {
    /// Inlet concentration of A.
    pub a0: f64,
    /// Inlet concentration of B.
    pub b0: f64,
    /// Rate constant of A → B.
    pub k1: f64,
    /// Rate constant of B → C.
    pub k2: f64,
    pub n_cells: usize,
    /// Admissible velocity interval.
    pub v_domain: (f64, f64),
}

impl Default for ReactorConfig {
    fn default() -> Self {
        ReactorConfig { a0: 1.0, b0: 0.0, k1: 1.0, k2: 0.02, n_cells: 40, v_domain: (0.02, 1.2) }
    }
}

impl ReactorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > self.k2 && self.k2 > 0.0) {
            return Err(EscError::InvalidInput(format!("need k1 > k2 > 0, got k1 = {}, k2 = {}", self.k1, self.k2)));
        }
        if self.n_cells < 2 {
            return Err(EscError::InvalidInput("n_cells must be at least 2".into()));
        }
        let (lo, hi) = self.v_domain;
        if !(lo > 0.0 && hi > lo) {
            return Err(EscError::InvalidInput(format!("invalid velocity domain [{lo}, {hi}]")));
        }
        Ok(())
    }

    /// Optimal velocity of the undiscretized plug-flow reactor, `(k1 − k2)/ln(k1/k2)`.
    pub fn continuous_optimum(&self) -> f64 {
        (self.k1 - self.k2) / (self.k1 / self.k2).ln()
    }
}

/// Upwind method-of-lines reactor. State is `(a_1..a_n, b_1..b_n)`, the input
/// is the velocity `v` and the output is `b_n` at the reactor exit.
#[derive(Debug, Clone)]
pub struct Reactor {
    cfg: ReactorConfig,
    inv_dz: f64,
}

pub fn build_reactor(cfg: ReactorConfig) -> Result<Reactor> {
    cfg.validate()?;
    let inv_dz = cfg.n_cells as f64;
    Ok(Reactor { cfg, inv_dz })
}

impl Reactor {
    pub fn config(&self) -> &ReactorConfig {
        &self.cfg
    }

    fn upstream(&self, x: &[f64], j: usize, species: usize) -> f64 {
        let n = self.cfg.n_cells;
        if j == 0 {
            if species == 0 {
                self.cfg.a0
            } else {
                self.cfg.b0
            }
        } else {
            x[species * n + j - 1]
        }
    }
}

impl PlantModel for Reactor {
    fn name(&self) -> &str {
        "reactor"
    }

    fn dim(&self) -> usize {
        2 * self.cfg.n_cells
    }

    fn rhs(&self, x: &[f64], v: f64, dx: &mut [f64]) {
        let n = self.cfg.n_cells;
        let (k1, k2) = (self.cfg.k1, self.cfg.k2);
        let conv = v * self.inv_dz;
        for j in 0..n {
            let a = x[j];
            let b = x[n + j];
            dx[j] = -conv * (a - self.upstream(x, j, 0)) - k1 * a;
            dx[n + j] = -conv * (b - self.upstream(x, j, 1)) + k1 * a - k2 * b;
        }
    }

    fn output(&self, x: &[f64]) -> f64 {
        x[2 * self.cfg.n_cells - 1]
    }

    fn input_domain(&self) -> (f64, f64) {
        self.cfg.v_domain
    }

    fn initial_guess(&self, _u: f64) -> DVector<f64> {
        let n = self.cfg.n_cells;
        DVector::from_fn(2 * n, |i, _| if i < n { self.cfg.a0 } else { self.cfg.b0 })
    }

    fn state_jacobian(&self, _x: &[f64], v: f64) -> Option<DMatrix<f64>> {
        let n = self.cfg.n_cells;
        let conv = v * self.inv_dz;
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        for j in 0..n {
            a[(j, j)] = -conv - self.cfg.k1;
            a[(n + j, n + j)] = -conv - self.cfg.k2;
            a[(n + j, j)] = self.cfg.k1;
            if j > 0 {
                a[(j, j - 1)] = conv;
                a[(n + j, n + j - 1)] = conv;
            }
        }
        Some(a)
    }

    fn input_jacobian(&self, x: &[f64], _v: f64) -> Option<DVector<f64>> {
        let n = self.cfg.n_cells;
        Some(DVector::from_fn(2 * n, |i, _| {
            let (species, j) = (i / n, i % n);
            -(x[i] - self.upstream(x, j, species)) * self.inv_dz
        }))
    }

    fn output_gradient(&self, _x: &[f64]) -> Option<DVector<f64>> {
        let n = 2 * self.cfg.n_cells;
        let mut c = DVector::zeros(n);
        c[n - 1] = 1.0;
        Some(c)
    }
}

/// `ẋ = (−x − (u − u*)²)/τ`, `y = x`: the optimum comes from a static
/// nonlinearity, so the linearization vanishes there.
#[derive(Debug, Clone)]
pub struct Hammerstein {
    pub u_star: f64,
    pub tau: f64,
}

pub fn build_hammerstein(u_star: f64, tau: f64) -> Result<Hammerstein> {
    if !(tau > 0.0) || !u_star.is_finite() {
        return Err(EscError::InvalidInput(format!("hammerstein needs tau > 0, got {tau}")));
    }
    Ok(Hammerstein { u_star, tau })
}

impl PlantModel for Hammerstein {
    fn name(&self) -> &str {
        "hammerstein"
    }
    fn dim(&self) -> usize {
        1
    }
    fn rhs(&self, x: &[f64], u: f64, dx: &mut [f64]) {
        let d = u - self.u_star;
        dx[0] = (-x[0] - d * d) / self.tau;
    }
    fn output(&self, x: &[f64]) -> f64 {
        x[0]
    }
    fn input_domain(&self) -> (f64, f64) {
        (self.u_star - 2.0, self.u_star + 2.0)
    }
    fn state_jacobian(&self, _x: &[f64], _u: f64) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, -1.0 / self.tau))
    }
    fn input_jacobian(&self, _x: &[f64], u: f64) -> Option<DVector<f64>> {
        Some(DVector::from_element(1, -2.0 * (u - self.u_star) / self.tau))
    }
    fn output_gradient(&self, _x: &[f64]) -> Option<DVector<f64>> {
        Some(DVector::from_element(1, 1.0))
    }
}

/// `ẋ = p·x + u`, `y = x` with `p < 0`. Has no extremum.
#[derive(Debug, Clone)]
pub struct LinearPlant {
    pub pole: f64,
}

pub fn build_linear(pole: f64) -> Result<LinearPlant> {
    if !(pole < 0.0) {
        return Err(EscError::InvalidInput(format!("linear plant needs a negative pole, got {pole}")));
    }
    Ok(LinearPlant { pole })
}

impl PlantModel for LinearPlant {
    fn name(&self) -> &str {
        "linear"
    }
    fn dim(&self) -> usize {
        1
    }
    fn rhs(&self, x: &[f64], u: f64, dx: &mut [f64]) {
        dx[0] = self.pole * x[0] + u;
    }
    fn output(&self, x: &[f64]) -> f64 {
        x[0]
    }
    fn input_domain(&self) -> (f64, f64) {
        (-10.0, 10.0)
    }
    fn state_jacobian(&self, _x: &[f64], _u: f64) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, self.pole))
    }
    fn input_jacobian(&self, _x: &[f64], _u: f64) -> Option<DVector<f64>> {
        Some(DVector::from_element(1, 1.0))
    }
    fn output_gradient(&self, _x: &[f64]) -> Option<DVector<f64>> {
        Some(DVector::from_element(1, 1.0))
    }
}

/// Registered plant names.
pub const PLANT_NAMES: [&str; 3] = ["reactor", "hammerstein", "linear"];

/// Builds a registered plant with `key = value` parameter overrides.
pub fn build_plant(name: &str, overrides: &[(String, f64)]) -> Result<Box<dyn PlantModel>> {
    let unknown = |key: &str| EscError::InvalidInput(format!("unknown parameter '{key}' for plant '{name}'"));
    match name {
        "reactor" => {
            let mut cfg = ReactorConfig::default();
            for (key, value) in overrides {
                match key.as_str() {
                    "a0" => cfg.a0 = *value,
                    "b0" => cfg.b0 = *value,
                    "k1" => cfg.k1 = *value,
                    "k2" => cfg.k2 = *value,
                    "n_cells" => {
                        if value.fract() != 0.0 || *value < 0.0 {
                            return Err(EscError::InvalidInput(format!("n_cells must be a whole number, got {value}")));
                        }
                        cfg.n_cells = *value as usize
                    }
                    "v_min" => cfg.v_domain.0 = *value,
                    "v_max" => cfg.v_domain.1 = *value,
                    _ => return Err(unknown(key)),
                }
            }
            Ok(Box::new(build_reactor(cfg)?))
        }
        "hammerstein" => {
            let (mut u_star, mut tau) = (1.0, 1.0);
            for (key, value) in overrides {
                match key.as_str() {
                    "u_star" => u_star = *value,
                    "tau" => tau = *value,
                    _ => return Err(unknown(key)),
                }
            }
            Ok(Box::new(build_hammerstein(u_star, tau)?))
        }
        "linear" => {
            let mut pole = -1.0;
            for (key, value) in overrides {
                match key.as_str() {
                    "pole" => pole = *value,
                    _ => return Err(unknown(key)),
                }
            }
            Ok(Box::new(build_linear(pole)?))
        }
        other => Err(EscError::InvalidInput(format!(
            "unknown plant '{other}' (expected one of {})",
            PLANT_NAMES.join(", ")
        ))),
    }
}
