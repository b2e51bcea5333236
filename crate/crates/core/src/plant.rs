//! Plant abstraction, equilibria along the input manifold, the steady-state
//! map and local linearization.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{EscError, Result};
use crate::linalg;

/// Default equilibrium tolerance, relative to `‖x‖∞ + 1`.
pub const EQUILIBRIUM_TOL: f64 = 1e-10;

const MAX_NEWTON_ITERATIONS: usize = 50;
const MAX_HALVINGS: usize = 30;

/// A nonlinear single-input single-output plant `ẋ = f(x, u)`, `y = h(x)`.
///
/// Analytic Jacobians are optional; every consumer falls back to central
/// finite differences when a method returns `None`.
pub trait PlantModel: Send + Sync {
    fn name(&self) -> &str;

    /// State dimension `n`.
    fn dim(&self) -> usize;

    /// Writes `f(x, u)` into `dx`.
    fn rhs(&self, x: &[f64], u: f64, dx: &mut [f64]);

    /// Scalar output `h(x)`.
    fn output(&self, x: &[f64]) -> f64;

    /// Closed interval of admissible operating inputs.
    fn input_domain(&self) -> (f64, f64);

    /// Starting point for the equilibrium solve at `u` when no warm start exists.
    fn initial_guess(&self, _u: f64) -> DVector<f64> {
        DVector::zeros(self.dim())
    }

    /// `∂f/∂x`.
    fn state_jacobian(&self, _x: &[f64], _u: f64) -> Option<DMatrix<f64>> {
        None
    }

    /// `∂f/∂u`.
    fn input_jacobian(&self, _x: &[f64], _u: f64) -> Option<DVector<f64>> {
        None
    }

    /// `∂h/∂x`, stored as a column vector.
    fn output_gradient(&self, _x: &[f64]) -> Option<DVector<f64>> {
        None
    }
}

/// Where Jacobians come from during linearization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianSource {
    /// Analytic Jacobians when the plant supplies them, finite differences otherwise.
    Preferred,
    FiniteDifference,
}

/// Central-difference step for a coordinate of the given magnitude.
pub fn fd_step(value: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + value.abs())
}

pub fn eval_rhs(plant: &dyn PlantModel, x: &[f64], u: f64) -> DVector<f64> {
    let mut dx = DVector::zeros(plant.dim());
    plant.rhs(x, u, dx.as_mut_slice());
    dx
}

/// `∂f/∂x` at `(x, u)`.
pub fn state_jacobian(plant: &dyn PlantModel, x: &[f64], u: f64, source: JacobianSource) -> DMatrix<f64> {
    if source == JacobianSource::Preferred {
        if let Some(j) = plant.state_jacobian(x, u) {
            return j;
        }
    }
    let n = plant.dim();
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for col in 0..n {
        let h = fd_step(x[col]);
        xp[col] = x[col] + h;
        plant.rhs(&xp, u, &mut fp);
        xp[col] = x[col] - h;
        plant.rhs(&xp, u, &mut fm);
        xp[col] = x[col];
        for row in 0..n {
            jac[(row, col)] = (fp[row] - fm[row]) / (2.0 * h);
        }
    }
    jac
}

/// `∂f/∂u` at `(x, u)`.
pub fn input_jacobian(plant: &dyn PlantModel, x: &[f64], u: f64, source: JacobianSource) -> DVector<f64> {
    if source == JacobianSource::Preferred {
        if let Some(b) = plant.input_jacobian(x, u) {
            return b;
        }
    }
    let h = fd_step(u);
    (eval_rhs(plant, x, u + h) - eval_rhs(plant, x, u - h)) / (2.0 * h)
}

/// `∂h/∂x` at `x`.
pub fn output_gradient(plant: &dyn PlantModel, x: &[f64], source: JacobianSource) -> DVector<f64> {
    if source == JacobianSource::Preferred {
        if let Some(c) = plant.output_gradient(x) {
            return c;
        }
    }
    let n = plant.dim();
    let mut xp = x.to_vec();
    DVector::from_fn(n, |i, _| {
        let h = fd_step(x[i]);
        xp[i] = x[i] + h;
        let yp = plant.output(&xp);
        xp[i] = x[i] - h;
        let ym = plant.output(&xp);
        xp[i] = x[i];
        (yp - ym) / (2.0 * h)
    })
}

/// A point `x̄ = l(ū)` of the equilibrium manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub u_bar: f64,
    pub x_bar: DVector<f64>,
    /// `‖f(x̄, ū)‖∞`.
    pub residual: f64,
}

impl Equilibrium {
    pub fn output(&self, plant: &dyn PlantModel) -> f64 {
        plant.output(self.x_bar.as_slice())
    }
}

/// Damped Newton solve of `f(x, ū) = 0` starting from `x_guess`.
pub fn solve_equilibrium(plant: &dyn PlantModel, u_bar: f64, x_guess: &DVector<f64>) -> Result<Equilibrium> {
    if !u_bar.is_finite() || x_guess.iter().any(|v| !v.is_finite()) {
        return Err(EscError::InvalidInput(format!("non-finite equilibrium guess at u = {u_bar}")));
    }
    if x_guess.len() != plant.dim() {
        return Err(EscError::InvalidInput(format!(
            "guess has dimension {}, plant has {}",
            x_guess.len(),
            plant.dim()
        )));
    }
    let mut x = x_guess.clone();
    let mut f = eval_rhs(plant, x.as_slice(), u_bar);
    let mut res = linalg::max_abs(f.as_slice());
    for iter in 0..MAX_NEWTON_ITERATIONS {
        let tol = EQUILIBRIUM_TOL * (linalg::max_abs(x.as_slice()) + 1.0);
        if res <= tol {
            return Ok(Equilibrium { u_bar, x_bar: x, residual: res });
        }
        let jac = state_jacobian(plant, x.as_slice(), u_bar, JacobianSource::Preferred);
        let dx = linalg::solve(jac, &(-&f)).ok_or(EscError::SingularJacobian { u: u_bar })?;

        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial = &x + &dx * lambda;
            let f_trial = eval_rhs(plant, trial.as_slice(), u_bar);
            let res_trial = linalg::max_abs(f_trial.as_slice());
            if res_trial.is_finite() && res_trial < res {
                x = trial;
                f = f_trial;
                res = res_trial;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            // No decrease along the Newton direction: we are at the rounding floor
            // or the guess is outside the basin.
            let tol = EQUILIBRIUM_TOL * (linalg::max_abs(x.as_slice()) + 1.0);
            if res <= tol {
                return Ok(Equilibrium { u_bar, x_bar: x, residual: res });
            }
            return Err(EscError::NonConvergence { u: u_bar, iterations: iter + 1, residual: res });
        }
    }
    let tol = EQUILIBRIUM_TOL * (linalg::max_abs(x.as_slice()) + 1.0);
    if res <= tol {
        Ok(Equilibrium { u_bar, x_bar: x, residual: res })
    } else {
        Err(EscError::NonConvergence { u: u_bar, iterations: MAX_NEWTON_ITERATIONS, residual: res })
    }
}

/// Equilibrium at `u` started from the plant's own initial guess.
pub fn equilibrium_at(plant: &dyn PlantModel, u: f64) -> Result<Equilibrium> {
    solve_equilibrium(plant, u, &plant.initial_guess(u))
}

fn check_grid(plant: &dyn PlantModel, u_grid: &[f64]) -> Result<()> {
    let (lo, hi) = plant.input_domain();
    if u_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(EscError::InvalidInput("input grid must be sorted".into()));
    }
    if let Some(u) = u_grid.iter().find(|u| !(lo..=hi).contains(*u)) {
        return Err(EscError::InvalidInput(format!("u = {u} outside input domain [{lo}, {hi}]")));
    }
    Ok(())
}

fn sweep_chunk(plant: &dyn PlantModel, chunk: &[f64]) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(chunk.len());
    let mut guess = match chunk.first() {
        Some(&u) => plant.initial_guess(u),
        None => return Ok(out),
    };
    for &u in chunk {
        let eq = solve_equilibrium(plant, u, &guess)?;
        out.push((u, eq.output(plant)));
        guess = eq.x_bar;
    }
    Ok(out)
}

/// Steady-state map `J(u) = h(l(u))` over a sorted grid, each solve warm-started
/// from the previous equilibrium.
pub fn equilibrium_map(plant: &dyn PlantModel, u_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_grid(plant, u_grid)?;
    sweep_chunk(plant, u_grid)
}

/// Parallel version of [`equilibrium_map`]. Warm starts restart at the beginning
/// of every chunk of `chunk_len` points, so the result equals the sequential
/// sweep of the same chunks bit for bit.
pub fn equilibrium_map_parallel(plant: &dyn PlantModel, u_grid: &[f64], chunk_len: usize) -> Result<Vec<(f64, f64)>> {
    check_grid(plant, u_grid)?;
    let chunk_len = chunk_len.max(1);
    let parts: Vec<Result<Vec<(f64, f64)>>> = u_grid.par_chunks(chunk_len).map(|c| sweep_chunk(plant, c)).collect();
    let mut out = Vec::with_capacity(u_grid.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Jacobian triple `(A, B, C)` at an equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedPlant {
    pub equilibrium: Equilibrium,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Output row `∂h/∂x`, stored as a column vector.
    pub c: DVector<f64>,
}

impl LinearizedPlant {
    pub fn from_matrices(a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>) -> Self {
        let n = b.len();
        LinearizedPlant {
            equilibrium: Equilibrium { u_bar: 0.0, x_bar: DVector::zeros(n), residual: 0.0 },
            a,
            b,
            c,
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Steady-state gain `G(0) = −C·A⁻¹·B`.
    pub fn steady_state_gain(&self) -> Result<f64> {
        let x = linalg::solve(self.a.clone(), &self.b).ok_or(EscError::SingularSolve { re: 0.0, im: 0.0 })?;
        Ok(-self.c.dot(&x))
    }

    /// Eigenvalues of `A`.
    pub fn poles(&self) -> Vec<num_complex::Complex64> {
        linalg::eigenvalues(&self.a)
    }

    pub fn is_hurwitz(&self) -> bool {
        self.poles().iter().all(|p| p.re < 0.0)
    }
}

pub fn linearize(plant: &dyn PlantModel, eq: &Equilibrium) -> LinearizedPlant {
    linearize_with(plant, eq, JacobianSource::Preferred)
}

pub fn linearize_with(plant: &dyn PlantModel, eq: &Equilibrium, source: JacobianSource) -> LinearizedPlant {
    let x = eq.x_bar.as_slice();
    LinearizedPlant {
        equilibrium: eq.clone(),
        a: state_jacobian(plant, x, eq.u_bar, source),
        b: input_jacobian(plant, x, eq.u_bar, source),
        c: output_gradient(plant, x, source),
    }
}
