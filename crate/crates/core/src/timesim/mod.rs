//! Time simulation of the full nonlinear loop, period-one orbits by shooting,
//! Floquet stability and the averaged reduced model.

mod closed_loop;
pub mod integrator;
mod reduced;
mod shooting;

pub use closed_loop::ClosedLoopSystem;
pub use reduced::{label_stationary_points, reduced_l, reduced_model, reduced_slope, reduced_stability, ReducedModel};
pub use shooting::{
    find_orbits, floquet_stability, period_map, settle, shoot_orbit, FloquetReport, FloquetVerdict, MonodromyMethod,
    PeriodicOrbit, SettleReport, ShootingOptions,
};

use serde::{Deserialize, Serialize};

use num_complex::Complex64;

use crate::error::{EscError, Result};
use crate::freq::{extract_harmonics, EscConfig, UniformSeries};
use crate::plant::PlantModel;
use integrator::{dopri5, IntegratorOptions};

/// Default dense-output resolution.
pub const SAMPLES_PER_PERIOD: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Dense-output samples per forcing period; at least 128.
    pub samples_per_period: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { rtol: 1e-9, atol: 1e-12, samples_per_period: SAMPLES_PER_PERIOD }
    }
}

impl SimOptions {
    pub(crate) fn integrator(&self, period: f64) -> IntegratorOptions {
        IntegratorOptions::new(self.rtol, self.atol, 0.25 * period)
    }
}

/// A trajectory of the extended state sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// One row of a trajectory export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub u: f64,
    pub y: f64,
    pub xi: f64,
    pub eta: f64,
    pub u_hat: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn rows(&self, sys: &ClosedLoopSystem<'_>) -> Vec<TrajectoryRow> {
        self.times
            .iter()
            .zip(&self.states)
            .map(|(&t, z)| TrajectoryRow {
                t,
                u: sys.input(t, z),
                y: sys.output(z),
                xi: z[sys.xi_index()],
                eta: z[sys.eta_index()],
                u_hat: z[sys.u_hat_index()],
            })
            .collect()
    }

    /// Plant output at every sample.
    pub fn outputs(&self, sys: &ClosedLoopSystem<'_>) -> Vec<f64> {
        self.states.iter().map(|z| sys.output(z)).collect()
    }
}

/// Uniform sample grid from `t0` with spacing `dt`, ending at `t1` when it lies on the grid.
fn sample_grid(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    let steps = ((t1 - t0) / dt * (1.0 + 1e-12)).floor() as usize;
    (0..=steps).map(|j| (t0 + j as f64 * dt).min(t1)).collect()
}

/// Integrates the closed loop over `t_span` with dense samples every
/// `T / samples_per_period` and steps no longer than `T / 4`.
pub fn integrate(sys: &ClosedLoopSystem<'_>, z0: &[f64], t_span: (f64, f64), opts: &SimOptions) -> Result<Trajectory> {
    sys.check_state(z0)?;
    if opts.samples_per_period < SAMPLES_PER_PERIOD {
        return Err(EscError::InvalidInput(format!(
            "need at least {SAMPLES_PER_PERIOD} samples per period, got {}",
            opts.samples_per_period
        )));
    }
    let (t0, t1) = t_span;
    let period = sys.period();
    let times = sample_grid(t0, t1, period / opts.samples_per_period as f64);
    let sol = dopri5(|t, z, dz| sys.rhs(t, z, dz), t0, t1, z0, &times, &opts.integrator(period))?;
    Ok(Trajectory { times, states: sol.samples })
}

/// Frequency response of the plant at input `u`, measured by simulation.
///
/// The plant starts at its equilibrium and is driven by `u + a·sin ωt` with
/// the loop open; after `settle_periods` periods the first harmonic of the
/// output over four more periods is divided by that of the input, `a/(2i)`.
pub fn harmonic_probe(
    plant: &dyn PlantModel,
    u: f64,
    omega: f64,
    amplitude: f64,
    settle_periods: usize,
    opts: &SimOptions,
) -> Result<Complex64> {
    if !(amplitude > 0.0 && omega > 0.0) {
        return Err(EscError::InvalidInput(format!("probe needs a > 0 and omega > 0, got a = {amplitude}, omega = {omega}")));
    }
    let cfg = EscConfig { gain: 0.0, amplitude, ..EscConfig::with_ratio(omega, 0.1, 0.0, amplitude) };
    let sys = ClosedLoopSystem::open_loop(plant, cfg);
    let z0 = sys.rest_state(u)?;
    let period = sys.period();
    let m = opts.samples_per_period;
    let traj = integrate(&sys, z0.as_slice(), (0.0, (settle_periods + 4) as f64 * period), opts)?;
    let tail = traj.states.len() - 1 - 4 * m;
    let series = UniformSeries { t0: traj.times[tail], dt: period / m as f64, values: traj.outputs(&sys)[tail..].to_vec() };
    let h = extract_harmonics(&series, omega)?;
    Ok(h.c1 * Complex64::new(0.0, 2.0 / amplitude))
}
