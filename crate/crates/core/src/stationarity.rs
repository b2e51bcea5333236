//! The stationarity condition `C(ū, ω) = Re{F_H(iω)·G_ū(iω)}`, its phase form,
//! root finding over `ū` at fixed `ω`, and the optimum-deviation estimate.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EscError, Result};
use crate::freq::{filter_response, plant_response, transfer_at, EscConfig, FilterKind};
use crate::plant::{equilibrium_at, linearize, LinearizedPlant, PlantModel};
use crate::zeros::transmission_zeros;

/// Refined roots satisfy `|C| ≤ ROOT_TOL · max|C|` over the scan grid.
pub const ROOT_TOL: f64 = 1e-10;
/// `|G_ū(iω)|` below this makes the phase undefined.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;
/// Roots with `|G_ū(iω)|` below this fraction of its grid maximum are flagged degenerate.
pub const DEGENERATE_RATIO: f64 = 1e-9;
/// Default number of scan grid points.
pub const DEFAULT_GRID: usize = 2000;

const MAX_REFINE_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Unknown,
}

impl Stability {
    pub fn as_str(self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilitySource {
    ReducedModel,
    Floquet,
    None,
}

/// A root of `C(·, ω)`: candidate period-mean input of a stationary solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPoint {
    pub u_bar: f64,
    pub omega: f64,
    pub condition_value: f64,
    pub dc_du: f64,
    pub stability: Stability,
    pub stability_source: StabilitySource,
    /// `|G_ū(iω)|` at the root.
    pub response_magnitude: f64,
    /// The root lies where `G_ū` itself vanishes, so the condition holds trivially.
    pub degenerate: bool,
}

/// `C` from an existing linearization.
pub fn condition_from_linearization(lin: &LinearizedPlant, cfg: &EscConfig) -> Result<f64> {
    let g = plant_response(lin, cfg.omega)?;
    let fh = filter_response(cfg, FilterKind::HighPass, cfg.omega);
    Ok((fh.value * g.value).re)
}

pub fn condition_value(plant: &dyn PlantModel, cfg: &EscConfig, u_bar: f64) -> Result<f64> {
    let eq = equilibrium_at(plant, u_bar)?;
    condition_from_linearization(&linearize(plant, &eq), cfg)
}

/// `C` together with `|G_ū(iω)|`.
fn condition_and_magnitude(plant: &dyn PlantModel, cfg: &EscConfig, u: f64) -> Result<(f64, f64)> {
    let eq = equilibrium_at(plant, u)?;
    let lin = linearize(plant, &eq);
    let g = plant_response(&lin, cfg.omega)?;
    let fh = filter_response(cfg, FilterKind::HighPass, cfg.omega);
    Ok(((fh.value * g.value).re, g.magnitude))
}

/// Reduces an angle modulo `π` into `(−π/2, π/2]`.
pub fn reduce_mod_pi(x: f64) -> f64 {
    let r = x - PI * (x / PI).round();
    if r <= -FRAC_PI_2 {
        r + PI
    } else if r > FRAC_PI_2 {
        r - PI
    } else {
        r
    }
}

/// Signed distance between `∠G_ū(iω)` and `π/2 − ∠F_H(iω)`, reduced modulo `π`.
pub fn phase_residual(plant: &dyn PlantModel, cfg: &EscConfig, u_bar: f64) -> Result<f64> {
    let eq = equilibrium_at(plant, u_bar)?;
    let g = plant_response(&linearize(plant, &eq), cfg.omega)?;
    if g.magnitude < DEGENERACY_THRESHOLD {
        return Err(EscError::DegenerateResponse { u: u_bar, magnitude: g.magnitude });
    }
    let fh = filter_response(cfg, FilterKind::HighPass, cfg.omega);
    Ok(reduce_mod_pi(g.phase - (FRAC_PI_2 - fh.phase)))
}

/// Central-difference step in `ū`.
pub fn u_step(u: f64) -> f64 {
    1e-5 * (u.abs() + 1e-3)
}

/// `∂C/∂ū` by central differences.
pub fn condition_partial_u(plant: &dyn PlantModel, cfg: &EscConfig, u: f64) -> Result<f64> {
    let (lo, hi) = plant.input_domain();
    let h = u_step(u);
    let (a, b) = ((u - h).max(lo), (u + h).min(hi));
    Ok((condition_value(plant, cfg, b)? - condition_value(plant, cfg, a)?) / (b - a))
}

/// Evenly spaced grid of `n ≥ 2` points including both ends.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { hi } else { lo + step * i as f64 }).collect()
}

/// Safeguarded secant iteration on a sign-changing bracket. Returns the final
/// abscissa and function value; stops once `|f| ≤ tol` or the bracket cannot
/// shrink further.
pub(crate) fn refine_bracket(
    mut f: impl FnMut(f64) -> Result<f64>,
    (mut a, mut fa): (f64, f64),
    (mut b, mut fb): (f64, f64),
    tol: f64,
) -> Result<(f64, f64)> {
    debug_assert!(fa * fb < 0.0);
    let mut best = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
    let mut last_width = b - a;
    for _ in 0..MAX_REFINE_ITERATIONS {
        if best.1.abs() <= tol {
            break;
        }
        let width = b - a;
        if width <= 4.0 * f64::EPSILON * (a.abs().max(b.abs()) + f64::MIN_POSITIVE) {
            break;
        }
        let secant = b - fb * (b - a) / (fb - fa);
        let margin = 0.01 * width;
        // Fall back to bisection when the secant point hugs an end or the
        // previous step shrank the bracket by less than half.
        let x = if secant > a + margin && secant < b - margin && width <= 0.5 * last_width + margin {
            secant
        } else {
            0.5 * (a + b)
        };
        last_width = width;
        let fx = f(x)?;
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if fx == 0.0 {
            break;
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
    }
    Ok(best)
}

/// Roots of `C(·, ω)` on `[lo, hi]`, sorted by `ū`, with stability unknown.
pub fn find_stationary_points(
    plant: &dyn PlantModel,
    cfg: &EscConfig,
    (lo, hi): (f64, f64),
    grid: usize,
) -> Result<Vec<StationaryPoint>> {
    if grid < 2 {
        return Err(EscError::InvalidInput(format!("scan grid needs at least 2 points, got {grid}")));
    }
    let (dlo, dhi) = plant.input_domain();
    if !(lo < hi && lo >= dlo && hi <= dhi) {
        return Err(EscError::InvalidInput(format!("interval [{lo}, {hi}] not inside input domain [{dlo}, {dhi}]")));
    }
    cfg.validate()?;
    let us = uniform_grid(lo, hi, grid);
    let samples: Vec<(f64, f64)> =
        us.par_iter().map(|&u| condition_and_magnitude(plant, cfg, u)).collect::<Result<_>>()?;
    let scale = samples.iter().fold(0.0f64, |m, s| m.max(s.0.abs()));
    let g_scale = samples.iter().fold(0.0f64, |m, s| m.max(s.1));
    if scale == 0.0 {
        // C vanishes on the whole grid: no isolated roots to report.
        return Ok(Vec::new());
    }
    let tol = ROOT_TOL * scale;

    let mut roots = Vec::new();
    for i in 0..grid {
        let c = samples[i].0;
        if c == 0.0 {
            roots.push(Ok((us[i], 0.0)));
        } else if i + 1 < grid && c * samples[i + 1].0 < 0.0 {
            let bracket = ((us[i], c), (us[i + 1], samples[i + 1].0));
            roots.push(Err(bracket));
        }
    }
    let refined: Vec<(f64, f64)> = roots
        .into_par_iter()
        .map(|r| match r {
            Ok(root) => Ok(root),
            Err((a, b)) => refine_bracket(|u| condition_value(plant, cfg, u), a, b, tol),
        })
        .collect::<Result<_>>()?;

    refined
        .into_par_iter()
        .map(|(u, c)| {
            let (_, magnitude) = condition_and_magnitude(plant, cfg, u)?;
            Ok(StationaryPoint {
                u_bar: u,
                omega: cfg.omega,
                condition_value: c,
                dc_du: condition_partial_u(plant, cfg, u)?,
                stability: Stability::Unknown,
                stability_source: StabilitySource::None,
                response_magnitude: magnitude,
                degenerate: magnitude <= DEGENERATE_RATIO * g_scale,
            })
        })
        .collect()
}

/// Interior extrema of the steady-state map on `[lo, hi]`, located as sign
/// changes of the steady-state gain `dJ/dū = G_ū(0)`.
pub fn steady_state_extrema(plant: &dyn PlantModel, (lo, hi): (f64, f64), grid: usize) -> Result<Vec<f64>> {
    if grid < 2 {
        return Err(EscError::InvalidInput(format!("scan grid needs at least 2 points, got {grid}")));
    }
    let gain = |u: f64| -> Result<f64> { linearize(plant, &equilibrium_at(plant, u)?).steady_state_gain() };
    let us = uniform_grid(lo, hi, grid);
    let gs: Vec<f64> = us.par_iter().map(|&u| gain(u)).collect::<Result<_>>()?;
    let scale = gs.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let mut out = Vec::new();
    for i in 0..grid - 1 {
        if gs[i] == 0.0 {
            out.push(us[i]);
        } else if gs[i] * gs[i + 1] < 0.0 {
            let (u, _) = refine_bracket(gain, (us[i], gs[i]), (us[i + 1], gs[i + 1]), 1e-14 * scale)?;
            out.push(u);
        }
    }
    Ok(out)
}

/// Real transmission zero closest to `target` at operating point `u`.
fn real_zero_near(plant: &dyn PlantModel, u: f64, target: f64) -> Result<Option<f64>> {
    let lin = linearize(plant, &equilibrium_at(plant, u)?);
    let set = transmission_zeros(&lin)?;
    Ok(set
        .zeros
        .iter()
        .filter(|z| z.im.abs() <= 1e-8 * (1.0 + z.norm()))
        .map(|z| z.re)
        .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs())))
}

/// First-order estimate of `ū − u*` for the near-optimal stationary solution.
///
/// Writing `G_ū(s) = (s + z_ū)·G⁰(s)`, where `−z_ū` is the real zero that
/// crosses the origin at `u*`, the estimate is
/// `ω / (tan(π/2 − ∠G⁰(iω) − ∠F_H(iω)) · dz_ū/dū)`.
pub fn estimate_optimum_deviation(plant: &dyn PlantModel, cfg: &EscConfig, u_star: f64) -> Result<f64> {
    let lin = linearize(plant, &equilibrium_at(plant, u_star)?);
    let set = transmission_zeros(&lin)?;
    let location = set.crossing_zero.ok_or_else(|| {
        EscError::InvalidInput(format!("no real transmission zero at u* = {u_star}"))
    })?;
    let h = u_step(u_star);
    let missing = || EscError::InvalidInput(format!("crossing zero lost near u* = {u_star}"));
    let up = real_zero_near(plant, u_star + h, location)?.ok_or_else(missing)?;
    let down = real_zero_near(plant, u_star - h, location)?.ok_or_else(missing)?;
    let dz_du = -(up - down) / (2.0 * h);
    if !(dz_du.is_finite() && dz_du != 0.0) {
        return Err(EscError::InvalidInput(format!("crossing zero has zero derivative at u* = {u_star}")));
    }

    let s = Complex64::new(0.0, cfg.omega);
    let g0 = transfer_at(&lin, s)? / (s - location);
    let fh = filter_response(cfg, FilterKind::HighPass, cfg.omega);
    let argument = FRAC_PI_2 - g0.arg() - fh.phase;
    if reduce_mod_pi(argument - FRAC_PI_2).abs() < 1e-6 {
        return Err(EscError::TangentSingularity { argument });
    }
    Ok(cfg.omega / (argument.tan() * dz_du))
}
