use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::integrator::dopri5;
use super::{ClosedLoopSystem, SimOptions};
use crate::error::{EscError, Result};
use crate::linalg;

/// Multipliers within this distance of the unit circle are marginal.
pub const MARGINAL_BAND: f64 = 1e-6;

const MAX_RISES: usize = 3;
const RISE_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonodromyMethod {
    /// Integrate `Φ' = J(t, z)·Φ` alongside the orbit.
    Variational,
    /// Central differences of the period map, one pair of integrations per column.
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingOptions {
    /// Converged when `‖Φ_T(z) − z‖∞ ≤ tol·(1 + ‖z‖∞)`.
    pub tol: f64,
    pub max_iterations: usize,
    pub sim: SimOptions,
    pub monodromy: MonodromyMethod,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        ShootingOptions {
            tol: 1e-9,
            max_iterations: 25,
            sim: SimOptions { rtol: 1e-10, atol: 1e-12, samples_per_period: 256 },
            monodromy: MonodromyMethod::Variational,
        }
    }
}

/// A period-one orbit anchored at phase `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub anchor_state: Vec<f64>,
    pub period: f64,
    pub omega: f64,
    /// Period mean of `û`.
    pub mean_input: f64,
    /// Period mean of the plant output.
    pub mean_output: f64,
    pub floquet_multipliers: Vec<Complex64>,
    pub residual: f64,
    pub iterations: usize,
}

/// `Φ_T(z)`: the state one forcing period after `z` at phase zero.
pub fn period_map(sys: &ClosedLoopSystem<'_>, z: &[f64], opts: &SimOptions) -> Result<Vec<f64>> {
    sys.check_state(z)?;
    let period = sys.period();
    Ok(dopri5(|t, z, dz| sys.rhs(t, z, dz), 0.0, period, z, &[], &opts.integrator(period))?.final_state)
}

fn variational_period_map(sys: &ClosedLoopSystem<'_>, z: &[f64], opts: &SimOptions) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = sys.dim();
    let mut y0 = vec![0.0; n + n * n];
    y0[..n].copy_from_slice(z);
    for i in 0..n {
        y0[n + i * n + i] = 1.0;
    }
    let period = sys.period();
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let (state, phi) = y.split_at(n);
        let (dstate, dphi) = dy.split_at_mut(n);
        sys.rhs(t, state, dstate);
        let j = sys.jacobian(t, state);
        let phi = DMatrixView::from_slice(phi, n, n);
        let mut out = DMatrixViewMut::from_slice(dphi, n, n);
        out.gemm(1.0, &j, &phi, 0.0);
    };
    let sol = dopri5(rhs, 0.0, period, &y0, &[], &opts.integrator(period))?;
    let m = DMatrix::from_column_slice(n, n, &sol.final_state[n..]);
    let mut end = sol.final_state;
    end.truncate(n);
    Ok((end, m))
}

fn fd_period_map(sys: &ClosedLoopSystem<'_>, z: &[f64], opts: &SimOptions) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = sys.dim();
    let end = period_map(sys, z, opts)?;
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|col| {
            // Step scaled to the integration tolerance so truncation and noise balance.
            let h = opts.rtol.cbrt() * (z[col].abs() + 1e-3).max(1e-4);
            let mut zp = z.to_vec();
            zp[col] += h;
            let up = period_map(sys, &zp, opts)?;
            zp[col] -= 2.0 * h;
            let down = period_map(sys, &zp, opts)?;
            Ok(up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect())
        })
        .collect::<Result<_>>()?;
    let m = DMatrix::from_fn(n, n, |i, j| columns[j][i]);
    Ok((end, m))
}

/// `Φ_T(z)` together with the monodromy matrix `∂Φ_T/∂z`.
pub fn period_map_with_monodromy(
    sys: &ClosedLoopSystem<'_>,
    z: &[f64],
    opts: &ShootingOptions,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    sys.check_state(z)?;
    match opts.monodromy {
        MonodromyMethod::Variational => variational_period_map(sys, z, &opts.sim),
        MonodromyMethod::FiniteDifference => fd_period_map(sys, z, &opts.sim),
    }
}

fn max_norm(v: &[f64]) -> f64 {
    linalg::max_abs(v)
}

/// Period means of `û` and `y` along the orbit through `z`.
fn orbit_means(sys: &ClosedLoopSystem<'_>, z: &[f64], opts: &SimOptions) -> Result<(f64, f64)> {
    let period = sys.period();
    let m = opts.samples_per_period.max(super::SAMPLES_PER_PERIOD);
    let times: Vec<f64> = (0..m).map(|j| period * j as f64 / m as f64).collect();
    let sol = dopri5(|t, z, dz| sys.rhs(t, z, dz), 0.0, period, z, &times, &opts.integrator(period))?;
    // Rectangle rule over one period of a periodic signal equals the trapezoid rule.
    let k = sys.u_hat_index();
    let u = sol.samples.iter().map(|s| s[k]).sum::<f64>() / m as f64;
    let y = sol.samples.iter().map(|s| sys.output(s)).sum::<f64>() / m as f64;
    Ok((u, y))
}

/// Newton iteration on `Φ_T(z) − z = 0`.
pub fn shoot_orbit(sys: &ClosedLoopSystem<'_>, z_guess: &[f64], opts: &ShootingOptions) -> Result<PeriodicOrbit> {
    sys.check_state(z_guess)?;
    let n = sys.dim();
    let mut z = z_guess.to_vec();
    let (end, mut m) = period_map_with_monodromy(sys, &z, opts)?;
    let mut r: Vec<f64> = end.iter().zip(&z).map(|(a, b)| a - b).collect();
    let mut res = max_norm(&r);
    let mut rises = 0;
    for iter in 0..=opts.max_iterations {
        if res <= opts.tol * (1.0 + max_norm(&z)) {
            let multipliers = linalg::eigenvalues(&m);
            let (mean_input, mean_output) = orbit_means(sys, &z, &opts.sim)?;
            return Ok(PeriodicOrbit {
                anchor_state: z,
                period: sys.period(),
                omega: sys.cfg.omega,
                mean_input,
                mean_output,
                floquet_multipliers: multipliers,
                residual: res,
                iterations: iter,
            });
        }
        if iter == opts.max_iterations {
            break;
        }
        let jac = &m - DMatrix::identity(n, n);
        let rhs = -DVector::from_column_slice(&r);
        let dz = linalg::solve(jac, &rhs).ok_or(EscError::RankDeficientJacobian)?;

        // Near a slow mode (multiplier close to 1) the full step can raise the
        // residual of the fast states while moving much closer to the orbit,
        // so a bounded increase is tolerated a few times before backtracking.
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = z.iter().zip(dz.iter()).map(|(a, d)| a + lambda * d).collect();
            if let Ok((e, mm)) = period_map_with_monodromy(sys, &trial, opts) {
                let rt: Vec<f64> = e.iter().zip(&trial).map(|(a, b)| a - b).collect();
                let rn = max_norm(&rt);
                let tolerated = lambda == 1.0 && rises < MAX_RISES && rn < RISE_FACTOR * res;
                if rn.is_finite() && (rn < res || tolerated) {
                    rises = if rn < res { rises } else { rises + 1 };
                    z = trial;
                    m = mm;
                    r = rt;
                    res = rn;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1.0 / 64.0 {
                return Err(EscError::NewtonDivergence { iterations: iter + 1, residual: res });
            }
        }
    }
    Err(EscError::NewtonDivergence { iterations: opts.max_iterations, residual: res })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloquetVerdict {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloquetReport {
    pub verdict: FloquetVerdict,
    /// A real multiplier lies at or beyond `−1`.
    pub period_doubling: bool,
    pub max_modulus: f64,
    /// Most negative real multiplier, if any.
    pub min_real_multiplier: Option<f64>,
}

pub fn floquet_stability(orbit: &PeriodicOrbit) -> FloquetReport {
    let mus = &orbit.floquet_multipliers;
    let max_modulus = mus.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let marginal = mus.iter().any(|z| (z.norm() - 1.0).abs() <= MARGINAL_BAND);
    let verdict = if marginal {
        FloquetVerdict::Marginal
    } else if max_modulus < 1.0 {
        FloquetVerdict::Stable
    } else {
        FloquetVerdict::Unstable
    };
    let min_real_multiplier = mus
        .iter()
        .filter(|z| z.im.abs() <= 1e-9 * (1.0 + z.norm()))
        .map(|z| z.re)
        .min_by(f64::total_cmp);
    FloquetReport {
        verdict,
        period_doubling: min_real_multiplier.is_some_and(|m| m <= -1.0 + MARGINAL_BAND),
        max_modulus,
        min_real_multiplier,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettleReport {
    pub state: Vec<f64>,
    pub periods: usize,
    pub settled: bool,
}

/// Advances the stroboscopic map until the displacement stays below
/// `1e-8·(1 + ‖z‖)` for three consecutive periods, or `max_periods` elapse.
pub fn settle(sys: &ClosedLoopSystem<'_>, z0: &[f64], max_periods: usize, opts: &SimOptions) -> Result<SettleReport> {
    sys.check_state(z0)?;
    let mut z = z0.to_vec();
    let mut quiet = 0;
    for p in 0..max_periods {
        let next = period_map(sys, &z, opts)?;
        let d = next.iter().zip(&z).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        z = next;
        quiet = if d < 1e-8 * (1.0 + max_norm(&z)) { quiet + 1 } else { 0 };
        if quiet >= 3 {
            return Ok(SettleReport { state: z, periods: p + 1, settled: true });
        }
    }
    Ok(SettleReport { state: z, periods: max_periods, settled: false })
}

/// Orbits reached from rest states at the given inputs: each seed settles for
/// `settle_periods` periods and is then refined by shooting. Converged orbits
/// are deduplicated by mean input and returned sorted by it; failures are dropped.
pub fn find_orbits(
    sys: &ClosedLoopSystem<'_>,
    seeds: &[f64],
    settle_periods: usize,
    opts: &ShootingOptions,
) -> Result<Vec<PeriodicOrbit>> {
    let found: Vec<Option<PeriodicOrbit>> = seeds
        .par_iter()
        .map(|&u| -> Result<Option<PeriodicOrbit>> {
            let z0 = sys.rest_state(u)?;
            let settled = settle(sys, z0.as_slice(), settle_periods, &opts.sim)?;
            Ok(shoot_orbit(sys, &settled.state, opts).ok())
        })
        .collect::<Result<_>>()?;
    let mut orbits: Vec<PeriodicOrbit> = found.into_iter().flatten().collect();
    orbits.sort_by(|a, b| a.mean_input.total_cmp(&b.mean_input));
    orbits.dedup_by(|b, a| (a.mean_input - b.mean_input).abs() <= 1e-6 * (1.0 + a.mean_input.abs()));
    Ok(orbits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::build_linear;
    use crate::freq::EscConfig;

    #[test]
    fn open_loop_multipliers_are_exponentials() {
        // With k = 0 the loop is linear and time-invariant in (x, η) and the
        // multipliers are exp(λ T) for λ ∈ {pole, 0 (û), −ω_l, −ω_h}.
        let plant = build_linear(-0.5).unwrap();
        let cfg = EscConfig { gain: 0.0, ..EscConfig::with_ratio(1.0, 0.1, 1.0, 0.05) };
        let sys = ClosedLoopSystem::open_loop(&plant, cfg);
        let z0 = sys.rest_state(1.0).unwrap();
        let opts = ShootingOptions::default();
        let (_, m) = period_map_with_monodromy(&sys, z0.as_slice(), &opts).unwrap();
        let mut mus: Vec<f64> = linalg::eigenvalues(&m).iter().map(|z| z.re).collect();
        mus.sort_by(f64::total_cmp);
        let t = sys.period();
        let mut expected = vec![(-0.5 * t).exp(), 1.0, (-0.1 * t).exp(), (-0.1 * t).exp()];
        expected.sort_by(f64::total_cmp);
        for (a, b) in mus.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn variational_and_finite_difference_monodromy_agree() {
        let plant = build_linear(-1.0).unwrap();
        let sys = ClosedLoopSystem::new(&plant, EscConfig::with_ratio(0.7, 0.1, -0.5, 0.1)).unwrap();
        let z0 = sys.rest_state(0.2).unwrap();
        let var = ShootingOptions::default();
        let fd = ShootingOptions { monodromy: MonodromyMethod::FiniteDifference, ..var };
        let (_, a) = period_map_with_monodromy(&sys, z0.as_slice(), &var).unwrap();
        let (_, b) = period_map_with_monodromy(&sys, z0.as_slice(), &fd).unwrap();
        assert!((&a - &b).amax() < 1e-6, "{}", (&a - &b).amax());
    }

    #[test]
    fn linear_loop_has_no_orbit() {
        let plant = build_linear(-1.0).unwrap();
        let sys = ClosedLoopSystem::new(&plant, EscConfig::with_ratio(1.0, 0.1, -0.01, 0.05)).unwrap();
        let z0 = sys.rest_state(0.0).unwrap();
        let orbit = shoot_orbit(&sys, z0.as_slice(), &ShootingOptions::default());
        // The demodulated mean (a/2)·Re{F_H G} is a nonzero constant, so û drifts.
        assert!(orbit.is_err());
    }

    #[test]
    fn floquet_verdicts() {
        let orbit = |mus: Vec<Complex64>| PeriodicOrbit {
            anchor_state: vec![],
            period: 1.0,
            omega: 1.0,
            mean_input: 0.0,
            mean_output: 0.0,
            floquet_multipliers: mus,
            residual: 0.0,
            iterations: 0,
        };
        let c = |re, im| Complex64::new(re, im);
        assert_eq!(floquet_stability(&orbit(vec![c(0.5, 0.0), c(0.1, 0.2)])).verdict, FloquetVerdict::Stable);
        assert_eq!(floquet_stability(&orbit(vec![c(1.2, 0.0)])).verdict, FloquetVerdict::Unstable);
        assert_eq!(floquet_stability(&orbit(vec![c(1.0 - 1e-8, 0.0)])).verdict, FloquetVerdict::Marginal);
        let pd = floquet_stability(&orbit(vec![c(-1.05, 0.0), c(0.3, 0.0)]));
        assert!(pd.period_doubling);
        assert_eq!(pd.verdict, FloquetVerdict::Unstable);
        assert!(!floquet_stability(&orbit(vec![c(-0.9, 0.0)])).period_doubling);
        assert!(!floquet_stability(&orbit(vec![c(-0.9, 0.5), c(-0.9, -0.5)])).period_doubling);
    }
}
