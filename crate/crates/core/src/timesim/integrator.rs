//! Dormand–Prince 5(4) with step-size control and Hairer's fourth-order dense output.

use crate::error::{EscError, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Difference between the fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl IntegratorOptions {
    pub fn new(rtol: f64, atol: f64, max_step: f64) -> Self {
        IntegratorOptions { rtol, atol, max_step, max_steps: 10_000_000 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rtol", self.rtol), ("atol", self.atol)] {
            if !(1e-12..=1e-3).contains(&v) {
                return Err(EscError::InvalidInput(format!("{name} = {v} outside [1e-12, 1e-3]")));
            }
        }
        if !(self.max_step > 0.0) {
            return Err(EscError::InvalidInput(format!("max_step must be positive, got {}", self.max_step)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Result of an integration: the end state plus states at the requested sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub final_state: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
    pub stats: IntegratorStats,
}

fn error_norm(y0: &[f64], y1: &[f64], err: &[f64], opts: &IntegratorOptions) -> f64 {
    let sum: f64 = y0
        .iter()
        .zip(y1)
        .zip(err)
        .map(|((a, b), e)| {
            let sc = opts.atol + opts.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / y0.len() as f64).sqrt()
}

/// Integrates `y' = f(t, y)` from `t0` to `t1 > t0`. `sample_times` must be
/// sorted and inside `[t0, t1]`.
pub fn dopri5<F>(mut f: F, t0: f64, t1: f64, y0: &[f64], sample_times: &[f64], opts: &IntegratorOptions) -> Result<Solution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    opts.validate()?;
    if !(t1 > t0) {
        return Err(EscError::InvalidInput(format!("empty time span [{t0}, {t1}]")));
    }
    if sample_times.windows(2).any(|w| w[1] < w[0]) || sample_times.iter().any(|&t| t < t0 || t > t1) {
        return Err(EscError::InvalidInput("sample times must be sorted and inside the span".into()));
    }
    let n = y0.len();
    let mut stats = IntegratorStats::default();
    let mut samples = Vec::with_capacity(sample_times.len());
    let mut next_sample = 0;
    while next_sample < sample_times.len() && sample_times[next_sample] == t0 {
        samples.push(y0.to_vec());
        next_sample += 1;
    }

    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut t = t0;
    f(t, &y, &mut k[0]);
    stats.evaluations += 1;

    let mut h = initial_step(&mut f, t, &y, &k[0], opts, &mut stats).min(t1 - t0);
    let mut last_rejected = false;

    while t < t1 {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(EscError::StepSizeUnderflow { t, h });
        }
        if h < 1e-14 * t.abs().max(1.0) || !h.is_finite() {
            return Err(EscError::StepSizeUnderflow { t, h });
        }
        let last = t + h >= t1 - 4.0 * f64::EPSILON * t1.abs().max(1.0);
        if last {
            h = t1 - t;
        }

        let stage = |tmp: &mut Vec<f64>, k: &[Vec<f64>], coefs: &[(usize, f64)]| {
            for i in 0..n {
                let mut acc = 0.0;
                for &(j, a) in coefs {
                    acc += a * k[j][i];
                }
                tmp[i] = y[i] + h * acc;
            }
        };
        stage(&mut tmp, &k, &[(0, A21)]);
        f(t + C2 * h, &tmp, &mut k[1]);
        stage(&mut tmp, &k, &[(0, A31), (1, A32)]);
        f(t + C3 * h, &tmp, &mut k[2]);
        stage(&mut tmp, &k, &[(0, A41), (1, A42), (2, A43)]);
        f(t + C4 * h, &tmp, &mut k[3]);
        stage(&mut tmp, &k, &[(0, A51), (1, A52), (2, A53), (3, A54)]);
        f(t + C5 * h, &tmp, &mut k[4]);
        stage(&mut tmp, &k, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]);
        f(t + h, &tmp, &mut k[5]);
        stage(&mut y_new, &k, &[(0, A71), (2, A73), (3, A74), (4, A75), (5, A76)]);
        f(t + h, &y_new, &mut k[6]);
        stats.evaluations += 6;

        for i in 0..n {
            err[i] = h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
        }
        let e = error_norm(&y, &y_new, &err, opts);
        if !e.is_finite() {
            stats.rejected += 1;
            h *= MIN_FACTOR;
            last_rejected = true;
            continue;
        }
        if e > 1.0 {
            stats.rejected += 1;
            h *= (SAFETY * e.powf(-0.2)).max(MIN_FACTOR);
            last_rejected = true;
            continue;
        }

        stats.accepted += 1;
        let t_new = if last { t1 } else { t + h };
        while next_sample < sample_times.len() && sample_times[next_sample] <= t_new {
            let theta = ((sample_times[next_sample] - t) / h).clamp(0.0, 1.0);
            samples.push(dense(&y, &y_new, &k, h, theta));
            next_sample += 1;
        }
        y.copy_from_slice(&y_new);
        k.swap(0, 6);
        t = t_new;

        let mut factor = if e == 0.0 { MAX_FACTOR } else { (SAFETY * e.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR) };
        if last_rejected {
            factor = factor.min(1.0);
        }
        last_rejected = false;
        h = (h * factor).min(opts.max_step);
    }
    Ok(Solution { final_state: y, samples, stats })
}

/// Hairer's fourth-order continuous extension on `[t, t + h]`.
fn dense(y0: &[f64], y1: &[f64], k: &[Vec<f64>], h: f64, theta: f64) -> Vec<f64> {
    let th1 = 1.0 - theta;
    (0..y0.len())
        .map(|i| {
            let ydiff = y1[i] - y0[i];
            let bspl = h * k[0][i] - ydiff;
            let r4 = ydiff - h * k[6][i] - bspl;
            let r5 = h * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
            y0[i] + theta * (ydiff + th1 * (bspl + theta * (r4 + th1 * r5)))
        })
        .collect()
}

/// Starting step from Hairer's heuristic, capped by `max_step`.
fn initial_step<F>(f: &mut F, t: f64, y: &[f64], f0: &[f64], opts: &IntegratorOptions, stats: &mut IntegratorStats) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len() as f64;
    let sc: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let d0 = (y.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (f0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }.min(opts.max_step);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(v, d)| v + h0 * d).collect();
    let mut f1 = vec![0.0; y.len()];
    f(t + h0, &y1, &mut f1);
    stats.evaluations += 1;
    let d2 = (f1.iter().zip(f0).zip(&sc).map(|((a, b), s)| ((a - b) / s).powi(2)).sum::<f64>() / n).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1).min(opts.max_step)
}
