//! Frequency responses of linearized plants and loop filters, and harmonic
//! extraction from sampled signals.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{EscError, Result};
use crate::linalg;
use crate::plant::LinearizedPlant;

/// Filter break-off frequency, either absolute or as a multiple of the
/// perturbation frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BreakOff {
    Absolute(f64),
    Ratio(f64),
}

impl BreakOff {
    pub fn resolve(&self, omega: f64) -> f64 {
        match *self {
            BreakOff::Absolute(w) => w,
            BreakOff::Ratio(r) => r * omega,
        }
    }
}

/// Tuning of the classical perturbation-based loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscConfig {
    /// Perturbation frequency ω.
    pub omega: f64,
    pub high_pass: BreakOff,
    pub low_pass: BreakOff,
    /// Integral gain k.
    pub gain: f64,
    /// Perturbation amplitude a.
    pub amplitude: f64,
}

/// Non-fatal tuning remarks.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigWarning {
    HighPassNotBelowOmega { omega_h: f64, omega: f64 },
    LowPassNotBelowOmega { omega_l: f64, omega: f64 },
}

impl std::fmt::Display for ConfigWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigWarning::HighPassNotBelowOmega { omega_h, omega } => {
                write!(f, "high-pass break-off {omega_h} is not below omega = {omega}")
            }
            ConfigWarning::LowPassNotBelowOmega { omega_l, omega } => {
                write!(f, "low-pass break-off {omega_l} is not below omega = {omega}")
            }
        }
    }
}

impl EscConfig {
    pub fn new(omega: f64, omega_h: f64, omega_l: f64, gain: f64, amplitude: f64) -> Self {
        EscConfig {
            omega,
            high_pass: BreakOff::Absolute(omega_h),
            low_pass: BreakOff::Absolute(omega_l),
            gain,
            amplitude,
        }
    }

    /// Both break-offs at `ratio · ω`, so they follow ω in frequency sweeps.
    pub fn with_ratio(omega: f64, ratio: f64, gain: f64, amplitude: f64) -> Self {
        EscConfig {
            omega,
            high_pass: BreakOff::Ratio(ratio),
            low_pass: BreakOff::Ratio(ratio),
            gain,
            amplitude,
        }
    }

    /// Reactor tuning of the case study: ω = 0.4, ω_h = ω_l = 0.1ω, k = 0.01, a = 0.001.
    pub fn reactor_default() -> Self {
        Self::with_ratio(0.4, 0.1, 0.01, 0.001)
    }

    pub fn omega_h(&self) -> f64 {
        self.high_pass.resolve(self.omega)
    }

    pub fn omega_l(&self) -> f64 {
        self.low_pass.resolve(self.omega)
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// Same tuning at another perturbation frequency.
    pub fn at_omega(&self, omega: f64) -> Self {
        EscConfig { omega, ..*self }
    }

    pub fn with_gain(&self, gain: f64) -> Self {
        EscConfig { gain, ..*self }
    }

    pub fn validate(&self) -> Result<Vec<ConfigWarning>> {
        let (wh, wl) = (self.omega_h(), self.omega_l());
        let positive = [("omega", self.omega), ("omega_h", wh), ("omega_l", wl), ("amplitude", self.amplitude)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(EscError::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.gain.is_finite() && self.gain != 0.0) {
            return Err(EscError::InvalidInput(format!("gain must be nonzero, got {}", self.gain)));
        }
        let mut warnings = Vec::new();
        if wh >= self.omega {
            warnings.push(ConfigWarning::HighPassNotBelowOmega { omega_h: wh, omega: self.omega });
        }
        if wl >= self.omega {
            warnings.push(ConfigWarning::LowPassNotBelowOmega { omega_l: wl, omega: self.omega });
        }
        Ok(warnings)
    }
}

/// A complex frequency-response value with its polar form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexResponse {
    pub value: Complex64,
    pub magnitude: f64,
    /// Principal argument in (−π, π].
    pub phase: f64,
}

impl ComplexResponse {
    pub fn new(value: Complex64) -> Self {
        let mut phase = value.arg();
        if phase == -PI {
            phase = PI;
        }
        ComplexResponse { value, magnitude: value.norm(), phase }
    }
}

/// `C·(sI − A)⁻¹·B` at an arbitrary complex `s`.
pub fn transfer_at(lin: &LinearizedPlant, s: Complex64) -> Result<Complex64> {
    let n = lin.dim();
    let mut m: DMatrix<Complex64> = linalg::complexify(&lin.a).map(|v| -v);
    for i in 0..n {
        m[(i, i)] += s;
    }
    let x = linalg::solve(m, &linalg::complexify_vec(&lin.b)).ok_or(EscError::SingularSolve { re: s.re, im: s.im })?;
    Ok(x.iter().zip(lin.c.iter()).map(|(xi, ci)| xi * *ci).sum())
}

/// `G(iω)` of the linearized plant via one complex linear solve.
pub fn plant_response(lin: &LinearizedPlant, omega: f64) -> Result<ComplexResponse> {
    transfer_at(lin, Complex64::new(0.0, omega)).map(ComplexResponse::new)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterKind {
    HighPass,
    LowPass,
}

/// First-order loop filters `F_H(s) = s/(s+ω_h)` and `F_L(s) = ω_l/(s+ω_l)`,
/// with break-offs resolved at the configuration's own ω.
pub fn filter_response(cfg: &EscConfig, which: FilterKind, omega: f64) -> ComplexResponse {
    let s = Complex64::new(0.0, omega);
    let value = match which {
        FilterKind::HighPass => s / (s + cfg.omega_h()),
        FilterKind::LowPass => {
            let wl = cfg.omega_l();
            Complex64::new(wl, 0.0) / (s + wl)
        }
    };
    ComplexResponse::new(value)
}

/// A real signal sampled at `t0 + j·dt`, `j = 0..len`, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSeries {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

/// Mean and first harmonic at the forcing frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicCoefficients {
    pub c0: Complex64,
    pub c1: Complex64,
    pub period: f64,
}

/// Fourier coefficients `c0`, `c1` of a sampled real signal over a window of an
/// integer number of periods, by trapezoidal quadrature.
pub fn extract_harmonics(signal: &UniformSeries, omega: f64) -> Result<HarmonicCoefficients> {
    let period = 2.0 * PI / omega;
    let n = signal.values.len();
    if n < 2 || !(signal.dt > 0.0) || !(omega > 0.0) {
        return Err(EscError::InvalidInput("harmonic extraction needs ≥ 2 samples, dt > 0, omega > 0".into()));
    }
    let steps = n - 1;
    let window = steps as f64 * signal.dt;
    let periods = window / period;
    let whole = periods.round();
    if whole < 1.0 || (window - whole * period).abs() > 0.5 * signal.dt {
        return Err(EscError::WindowMismatch { samples: steps, periods });
    }
    if (steps as f64) < 64.0 * whole {
        return Err(EscError::InvalidInput(format!(
            "{steps} steps over {whole} periods is below 64 samples per period"
        )));
    }
    let mut c0 = 0.0;
    let mut c1 = Complex64::new(0.0, 0.0);
    for (j, &v) in signal.values.iter().enumerate() {
        let w = if j == 0 || j == steps { 0.5 } else { 1.0 };
        let t = signal.t0 + j as f64 * signal.dt;
        c0 += w * v;
        c1 += Complex64::from_polar(w * v, -omega * t);
    }
    let scale = signal.dt / window;
    Ok(HarmonicCoefficients { c0: Complex64::new(c0 * scale, 0.0), c1: c1 * scale, period })
}
