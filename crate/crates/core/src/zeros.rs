//! Transmission zeros of linearized plants and the zero-dynamics bifurcation
//! that accompanies an extremum of the steady-state map.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EscError, Result};
use crate::freq::transfer_at;
use crate::linalg;
use crate::plant::{equilibrium_at, linearize, LinearizedPlant, PlantModel};

/// Normalized residual `|G(z)| / (‖C‖‖B‖)` a zero must satisfy.
pub const ZERO_RESIDUAL_TOL: f64 = 1e-8;
/// Candidates this close (relative) to a pole are treated as cancellations.
pub const POLE_GUARD: f64 = 1e-8;
/// Imaginary part below which a zero counts as real, relative to `1 + |z|`.
const REAL_TOL: f64 = 1e-8;
/// Markov parameters below this fraction of their scale count as zero.
const MARKOV_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroSet {
    /// Finite transmission zeros that passed the residual and pole checks.
    pub zeros: Vec<Complex64>,
    /// Real zero of smallest magnitude.
    pub crossing_zero: Option<f64>,
    /// Set when a second real zero lies within a factor two of the crossing zero.
    pub crossing_ambiguous: bool,
    /// Small-zero estimate `−c0/c1` from the MacLaurin coefficients of `G`.
    pub maclaurin_zero: Option<f64>,
    /// `G(0) = −C·A⁻¹·B`.
    pub steady_state_gain: f64,
    /// `None` when every Markov parameter vanishes, i.e. `G ≡ 0`.
    pub relative_degree: Option<usize>,
    /// Number of pencil eigenvalues discarded by the residual or pole checks.
    pub rejected: usize,
}

impl ZeroSet {
    pub fn is_identically_zero(&self) -> bool {
        self.relative_degree.is_none()
    }

    /// Real zero of smallest magnitude with `|z| < window`.
    pub fn crossing_zero_within(&self, window: f64) -> Option<f64> {
        self.crossing_zero.filter(|z| z.abs() < window)
    }
}

fn real_zeros(zeros: &[Complex64]) -> Vec<f64> {
    zeros.iter().filter(|z| z.im.abs() <= REAL_TOL * (1.0 + z.norm())).map(|z| z.re).collect()
}

/// Relative degree from the Markov parameters `C·A^{k−1}·B`.
fn relative_degree(lin: &LinearizedPlant) -> Option<usize> {
    let n = lin.dim();
    let a_norm = lin.a.norm().max(f64::MIN_POSITIVE);
    let cb = lin.c.norm() * lin.b.norm();
    if cb == 0.0 {
        return None;
    }
    let mut v = lin.b.clone();
    let mut scale = cb;
    for k in 1..=n {
        if lin.c.dot(&v).abs() > MARKOV_TOL * scale {
            return Some(k);
        }
        v = &lin.a * v;
        scale *= a_norm;
    }
    None
}

/// Finite generalized eigenvalues of the Rosenbrock pencil
/// `[[zI − A, −B], [C, 0]]`, by shift-and-invert reduction to a standard
/// eigenproblem: with `M0 = [[A, B], [−C, 0]]` and `E = diag(I, 0)`, every
/// finite eigenvalue `z` maps to `μ = 1/(z − σ)` of `(M0 − σE)⁻¹E`, and the
/// infinite ones map to `μ = 0`.
fn pencil_eigenvalues(lin: &LinearizedPlant, finite: usize) -> Option<Vec<Complex64>> {
    let n = lin.dim();
    let a_scale = 1.0 + lin.a.amax();
    let mut e = DMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        e[(i, i)] = 1.0;
    }
    for sigma in [0.0618034, -0.0414214, 0.173205, -0.223607].map(|s| s * a_scale) {
        let mut shifted = DMatrix::zeros(n + 1, n + 1);
        shifted.view_mut((0, 0), (n, n)).copy_from(&lin.a);
        shifted.view_mut((0, n), (n, 1)).copy_from(&lin.b);
        for j in 0..n {
            shifted[(n, j)] = -lin.c[j];
            shifted[(j, j)] -= sigma;
        }
        let Some(k) = linalg::solve_matrix(shifted, &e) else {
            continue;
        };
        let mut mu = linalg::eigenvalues(&k);
        mu.sort_by(|x, y| y.norm().total_cmp(&x.norm()));
        return Some(
            mu.into_iter()
                .take(finite)
                .filter(|m| m.norm() > 0.0)
                .map(|m| Complex64::new(sigma, 0.0) + m.inv())
                .collect(),
        );
    }
    None
}

/// Maclaurin coefficients `(C·A⁻¹·B, C·A⁻²·B)`.
fn maclaurin_coefficients(lin: &LinearizedPlant) -> Result<(f64, f64)> {
    let singular = || EscError::SingularSolve { re: 0.0, im: 0.0 };
    let x1 = linalg::solve(lin.a.clone(), &lin.b).ok_or_else(singular)?;
    let x2 = linalg::solve(lin.a.clone(), &x1).ok_or_else(singular)?;
    Ok((lin.c.dot(&x1), lin.c.dot(&x2)))
}

pub fn transmission_zeros(lin: &LinearizedPlant) -> Result<ZeroSet> {
    let (c0, c1) = maclaurin_coefficients(lin)?;
    let steady_state_gain = -c0;
    let maclaurin_zero = (c1 != 0.0).then(|| -c0 / c1);
    let relative_degree = relative_degree(lin);
    let mut set = ZeroSet {
        zeros: Vec::new(),
        crossing_zero: None,
        crossing_ambiguous: false,
        maclaurin_zero,
        steady_state_gain,
        relative_degree,
        rejected: 0,
    };
    let Some(r) = relative_degree else {
        return Ok(set);
    };
    let finite = lin.dim() - r;
    if finite == 0 {
        return Ok(set);
    }
    let candidates = pencil_eigenvalues(lin, finite).ok_or(EscError::IllConditionedPencil)?;
    let poles = lin.poles();
    let norm = lin.c.norm() * lin.b.norm();
    let mut failed_residual = 0;
    for z in candidates {
        if poles.iter().any(|p| (p - z).norm() <= POLE_GUARD * (1.0 + p.norm())) {
            set.rejected += 1;
        } else if matches!(transfer_at(lin, z), Ok(g) if g.norm() <= ZERO_RESIDUAL_TOL * norm) {
            set.zeros.push(z);
        } else {
            set.rejected += 1;
            failed_residual += 1;
        }
    }
    if set.zeros.is_empty() && failed_residual > 0 {
        return Err(EscError::IllConditionedPencil);
    }
    set.zeros.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.im.total_cmp(&b.im)));

    let mut reals = real_zeros(&set.zeros);
    reals.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    set.crossing_zero = reals.first().copied();
    if let [first, second, ..] = reals[..] {
        set.crossing_ambiguous = second.abs() <= 2.0 * first.abs();
    }
    Ok(set)
}

/// One grid point of a zero-crossing scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroScanRow {
    pub u: f64,
    pub crossing_zero: Option<f64>,
    pub steady_state_gain: f64,
    /// `G ≡ 0` at this operating point.
    pub degenerate: bool,
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroScan {
    pub rows: Vec<ZeroScanRow>,
    /// Indices `i` where the crossing zero changes sign between rows `i` and `i + 1`.
    pub zero_sign_changes: Vec<usize>,
    /// Indices `i` where `G(0)` changes sign between rows `i` and `i + 1`.
    pub gain_sign_changes: Vec<usize>,
}

fn zero_row(plant: &dyn PlantModel, u: f64) -> Result<ZeroScanRow> {
    let eq = equilibrium_at(plant, u)?;
    let lin = linearize(plant, &eq);
    match transmission_zeros(&lin) {
        Ok(set) => Ok(ZeroScanRow {
            u,
            crossing_zero: set.crossing_zero,
            steady_state_gain: set.steady_state_gain,
            degenerate: set.is_identically_zero(),
            ambiguous: set.crossing_ambiguous,
        }),
        Err(EscError::IllConditionedPencil) => Ok(ZeroScanRow {
            u,
            crossing_zero: None,
            steady_state_gain: lin.steady_state_gain()?,
            degenerate: false,
            ambiguous: false,
        }),
        Err(e) => Err(e),
    }
}

/// Crossing zero and steady-state gain along the equilibrium manifold.
pub fn zero_crossing_scan(plant: &dyn PlantModel, u_grid: &[f64]) -> Result<ZeroScan> {
    let (lo, hi) = plant.input_domain();
    if let Some(u) = u_grid.iter().find(|u| !(lo..=hi).contains(*u)) {
        return Err(EscError::InvalidInput(format!("u = {u} outside input domain [{lo}, {hi}]")));
    }
    let rows: Vec<ZeroScanRow> = u_grid.par_iter().map(|&u| zero_row(plant, u)).collect::<Result<_>>()?;
    let flips = |f: &dyn Fn(&ZeroScanRow) -> Option<f64>| -> Vec<usize> {
        rows.windows(2)
            .enumerate()
            .filter_map(|(i, w)| match (f(&w[0]), f(&w[1])) {
                (Some(a), Some(b)) if a != 0.0 && b != 0.0 && a.signum() != b.signum() => Some(i),
                _ => None,
            })
            .collect()
    };
    let zero_sign_changes = flips(&|r| r.crossing_zero);
    let gain_sign_changes = flips(&|r| (!r.degenerate).then_some(r.steady_state_gain));
    Ok(ZeroScan { rows, zero_sign_changes, gain_sign_changes })
}

/// State-space realization of `num(s)/den(s)` in controllable canonical form;
/// coefficients are listed from the highest power down and `den` is monic.
pub fn controllable_canonical(num: &[f64], den: &[f64]) -> LinearizedPlant {
    let n = den.len() - 1;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = -den[n - j] / den[0];
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let mut c = DVector::zeros(n);
    for (k, coef) in num.iter().rev().enumerate() {
        c[k] = coef / den[0];
    }
    LinearizedPlant::from_matrices(a, b, c)
}
