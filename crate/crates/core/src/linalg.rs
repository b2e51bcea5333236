//! Small dense linear-algebra helpers shared by the analysis modules.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

/// Pivot ratio below which an LU factorization is treated as singular.
pub(crate) const PIVOT_RATIO: f64 = 1e-14;

fn pivots_ok<T: ComplexField<RealField = f64>>(u_diag: impl Iterator<Item = T>) -> bool {
    let mut max = 0.0f64;
    let mut min = f64::INFINITY;
    for p in u_diag {
        let m = p.modulus();
        if !m.is_finite() {
            return false;
        }
        max = max.max(m);
        min = min.min(m);
    }
    max > 0.0 && min > PIVOT_RATIO * max
}

/// Solves `a x = b`, returning `None` when `a` is numerically singular.
pub(crate) fn solve<T>(a: DMatrix<T>, b: &DVector<T>) -> Option<DVector<T>>
where
    T: ComplexField<RealField = f64>,
{
    let lu = a.lu();
    if !pivots_ok(lu.u().diagonal().iter().cloned()) {
        return None;
    }
    lu.solve(b)
}

/// Solves `a X = B` for a matrix right-hand side.
pub(crate) fn solve_matrix(a: DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let lu = a.lu();
    if !pivots_ok(lu.u().diagonal().iter().cloned()) {
        return None;
    }
    lu.solve(b)
}

/// Eigenvalues of a real square matrix, including complex pairs.
pub(crate) fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.complex_eigenvalues().iter().cloned().collect()
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Real matrix lifted into the complex field.
pub(crate) fn complexify(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

pub(crate) fn complexify_vec(v: &DVector<f64>) -> DVector<Complex64> {
    v.map(|x| Complex64::new(x, 0.0))
}
