//! Branches of `C(ū, ω) = 0` in the `(ū, ω)` plane, fold detection and
//! bifurcation diagrams.
//!
//! Tracing runs in a chart: either the raw coordinates or `(ln ū, ln ω)`. The
//! logarithmic chart resolves the closely spaced low-input roots of the reactor
//! with a fixed step, at the price of requiring `ū, ω > 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EscError, Result};
use crate::freq::{plant_response, EscConfig};
use crate::plant::{equilibrium_at, linearize, PlantModel};
use crate::stationarity::{condition_from_linearization, refine_bracket, reduce_mod_pi, u_step, ROOT_TOL};

/// Relative degeneracy threshold on `∂²C/∂ū²` at a fold.
pub const FOLD_DEGENERACY: f64 = 1e-8;
const MAX_CORRECTOR_ITERATIONS: usize = 12;
const MAX_BRANCH_POINTS: usize = 20_000;
/// Successive tangents must agree to this cosine, otherwise the step is retried smaller.
const MIN_TANGENT_COSINE: f64 = 0.9;

/// A scalar condition `C(u, ω)` with its gradient.
pub trait ConditionSurface: Sync {
    fn value(&self, u: f64, omega: f64) -> Result<f64>;

    /// `(∂C/∂u, ∂C/∂ω)`.
    fn gradient(&self, u: f64, omega: f64) -> Result<(f64, f64)>;

    fn value_and_gradient(&self, u: f64, omega: f64) -> Result<(f64, (f64, f64))> {
        Ok((self.value(u, omega)?, self.gradient(u, omega)?))
    }

    /// Admissible `u` interval.
    fn u_domain(&self) -> (f64, f64);

    /// `∂²C/∂u²` by a second difference.
    fn second_derivative_u(&self, u: f64, omega: f64) -> Result<f64> {
        let h = 10.0 * u_step(u);
        let c0 = self.value(u, omega)?;
        Ok((self.value(u + h, omega)? - 2.0 * c0 + self.value(u - h, omega)?) / (h * h))
    }
}

/// The stationarity condition of a plant under a fixed ESC tuning; only the
/// perturbation frequency varies, with ratio break-offs scaling along.
pub struct PlantCondition<'a> {
    pub plant: &'a dyn PlantModel,
    pub cfg: EscConfig,
    /// Sub-interval of the plant's input domain to trace in.
    pub domain: (f64, f64),
}

impl<'a> PlantCondition<'a> {
    pub fn new(plant: &'a dyn PlantModel, cfg: EscConfig) -> Self {
        PlantCondition { plant, cfg, domain: plant.input_domain() }
    }

    pub fn with_domain(mut self, lo: f64, hi: f64) -> Result<Self> {
        let (dlo, dhi) = self.plant.input_domain();
        if !(lo < hi && lo >= dlo && hi <= dhi) {
            return Err(EscError::InvalidInput(format!("[{lo}, {hi}] not inside input domain [{dlo}, {dhi}]")));
        }
        self.domain = (lo, hi);
        Ok(self)
    }
}

impl ConditionSurface for PlantCondition<'_> {
    fn value(&self, u: f64, omega: f64) -> Result<f64> {
        let lin = linearize(self.plant, &equilibrium_at(self.plant, u)?);
        condition_from_linearization(&lin, &self.cfg.at_omega(omega))
    }

    fn gradient(&self, u: f64, omega: f64) -> Result<(f64, f64)> {
        condition_gradient(self.plant, &self.cfg, u, omega)
    }

    fn value_and_gradient(&self, u: f64, omega: f64) -> Result<(f64, (f64, f64))> {
        let lin = linearize(self.plant, &equilibrium_at(self.plant, u)?);
        let c = condition_from_linearization(&lin, &self.cfg.at_omega(omega))?;
        let dc_domega = omega_partial(&lin, &self.cfg, omega)?;
        let dc_du = u_partial(self.plant, &self.cfg, u, omega)?;
        Ok((c, (dc_du, dc_domega)))
    }

    fn u_domain(&self) -> (f64, f64) {
        self.domain
    }
}

fn omega_partial(lin: &crate::plant::LinearizedPlant, cfg: &EscConfig, omega: f64) -> Result<f64> {
    let h = 1e-6 * omega;
    let up = condition_from_linearization(lin, &cfg.at_omega(omega + h))?;
    let down = condition_from_linearization(lin, &cfg.at_omega(omega - h))?;
    Ok((up - down) / (2.0 * h))
}

fn u_partial(plant: &dyn PlantModel, cfg: &EscConfig, u: f64, omega: f64) -> Result<f64> {
    let h = u_step(u);
    let at = |u: f64| -> Result<f64> {
        let lin = linearize(plant, &equilibrium_at(plant, u)?);
        condition_from_linearization(&lin, &cfg.at_omega(omega))
    };
    Ok((at(u + h)? - at(u - h)?) / (2.0 * h))
}

/// `(∂C/∂ū, ∂C/∂ω)` by central differences. The `ū` derivative re-solves the
/// equilibrium at each perturbed input; the `ω` derivative reuses the
/// linearization at `ū`.
pub fn condition_gradient(plant: &dyn PlantModel, cfg: &EscConfig, u_bar: f64, omega: f64) -> Result<(f64, f64)> {
    let lin = linearize(plant, &equilibrium_at(plant, u_bar)?);
    Ok((u_partial(plant, cfg, u_bar, omega)?, omega_partial(&lin, cfg, omega)?))
}

/// A condition given by closures, for analytic test surfaces.
pub struct AnalyticCondition<F, G> {
    pub value: F,
    pub gradient: G,
    pub domain: (f64, f64),
}

impl<F, G> ConditionSurface for AnalyticCondition<F, G>
where
    F: Fn(f64, f64) -> f64 + Sync,
    G: Fn(f64, f64) -> (f64, f64) + Sync,
{
    fn value(&self, u: f64, omega: f64) -> Result<f64> {
        Ok((self.value)(u, omega))
    }
    fn gradient(&self, u: f64, omega: f64) -> Result<(f64, f64)> {
        Ok((self.gradient)(u, omega))
    }
    fn u_domain(&self) -> (f64, f64) {
        self.domain
    }
}

/// Coordinates used while tracing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chart {
    Linear,
    /// `(ln u, ln ω)`; needs `u, ω > 0`.
    Logarithmic,
}

impl Chart {
    fn to_chart(self, v: f64) -> f64 {
        match self {
            Chart::Linear => v,
            Chart::Logarithmic => v.ln(),
        }
    }
    fn from_chart(self, p: f64) -> f64 {
        match self {
            Chart::Linear => p,
            Chart::Logarithmic => p.exp(),
        }
    }
    /// `dv/dp`.
    fn scale(self, v: f64) -> f64 {
        match self {
            Chart::Linear => 1.0,
            Chart::Logarithmic => v,
        }
    }
    fn admits(self, v: f64) -> bool {
        match self {
            Chart::Linear => v.is_finite(),
            Chart::Logarithmic => v > 0.0 && v.is_finite(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub u_bar: f64,
    pub omega: f64,
    /// Unit tangent in `(ū, ω)`.
    pub tangent: (f64, f64),
    pub c_value: f64,
    pub dc_du: f64,
    pub dc_domega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldPoint {
    pub u_bar: f64,
    pub omega: f64,
    pub c_value: f64,
    pub dc_du: f64,
    pub d2c_du2: f64,
    pub dc_domega: f64,
    /// `|∂²C/∂ū²|` below the degeneracy threshold: a possible inflection, not a turning point.
    pub degenerate: bool,
    /// The fold lies between branch points `after_index` and `after_index + 1`.
    pub after_index: usize,
}

/// Why one end of a branch stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    OmegaBoundary,
    DomainBoundary,
    CorrectorDivergence,
    EvaluationFailure,
    /// A full step changes `C` by less than the tolerance: the condition
    /// holds identically to working precision and no branch is resolvable.
    DegenerateCondition,
    PointLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionBranch {
    pub points: Vec<BranchPoint>,
    pub folds: Vec<FoldPoint>,
    pub label: String,
    /// Termination at the first and last point.
    pub ends: (Termination, Termination),
}

impl SolutionBranch {
    pub fn diverged(&self) -> bool {
        self.ends.0 == Termination::CorrectorDivergence || self.ends.1 == Termination::CorrectorDivergence
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    /// Maximum chart arclength between consecutive points.
    pub step: f64,
    /// Absolute tolerance on `C` for corrected points.
    pub tolerance: f64,
    pub chart: Chart,
}

/// A point in chart coordinates with chart-space gradient.
#[derive(Debug, Clone, Copy)]
struct ChartPoint {
    p: [f64; 2],
    c: f64,
    grad: [f64; 2],
}

struct Tracer<'a, S: ?Sized> {
    surface: &'a S,
    opts: TraceOptions,
    omega_range: (f64, f64),
}

enum Step {
    Accepted(ChartPoint),
    Boundary(Option<ChartPoint>, Termination),
    Failed(bool),
}

impl<S: ConditionSurface + ?Sized> Tracer<'_, S> {
    fn eval(&self, p: [f64; 2]) -> Result<ChartPoint> {
        let chart = self.opts.chart;
        let (u, w) = (chart.from_chart(p[0]), chart.from_chart(p[1]));
        let (c, (cu, cw)) = self.surface.value_and_gradient(u, w)?;
        if !(c.is_finite() && cu.is_finite() && cw.is_finite()) {
            return Err(EscError::InvalidInput(format!("non-finite condition at ({u}, {w})")));
        }
        Ok(ChartPoint { p, c, grad: [cu * chart.scale(u), cw * chart.scale(w)] })
    }

    fn tangent(pt: &ChartPoint, previous: [f64; 2]) -> [f64; 2] {
        let n = pt.grad[0].hypot(pt.grad[1]);
        let t = [-pt.grad[1] / n, pt.grad[0] / n];
        if t[0] * previous[0] + t[1] * previous[1] < 0.0 {
            [-t[0], -t[1]]
        } else {
            t
        }
    }

    fn chart_bounds(&self) -> ([f64; 2], [f64; 2]) {
        let chart = self.opts.chart;
        let (lo, hi) = self.surface.u_domain();
        (
            [chart.to_chart(lo), chart.to_chart(self.omega_range.0)],
            [chart.to_chart(hi), chart.to_chart(self.omega_range.1)],
        )
    }

    /// Newton on `{C = 0, |y − x| = h}` from the predictor `x + h·t`.
    fn correct(&self, x: &ChartPoint, t: [f64; 2], h: f64) -> Result<Option<ChartPoint>> {
        let mut y = [x.p[0] + h * t[0], x.p[1] + h * t[1]];
        for iter in 0..MAX_CORRECTOR_ITERATIONS {
            let pt = self.eval(y)?;
            let d = [y[0] - x.p[0], y[1] - x.p[1]];
            let f2 = 0.5 * (d[0] * d[0] + d[1] * d[1] - h * h) / h;
            if iter > 0 && pt.c.abs() <= self.opts.tolerance && f2.abs() <= 1e-12 * h {
                return Ok(Some(pt));
            }
            let r = [d[0] / h, d[1] / h];
            let det = pt.grad[0] * r[1] - pt.grad[1] * r[0];
            if det == 0.0 || !det.is_finite() {
                return Ok(None);
            }
            let d0 = (-pt.c * r[1] + f2 * pt.grad[1]) / det;
            let d1 = (-pt.grad[0] * f2 + r[0] * pt.c) / det;
            if d0.hypot(d1) > h {
                return Ok(None);
            }
            y = [y[0] + d0, y[1] + d1];
        }
        Ok(None)
    }

    /// Newton along one coordinate with the other held at `fixed`.
    fn solve_on_line(&self, axis: usize, fixed: f64, mut free: f64) -> Option<ChartPoint> {
        for _ in 0..MAX_CORRECTOR_ITERATIONS {
            let mut p = [0.0; 2];
            p[axis] = fixed;
            p[1 - axis] = free;
            let pt = self.eval(p).ok()?;
            if pt.c.abs() <= self.opts.tolerance {
                return Some(pt);
            }
            let d = pt.grad[1 - axis];
            if d == 0.0 {
                return None;
            }
            free -= pt.c / d;
            if !free.is_finite() {
                return None;
            }
        }
        None
    }

    fn step(&self, x: &ChartPoint, t: [f64; 2], h: f64) -> Step {
        let y = match self.correct(x, t, h) {
            Ok(Some(y)) => y,
            Ok(None) => return Step::Failed(false),
            Err(_) => return Step::Failed(true),
        };
        let (lo, hi) = self.chart_bounds();
        // Crossing a boundary: land exactly on it.
        for axis in [1, 0] {
            let edge = if y.p[axis] < lo[axis] {
                Some(lo[axis])
            } else if y.p[axis] > hi[axis] {
                Some(hi[axis])
            } else {
                None
            };
            if let Some(edge) = edge {
                let s = (edge - x.p[axis]) / (y.p[axis] - x.p[axis]);
                let guess = x.p[1 - axis] + s * (y.p[1 - axis] - x.p[1 - axis]);
                let kind = if axis == 1 { Termination::OmegaBoundary } else { Termination::DomainBoundary };
                let landed = self.solve_on_line(axis, edge, guess).filter(|pt| {
                    let other = pt.p[1 - axis];
                    other >= lo[1 - axis] && other <= hi[1 - axis]
                });
                return Step::Boundary(landed, kind);
            }
        }
        if y.grad[0].hypot(y.grad[1]) * self.opts.step <= self.opts.tolerance {
            return Step::Boundary(Some(y), Termination::DegenerateCondition);
        }
        let t_new = Self::tangent(&y, t);
        if t_new[0] * t[0] + t_new[1] * t[1] < MIN_TANGENT_COSINE {
            return Step::Failed(false);
        }
        Step::Accepted(y)
    }

    /// Follows the branch from `start` along `direction` until it terminates.
    fn run(&self, start: ChartPoint, direction: [f64; 2]) -> (Vec<ChartPoint>, Termination) {
        let max = self.opts.step;
        let min = max / 16.0;
        let mut out = Vec::new();
        let mut x = start;
        let mut t = Self::tangent(&start, direction);
        let mut h = max;
        let mut clean = 0;
        while out.len() < MAX_BRANCH_POINTS {
            match self.step(&x, t, h) {
                Step::Accepted(y) => {
                    t = Self::tangent(&y, t);
                    out.push(y);
                    x = y;
                    clean += 1;
                    if clean >= 4 && h < max {
                        h = (2.0 * h).min(max);
                        clean = 0;
                    }
                }
                Step::Boundary(landed, kind) => {
                    if let Some(pt) = landed {
                        out.push(pt);
                        return (out, kind);
                    }
                    // The boundary landing failed; approach it with shorter steps.
                    if h <= min {
                        return (out, kind);
                    }
                    h = (0.5 * h).max(min);
                    clean = 0;
                }
                Step::Failed(eval_error) => {
                    if h <= min {
                        let kind =
                            if eval_error { Termination::EvaluationFailure } else { Termination::CorrectorDivergence };
                        return (out, kind);
                    }
                    h = (0.5 * h).max(min);
                    clean = 0;
                }
            }
        }
        (out, Termination::PointLimit)
    }

    fn to_branch_point(&self, pt: &ChartPoint, t: [f64; 2]) -> BranchPoint {
        let chart = self.opts.chart;
        let (u, w) = (chart.from_chart(pt.p[0]), chart.from_chart(pt.p[1]));
        let (su, sw) = (chart.scale(u), chart.scale(w));
        let (cu, cw) = (pt.grad[0] / su, pt.grad[1] / sw);
        // Tangent of the same curve in raw coordinates, same orientation.
        let (tu, tw) = (t[0] * su, t[1] * sw);
        let n = tu.hypot(tw);
        BranchPoint { u_bar: u, omega: w, tangent: (tu / n, tw / n), c_value: pt.c, dc_du: cu, dc_domega: cw }
    }
}

/// Traces the branch through `seed = (ū, ω)` in both directions.
pub fn trace_branch<S: ConditionSurface + ?Sized>(
    surface: &S,
    seed: (f64, f64),
    omega_range: (f64, f64),
    opts: TraceOptions,
) -> Result<SolutionBranch> {
    let chart = opts.chart;
    if !(opts.step > 0.0 && opts.tolerance > 0.0) {
        return Err(EscError::InvalidInput("step and tolerance must be positive".into()));
    }
    let (lo, hi) = surface.u_domain();
    let in_range = seed.0 >= lo && seed.0 <= hi && seed.1 >= omega_range.0 && seed.1 <= omega_range.1;
    if !(in_range && chart.admits(seed.0) && chart.admits(seed.1) && chart.admits(omega_range.0) && chart.admits(lo)) {
        return Err(EscError::InvalidInput(format!("seed ({}, {}) outside the tracing region", seed.0, seed.1)));
    }
    let tracer = Tracer { surface, opts, omega_range };
    let start = tracer.eval([chart.to_chart(seed.0), chart.to_chart(seed.1)])?;
    if start.c.abs() > opts.tolerance {
        return Err(EscError::InvalidInput(format!(
            "seed ({}, {}) is not on the branch (|C| = {:e})",
            seed.0,
            seed.1,
            start.c.abs()
        )));
    }
    if start.grad[0] == 0.0 && start.grad[1] == 0.0 {
        return Err(EscError::InvalidInput("condition gradient vanishes at the seed".into()));
    }
    // Forward means increasing ω where the branch allows it.
    let forward = Tracer::<S>::tangent(&start, [0.0, 1.0]);
    let backward = [-forward[0], -forward[1]];
    let ((ahead, end_ahead), (behind, end_behind)) =
        rayon::join(|| tracer.run(start, forward), || tracer.run(start, backward));

    let mut chart_points: Vec<ChartPoint> = behind.into_iter().rev().collect();
    chart_points.push(start);
    chart_points.extend(ahead);
    let mut points = Vec::with_capacity(chart_points.len());
    let mut t_prev = backward.map(|v| -v);
    // Orientation follows the point order: from the backward end to the forward end.
    for (i, pt) in chart_points.iter().enumerate() {
        let reference = if i + 1 < chart_points.len() {
            let next = &chart_points[i + 1];
            [next.p[0] - pt.p[0], next.p[1] - pt.p[1]]
        } else {
            t_prev
        };
        let t = Tracer::<S>::tangent(pt, reference);
        t_prev = t;
        points.push(tracer.to_branch_point(pt, t));
    }
    let mut branch = SolutionBranch {
        points,
        folds: Vec::new(),
        label: format!("seed u={:.6} omega={:.6}", seed.0, seed.1),
        ends: (end_behind, end_ahead),
    };
    branch.folds = detect_folds(surface, &branch, opts)?;
    Ok(branch)
}

/// Turning points in `ω` along a traced branch, refined by bisection on
/// `∂C/∂ū` with `ω(ū)` solved from `C = 0`.
pub fn detect_folds<S: ConditionSurface + ?Sized>(
    surface: &S,
    branch: &SolutionBranch,
    opts: TraceOptions,
) -> Result<Vec<FoldPoint>> {
    let pts = &branch.points;
    if pts.len() < 3 {
        return Ok(Vec::new());
    }
    let chart = opts.chart;
    let grad_scale = pts.iter().fold(0.0f64, |m, p| m.max(p.dc_du.hypot(p.dc_domega)));
    let (u_min, u_max) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.u_bar), b.max(p.u_bar)));
    let u_extent = (u_max - u_min).max(u_step(u_max));

    // ω on the branch at a given ū, by Newton from a nearby guess.
    let omega_at = |u: f64, guess: f64| -> Result<f64> {
        let mut q = chart.to_chart(guess);
        for _ in 0..MAX_CORRECTOR_ITERATIONS {
            let w = chart.from_chart(q);
            let (c, (_, cw)) = surface.value_and_gradient(u, w)?;
            if c.abs() <= opts.tolerance {
                return Ok(w);
            }
            let dq = c / (cw * chart.scale(w));
            if !dq.is_finite() {
                break;
            }
            q -= dq;
        }
        Err(EscError::CorrectorDivergence { u, omega: guess })
    };

    let mut folds = Vec::new();
    for i in 0..pts.len() - 1 {
        let (a, b) = (&pts[i], &pts[i + 1]);
        if a.tangent.1 == 0.0 || a.tangent.1.signum() == b.tangent.1.signum() {
            continue;
        }
        if a.dc_du == 0.0 || b.dc_du == 0.0 || a.dc_du.signum() == b.dc_du.signum() {
            // Sign change of the ω tangent without one in ∂C/∂ū: a singular
            // point of the curve rather than a fold.
            continue;
        }
        let guess = std::cell::Cell::new(0.5 * (a.omega + b.omega));
        let cu_on_branch = |u: f64| -> Result<f64> {
            let w = omega_at(u, guess.get())?;
            guess.set(w);
            Ok(surface.gradient(u, w)?.0)
        };
        let (pa, pb) = (chart.to_chart(a.u_bar), chart.to_chart(b.u_bar));
        let (lo_pt, hi_pt) = if pa < pb { (a, b) } else { (b, a) };
        let refined = refine_bracket(
            |p| cu_on_branch(chart.from_chart(p)),
            (chart.to_chart(lo_pt.u_bar), lo_pt.dc_du),
            (chart.to_chart(hi_pt.u_bar), hi_pt.dc_du),
            ROOT_TOL * grad_scale,
        );
        let Ok((p, _)) = refined else {
            continue;
        };
        let u = chart.from_chart(p);
        let Ok(w) = omega_at(u, guess.get()) else {
            continue;
        };
        let (c, (cu, cw)) = surface.value_and_gradient(u, w)?;
        let cuu = surface.second_derivative_u(u, w)?;
        folds.push(FoldPoint {
            u_bar: u,
            omega: w,
            c_value: c,
            dc_du: cu,
            d2c_du2: cuu,
            dc_domega: cw,
            degenerate: cuu.abs() * u_extent <= FOLD_DEGENERACY * grad_scale,
            after_index: i,
        });
    }
    Ok(folds)
}

/// `∂∠G_ū(iω)/∂ū` at a fold, by central differences on the unwrapped phase.
pub fn phase_extremum_check(plant: &dyn PlantModel, omega: f64, u_bar: f64) -> Result<f64> {
    let h = u_step(u_bar);
    let phase_at = |u: f64| -> Result<f64> {
        let g = plant_response(&linearize(plant, &equilibrium_at(plant, u)?), omega)?;
        if g.magnitude <= 1e-9 {
            return Err(EscError::DegenerateResponse { u, magnitude: g.magnitude });
        }
        Ok(g.phase)
    };
    phase_at(u_bar)?;
    let diff = reduce_mod_pi(phase_at(u_bar + h)? - phase_at(u_bar - h)?);
    Ok(diff / (2.0 * h))
}

/// Roots of `C(·, ω)` on `[lo, hi]` from a scan uniform in the chart.
pub fn scan_roots<S: ConditionSurface + ?Sized>(
    surface: &S,
    omega: f64,
    (lo, hi): (f64, f64),
    grid: usize,
    chart: Chart,
    tolerance: f64,
) -> Result<Vec<f64>> {
    if grid < 2 {
        return Err(EscError::InvalidInput(format!("scan grid needs at least 2 points, got {grid}")));
    }
    let (p0, p1) = (chart.to_chart(lo), chart.to_chart(hi));
    let us: Vec<f64> = (0..grid)
        .map(|i| if i + 1 == grid { hi } else { chart.from_chart(p0 + (p1 - p0) * i as f64 / (grid - 1) as f64) })
        .collect();
    let cs: Vec<f64> = us.par_iter().map(|&u| surface.value(u, omega)).collect::<Result<_>>()?;
    let brackets: Vec<usize> = (0..grid - 1).filter(|&i| cs[i] != 0.0 && cs[i] * cs[i + 1] < 0.0).collect();
    let mut roots: Vec<f64> = brackets
        .par_iter()
        .map(|&i| refine_bracket(|u| surface.value(u, omega), (us[i], cs[i]), (us[i + 1], cs[i + 1]), tolerance).map(|r| r.0))
        .collect::<Result<_>>()?;
    roots.extend((0..grid).filter(|&i| cs[i] == 0.0).map(|i| us[i]));
    roots.sort_by(f64::total_cmp);
    Ok(roots)
}

/// Maximum `|C|` over a chart-uniform scan at one frequency; sets the corrector tolerance scale.
pub fn condition_scale<S: ConditionSurface + ?Sized>(
    surface: &S,
    omega: f64,
    (lo, hi): (f64, f64),
    grid: usize,
    chart: Chart,
) -> Result<f64> {
    let (p0, p1) = (chart.to_chart(lo), chart.to_chart(hi));
    let vals: Vec<f64> = (0..grid)
        .into_par_iter()
        .map(|i| surface.value(chart.from_chart(p0 + (p1 - p0) * i as f64 / (grid - 1).max(1) as f64), omega))
        .collect::<Result<_>>()?;
    Ok(vals.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub omega_range: (f64, f64),
    /// Frequencies at which roots are collected as seeds.
    pub seed_omegas: usize,
    /// Scan resolution in `ū` at each seed frequency.
    pub scan_grid: usize,
    pub trace: TraceOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationDiagram {
    pub branches: Vec<SolutionBranch>,
}

impl BifurcationDiagram {
    /// All folds as `(branch index, fold)`.
    pub fn folds(&self) -> Vec<(usize, FoldPoint)> {
        self.branches.iter().enumerate().flat_map(|(i, b)| b.folds.iter().map(move |f| (i, *f))).collect()
    }

    /// Index of the branch passing closest to `(ū, ω)` in chart distance.
    pub fn branch_near(&self, u: f64, omega: f64, chart: Chart) -> Option<usize> {
        let target = [chart.to_chart(u), chart.to_chart(omega)];
        self.branches
            .iter()
            .enumerate()
            .map(|(i, b)| (i, distance_to_branch(b, target, chart)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }
}

fn distance_to_branch(branch: &SolutionBranch, x: [f64; 2], chart: Chart) -> f64 {
    let pts: Vec<[f64; 2]> = branch.points.iter().map(|p| [chart.to_chart(p.u_bar), chart.to_chart(p.omega)]).collect();
    if pts.len() == 1 {
        return (pts[0][0] - x[0]).hypot(pts[0][1] - x[1]);
    }
    pts.windows(2)
        .map(|w| {
            let d = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
            let len2 = d[0] * d[0] + d[1] * d[1];
            let s = if len2 > 0.0 { (((x[0] - w[0][0]) * d[0] + (x[1] - w[0][1]) * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
            (w[0][0] + s * d[0] - x[0]).hypot(w[0][1] + s * d[1] - x[1])
        })
        .fold(f64::INFINITY, f64::min)
}

/// Seeds branches from root scans on a chart-uniform frequency grid and
/// traces every root not already covered by a traced branch.
pub fn sweep_diagram<S: ConditionSurface + ?Sized>(surface: &S, opts: SweepOptions) -> Result<BifurcationDiagram> {
    let chart = opts.trace.chart;
    let (w0, w1) = opts.omega_range;
    let n = opts.seed_omegas.max(1);
    let omegas: Vec<f64> = (0..n)
        .map(|i| {
            let s = (i as f64 + 0.5) / n as f64;
            chart.from_chart(chart.to_chart(w0) + s * (chart.to_chart(w1) - chart.to_chart(w0)))
        })
        .collect();
    let domain = surface.u_domain();
    let seeds: Vec<Vec<f64>> = omegas
        .par_iter()
        .map(|&w| scan_roots(surface, w, domain, opts.scan_grid, chart, opts.trace.tolerance))
        .collect::<Result<_>>()?;

    let mut branches: Vec<SolutionBranch> = Vec::new();
    let covered = |branches: &[SolutionBranch], u: f64, w: f64| {
        let x = [chart.to_chart(u), chart.to_chart(w)];
        branches.iter().any(|b| distance_to_branch(b, x, chart) < 0.5 * opts.trace.step)
    };
    for (&w, roots) in omegas.iter().zip(&seeds) {
        let fresh: Vec<f64> = roots.iter().copied().filter(|&u| !covered(&branches, u, w)).collect();
        let traced: Vec<SolutionBranch> = fresh
            .par_iter()
            .map(|&u| trace_branch(surface, (u, w), opts.omega_range, opts.trace))
            .collect::<Result<_>>()?;
        for (u, b) in fresh.into_iter().zip(traced) {
            let stray = b.points.len() < 3 && b.ends == (Termination::DegenerateCondition, Termination::DegenerateCondition);
            if !stray && !covered(&branches, u, w) {
                branches.push(b);
            }
        }
    }
    Ok(BifurcationDiagram { branches })
}

/// Sweep settings resolving the reactor's low-input branches.
pub fn default_sweep(omega_range: (f64, f64), tolerance: f64) -> SweepOptions {
    SweepOptions {
        omega_range,
        seed_omegas: 12,
        scan_grid: 2000,
        trace: TraceOptions { step: 0.02, tolerance, chart: Chart::Logarithmic },
    }
}

/// Corrector tolerance for a plant: `ROOT_TOL` times the scan scale of `C` at `omega`.
pub fn plant_tolerance(surface: &PlantCondition<'_>, omega: f64, chart: Chart) -> Result<f64> {
    Ok(ROOT_TOL * condition_scale(surface, omega, surface.u_domain(), 2000, chart)?)
}
