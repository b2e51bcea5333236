//! The discretized reactor against its closed-form steady state and the
//! continuous plug-flow optimum.

use esc_core::bench::{build_reactor, ReactorConfig};
use esc_core::plant::{equilibrium_at, linearize, PlantModel};
use esc_core::stationarity::steady_state_extrema;

/// Cell-by-cell steady state of the upwind chain, `(a, b)` per cell.
fn chain(cfg: &ReactorConfig, v: f64) -> (Vec<f64>, Vec<f64>) {
    let q = v * cfg.n_cells as f64;
    let (mut a, mut b) = (cfg.a0, cfg.b0);
    let mut out = (Vec::new(), Vec::new());
    for _ in 0..cfg.n_cells {
        a = q * a / (q + cfg.k1);
        b = (q * b + cfg.k1 * a) / (q + cfg.k2);
        out.0.push(a);
        out.1.push(b);
    }
    out
}

fn exit_b(cfg: &ReactorConfig, v: f64) -> f64 {
    *chain(cfg, v).1.last().unwrap()
}

/// Golden-section maximum of the closed form on `[lo, hi]`.
fn oracle_argmax(cfg: &ReactorConfig, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-12 {
        let (x1, x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if exit_b(cfg, x1) < exit_b(cfg, x2) {
            lo = x1;
        } else {
            hi = x2;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn equilibrium_matches_closed_form_chain() {
    let cfg = ReactorConfig::default();
    let plant = build_reactor(cfg.clone()).unwrap();
    for v in [0.05, 0.25, 0.7] {
        let eq = equilibrium_at(&plant, v).unwrap();
        let (a, b) = chain(&cfg, v);
        let rho = 1.0 / (1.0 + cfg.k1 / (v * cfg.n_cells as f64));
        for j in 0..cfg.n_cells {
            assert!((eq.x_bar[j] - a[j]).abs() < 1e-12, "a_{j} at v = {v}");
            assert!((a[j] - cfg.a0 * rho.powi(j as i32 + 1)).abs() < 1e-14);
            assert!((eq.x_bar[cfg.n_cells + j] - b[j]).abs() < 1e-12, "b_{j} at v = {v}");
        }
        assert!((plant.output(eq.x_bar.as_slice()) - b[cfg.n_cells - 1]).abs() < 1e-12);
    }
}

#[test]
fn discretized_argmax_matches_closed_form() {
    let cfg = ReactorConfig::default();
    let plant = build_reactor(cfg.clone()).unwrap();
    let found = steady_state_extrema(&plant, (0.02, 1.2), 2000).unwrap();
    assert_eq!(found.len(), 1);
    let oracle = oracle_argmax(&cfg, 0.1, 0.5);
    assert!((found[0] - oracle).abs() < 1e-8, "{} vs {oracle}", found[0]);
    // O(1/n) from the continuous optimum.
    let v_star = cfg.continuous_optimum();
    assert!((v_star - 0.2505).abs() < 1e-4);
    assert!((found[0] - v_star).abs() < 1.0 / cfg.n_cells as f64);
}

#[test]
fn continuous_profile_is_the_fine_grid_limit() {
    let v = 0.3;
    let base = ReactorConfig::default();
    let exact = base.a0 * base.k1 * ((-base.k2 / v).exp() - (-base.k1 / v).exp()) / (base.k1 - base.k2);
    let err = |n: usize| (exit_b(&ReactorConfig { n_cells: n, ..base.clone() }, v) - exact).abs();
    assert!(err(4000) < 1e-3 * exact);
    assert!(err(4000) < err(400) / 5.0);
}

#[test]
fn argmax_converges_at_first_order() {
    let v_star = ReactorConfig::default().continuous_optimum();
    let errs: Vec<f64> = [20, 40, 80]
        .iter()
        .map(|&n| {
            let plant = build_reactor(ReactorConfig { n_cells: n, ..Default::default() }).unwrap();
            (steady_state_extrema(&plant, (0.02, 1.2), 1000).unwrap()[0] - v_star).abs()
        })
        .collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.6..2.4).contains(&ratio), "{errs:?}");
    }
}

#[test]
fn steady_state_gain_is_slope_of_closed_form() {
    let cfg = ReactorConfig::default();
    let plant = build_reactor(cfg.clone()).unwrap();
    let mut max_gain = 0.0f64;
    for v in [0.05, 0.1, 0.25, 0.5, 1.0] {
        let gain = linearize(&plant, &equilibrium_at(&plant, v).unwrap()).steady_state_gain().unwrap();
        let h = 1e-6 * v;
        let fd = (exit_b(&cfg, v + h) - exit_b(&cfg, v - h)) / (2.0 * h);
        assert!((gain - fd).abs() < 1e-6 * (1.0 + fd.abs()), "v = {v}: {gain} vs {fd}");
        max_gain = max_gain.max(gain.abs());
    }
    let at_opt = linearize(&plant, &equilibrium_at(&plant, 0.25).unwrap()).steady_state_gain().unwrap();
    assert!(at_opt.abs() < 0.01 * max_gain);
}

#[test]
fn slowest_pole_scales_with_velocity() {
    // A is lower triangular, so its poles are the diagonal −v·n − k1 and −v·n − k2.
    // They are 40-fold defective, so a dense eigensolver would scatter them.
    let cfg = ReactorConfig::default();
    let plant = build_reactor(cfg.clone()).unwrap();
    let n = cfg.n_cells;
    for v in [0.05, 0.2, 0.8] {
        let a = linearize(&plant, &equilibrium_at(&plant, v).unwrap()).a;
        for r in 0..2 * n {
            for c in r + 1..2 * n {
                assert_eq!(a[(r, c)], 0.0);
            }
        }
        let slowest = a.diagonal().iter().map(|d| d.abs()).fold(f64::INFINITY, f64::min);
        assert!((slowest - (v * n as f64 + cfg.k2)).abs() < 1e-12, "v = {v}: {slowest}");
    }
}
