use esc_core::bench::{build_reactor, ReactorConfig};
use esc_core::plant::{equilibrium_at, linearize};
use esc_core::stationarity::{steady_state_extrema, uniform_grid};
use esc_core::zeros::{transmission_zeros, zero_crossing_scan};

#[test]
fn crossing_zero_passes_the_origin_at_the_optimum() {
    let plant = build_reactor(ReactorConfig::default()).unwrap();
    let v_star = steady_state_extrema(&plant, (0.02, 1.2), 2000).unwrap()[0];
    let at = |v: f64| transmission_zeros(&linearize(&plant, &equilibrium_at(&plant, v).unwrap())).unwrap();

    let z = at(v_star).crossing_zero.expect("crossing zero at the optimum");
    assert!(z.abs() < 1e-3, "{z}");

    let mut checked = 0;
    for dv in [-3e-4, -1e-4, 1e-4, 3e-4] {
        let set = at(v_star + dv);
        let (Some(z), Some(m)) = (set.crossing_zero, set.maclaurin_zero) else { continue };
        if z.abs() < 0.05 {
            assert!((m - z).abs() <= 0.1 * z.abs(), "v = {}: {z} vs {m}", v_star + dv);
            checked += 1;
        }
    }
    assert_eq!(checked, 4);
}

#[test]
fn one_sign_change_within_a_cell_of_the_argmax() {
    let plant = build_reactor(ReactorConfig::default()).unwrap();
    let v_star = steady_state_extrema(&plant, (0.02, 1.2), 2000).unwrap()[0];
    let grid = uniform_grid(0.1, 0.6, 101);
    let scan = zero_crossing_scan(&plant, &grid).unwrap();
    assert_eq!(scan.zero_sign_changes.len(), 1);
    let i = scan.zero_sign_changes[0];
    assert!(grid[i] <= v_star && v_star <= grid[i + 1], "[{}, {}] vs {v_star}", grid[i], grid[i + 1]);
    assert_eq!(scan.gain_sign_changes, vec![i]);
}
