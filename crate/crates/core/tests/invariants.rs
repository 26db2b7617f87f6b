//! Symmetries the measured ratios must respect.

use orthoplap::scenario::find_standard;
use orthoplap::solver::{coons_extension, epsilon_ladder, SolveConfig};
use orthoplap::verify::{
    default_min_radius, measure_caccioppoli, measure_energy_estimate, measure_grad_l2, measure_lipschitz,
    measure_oscillation_profile, radii_ladder, OscillationProfile,
};
use orthoplap::{BallSpec, EnergyParams, Grid, ScalarField};

const R: f64 = 0.8;

fn solve(boundary: &ScalarField, p: f64) -> (ScalarField, EnergyParams) {
    let cfg = SolveConfig {
        tol_residual: 1e-13,
        ..SolveConfig::default()
    };
    let (fields, ladder) = epsilon_ladder(boundary, p, 1e-2, 3, &BallSpec::new(R), &cfg).unwrap();
    let eps = *ladder.eps.last().unwrap();
    (fields.last().unwrap().clone(), EnergyParams::new(p, eps).unwrap())
}

fn profile(u: &ScalarField, p: f64) -> OscillationProfile {
    let radii = radii_ladder(R, 6, default_min_radius(u.grid(), R)).unwrap();
    measure_oscillation_profile(u, p, R, &radii).unwrap()
}

fn ratios(u: &ScalarField, params: &EnergyParams) -> Vec<f64> {
    let ext = coons_extension(u);
    vec![
        measure_lipschitz(u, params, R).unwrap().value(),
        measure_grad_l2(u, &ext, params, R).unwrap().value(),
        measure_caccioppoli(u, params, R).unwrap().value(),
        measure_energy_estimate(u, &ext, params, R).unwrap().value(),
    ]
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

#[test]
fn translating_the_scenario_with_the_grid() {
    let s = find_standard("oscillatory").unwrap();
    let base = Grid::new(65, 2.0, [0.0, 0.0]).unwrap();
    let h = base.h();
    let shift = [5.0 * h, -3.0 * h];
    let moved = Grid::new(65, 2.0, shift).unwrap();
    let a = ScalarField::from_fn(base, |x| s.eval(x)).unwrap();
    let b = ScalarField::from_fn(moved, |x| s.eval([x[0] - shift[0], x[1] - shift[1]])).unwrap();
    let (ua, pa) = solve(&a, s.p);
    let (ub, pb) = solve(&b, s.p);
    let (fa, fb) = (profile(&ua, s.p), profile(&ub, s.p));
    for j in 0..2 {
        for (x, y) in fa.measured_c[j].iter().zip(&fb.measured_c[j]) {
            assert!(rel(*x, *y) < 1e-9, "{x} vs {y}");
        }
    }
    for (x, y) in ratios(&ua, &pa).into_iter().zip(ratios(&ub, &pb)) {
        assert!(rel(x, y) < 1e-9, "{x} vs {y}");
    }
}

#[test]
fn exchanging_the_axes_swaps_the_profiles() {
    let s = find_standard("oscillatory").unwrap();
    let grid = Grid::new(65, 2.0, [0.0, 0.0]).unwrap();
    let data = s.boundary_field(grid).unwrap();
    let (u, params) = solve(&data, s.p);
    let (ut, _) = solve(&data.transposed(), s.p);
    let expect = u.transposed();
    let scale = u.sup_norm();
    assert!(ut.max_abs_diff(&expect, None).unwrap() <= 1e-9 * scale);
    let (f, ft) = (profile(&u, s.p), profile(&ut, s.p));
    for j in 0..2 {
        for (x, y) in f.measured_c[j].iter().zip(&ft.measured_c[1 - j]) {
            assert!(rel(*x, *y) < 1e-9, "{x} vs {y}");
        }
    }
    for (x, y) in ratios(&u, &params).into_iter().zip(ratios(&ut, &params)) {
        assert!(rel(x, y) < 1e-9, "{x} vs {y}");
    }
}

#[test]
fn scaling_data_and_eps_together() {
    let s = find_standard("ustar_p1.5").unwrap();
    let grid = Grid::new(65, 2.0, [0.0, 0.0]).unwrap();
    let data = s.boundary_field(grid).unwrap();
    let (u, params) = solve(&data, s.p);
    let lambda = 3.0;
    let cfg = SolveConfig {
        tol_residual: 1e-13,
        ..SolveConfig::default()
    };
    let (fields, ladder) =
        epsilon_ladder(&data.scaled(lambda), s.p, 1e-2 * lambda * lambda, 3, &BallSpec::new(R), &cfg).unwrap();
    let scaled = fields.last().unwrap();
    let scaled_params = EnergyParams::new(s.p, *ladder.eps.last().unwrap()).unwrap();
    assert!(scaled.max_abs_diff(&u.scaled(lambda), None).unwrap() <= 1e-9 * lambda * u.sup_norm());
    assert!(rel(profile(&u, s.p).sup_c, profile(scaled, s.p).sup_c) < 1e-9);
    for (x, y) in ratios(&u, &params).into_iter().zip(ratios(scaled, &scaled_params)) {
        assert!(rel(x, y) < 1e-9, "{x} vs {y}");
    }
}
