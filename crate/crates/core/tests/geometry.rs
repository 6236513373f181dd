use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use weak_imcf::geometry::*;

/// Arclength from the horizon by Simpson's rule after `s = 2m + v²`, which
/// turns the singular integrand `(1 − 2m/s)^{-1/2}` into `2√(2m + v²)`.
fn arclength_oracle(m: f64, s: f64) -> f64 {
    let vmax = (s - 2.0 * m).sqrt();
    let n = 20_000;
    let h = vmax / n as f64;
    let f = |v: f64| 2.0 * (2.0 * m + v * v).sqrt();
    let mut sum = f(0.0) + f(vmax);
    for i in 1..n {
        sum += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

#[test]
fn schwarzschild_arclength_matches_quadrature() {
    for (m, s) in [(1.0, 2.5), (1.0, 4.0), (1.0, 40.0), (0.3, 1.0), (5.0, 12.0)] {
        let exact = arclength_oracle(m, s);
        assert!((schwarzschild_arclength(m, s) - exact).abs() < 1e-10 * exact.max(1.0));
        assert!((schwarzschild_area_radius(m, exact) - s).abs() < 1e-9 * s);
    }
}

#[test]
fn schwarzschild_slice_of_area_radius_four() {
    let p = WarpProfile::schwarzschild(1.0, 3.0, 40.0, 8192).unwrap();
    let r = arclength_oracle(1.0, 4.0);
    let g = slice_geometry(&p, r).unwrap();
    assert!((g.area - 64.0 * PI).abs() < 1e-8 * 64.0 * PI);
    assert!((g.hawking_mass - 1.0).abs() < 1e-10);
    assert!(g.scalar_curvature_ambient.abs() < 1e-10);
    // the same slice through finite differences of the knot data
    let sampled = p.to_sampled().unwrap();
    let gs = slice_geometry(&sampled, r).unwrap();
    assert!((gs.hawking_mass - 1.0).abs() < 1e-4);
    assert!((gs.area - 64.0 * PI).abs() < 1e-6 * 64.0 * PI);
}

#[test]
fn hawking_mass_constant_along_schwarzschild_knots() {
    let p = WarpProfile::schwarzschild(1.0, 3.0, 40.0, 8192).unwrap().to_sampled().unwrap();
    for &r in p.grid().iter().step_by(97) {
        let m = slice_geometry(&p, r).unwrap().hawking_mass;
        assert!((m - 1.0).abs() < 1e-4, "m_H = {m} at r = {r}");
    }
}

#[test]
fn finite_differences_are_second_order() {
    let phi = |r: f64| 1.0 + r + 0.1 * (3.0 * r).sin();
    let dphi = |r: f64| 1.0 + 0.3 * (3.0 * r).cos();
    let ddphi = |r: f64| -0.9 * (3.0 * r).sin();
    let exact = warped_scalar_curvature(Jet {
        phi: phi(1.0),
        dphi: dphi(1.0),
        ddphi: ddphi(1.0),
    });
    let err = |n: usize| {
        let grid: Vec<f64> = (0..=n).map(|i| 2.0 * i as f64 / n as f64).collect();
        let p = WarpProfile::sampled(grid.clone(), grid.iter().map(|&r| phi(r)).collect()).unwrap();
        (slice_geometry(&p, 1.0).unwrap().scalar_curvature_ambient - exact).abs()
    };
    let (a, b, c) = (err(64), err(128), err(256));
    for ratio in [a / b, b / c] {
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn text_round_trip_is_byte_identical() {
    let mut rng = SplitMix64::seed_from_u64(3);
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
    let phi: Vec<f64> = grid.iter().map(|r| 1.0 + r + rng.random_range(0.0..1e-3)).collect();
    let profiles = [
        WarpProfile::sampled(grid, phi).unwrap(),
        WarpProfile::schwarzschild(1.0, 3.0, 40.0, 64).unwrap(),
        WarpProfile::round_sphere(1.0, 0.1, 3.0, 32).unwrap(),
        WarpProfile::cylinder(2.0, 0.0, 1.0, 16).unwrap(),
    ];
    for p in profiles {
        let text = p.to_text();
        let back = WarpProfile::from_text(&text).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.to_text(), text);
    }
}

#[test]
fn umbilic_slices_and_willmore_identity() {
    let mut rng = SplitMix64::seed_from_u64(12);
    let p = WarpProfile::round_sphere(1.5, 0.2, 4.0, 256).unwrap();
    for _ in 0..50 {
        let r = rng.random_range(0.2..4.0);
        let g = slice_geometry(&p, r).unwrap();
        assert_eq!(g.traceless_a_norm, 0.0);
        assert!((g.willmore - g.mean_curvature.powi(2) * g.area).abs() < 1e-10 * g.willmore.max(1.0));
        assert!((g.scalar_curvature_ambient - 6.0 / 2.25).abs() < 1e-10);
    }
}
