use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use weak_imcf::geometry::{slice_geometry, WarpProfile};
use weak_imcf::neck::*;

/// Smallest eigenvalue of the same discretization via a dense symmetric solver.
fn dense_mu(s: &AxisymSurface) -> f64 {
    let (d, e) = s.symmetric_operator();
    let n = d.len();
    let m = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            d[i]
        } else if i + 1 == j {
            e[i]
        } else if j + 1 == i {
            e[j]
        } else {
            0.0
        }
    });
    SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

fn random_surface(rng: &mut SplitMix64, n: usize) -> AxisymSurface {
    let amp = rng.random_range(-0.3..0.3);
    let mode = rng.random_range(1..4u32);
    let s = AxisymSurface::perturbed_round(rng.random_range(0.5..2.0), amp, mode, n).unwrap();
    let w: Vec<f64> = (0..=n).map(|_| rng.random_range(-2.0..2.0)).collect();
    s.with_potential(w).unwrap()
}

#[test]
fn dense_oracle_agreement() {
    let mut rng = SplitMix64::seed_from_u64(401);
    for _ in 0..20 {
        let s = random_surface(&mut rng, 400);
        let e = stability_first_eigen(&s).unwrap();
        let oracle = dense_mu(&s);
        assert!(
            (e.mu - oracle).abs() <= 1e-8 * oracle.abs().max(1.0),
            "mu {} vs dense {oracle}",
            e.mu
        );
        assert!(e.phi.iter().all(|&p| p > 0.0));
        assert!((e.phi.iter().copied().fold(0.0, f64::max) - 1.0).abs() < 1e-15);
    }
}

#[test]
fn rayleigh_quotient_bounds_mu_from_above() {
    let mut rng = SplitMix64::seed_from_u64(77);
    let s = random_surface(&mut rng, 200);
    let mu = stability_first_eigen(&s).unwrap().mu;
    for _ in 0..100 {
        let f: Vec<f64> = (0..=200).map(|_| rng.random_range(0.01..1.0)).collect();
        assert!(mu <= s.rayleigh_quotient(&f) + 1e-12 * mu.abs().max(1.0));
    }
}

#[test]
fn eigenvalue_converges_at_second_order() {
    let mu = |n: usize| {
        let s = AxisymSurface::perturbed_round(1.0, 0.2, 2, n).unwrap();
        let w = s.theta().iter().map(|t| 1.0 + 0.5 * t.cos() + 0.3 * t.cos().powi(2)).collect();
        stability_first_eigen(&s.with_potential(w).unwrap()).unwrap().mu
    };
    let (a, b, c) = (mu(100), mu(200), mu(400));
    let ratio = (a - b) / (b - c);
    assert!((3.5..=4.5).contains(&ratio), "refinement ratio {ratio}");
}

#[test]
fn round_sphere_radius_a() {
    for a in [0.5, 1.0, 3.0] {
        let s = AxisymSurface::round(a, 0.0, 100).unwrap();
        let ones = vec![1.0; 101];
        let neck = build_neck(&s, &ones, 0.0, 1.0).unwrap();
        assert!(neck.scalar_curvature().iter().all(|r| (r - 2.0 / (a * a)).abs() < 1e-12));
        // boundary case λ = 2/a²
        let lambda = 2.0 / (a * a);
        let neck = build_neck(&s, &ones, lambda, 1.0).unwrap();
        assert!(neck.scalar_curvature().iter().all(|r| (r - lambda).abs() < 1e-12));
    }
}

#[test]
fn perturbed_neck_meets_the_floor() {
    let mut rng = SplitMix64::seed_from_u64(5);
    for _ in 0..5 {
        let amp = rng.random_range(-0.2..0.2);
        let lambda = rng.random_range(0.2..1.0);
        let s = AxisymSurface::perturbed_round(1.0, amp, 2, 400)
            .unwrap()
            .with_stability_potential(lambda);
        let e = stability_first_eigen(&s).unwrap();
        assert!(e.mu >= 0.0, "test surface must be stable, mu = {}", e.mu);
        let neck = build_neck(&s, &e.phi, lambda, 2.0).unwrap();
        assert!(neck.min_scalar_curvature() >= lambda - 1e-6);
        // R = λ + 2μ identically for the discrete first eigenfunction
        for r in neck.scalar_curvature() {
            assert!((r - (lambda + 2.0 * e.mu)).abs() < 1e-6);
        }
    }
}

#[test]
fn violated_inequality_is_reported() {
    let s = AxisymSurface::round(1.0, 0.0, 50).unwrap();
    let err = build_neck(&s, &vec![1.0; 51], 2.5, 1.0).unwrap_err();
    match err {
        NeckError::EigenInequalityViolated { deficit, .. } => assert!((deficit - 0.25).abs() < 1e-12),
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(
        build_neck(&s, &vec![-1.0; 51], 0.0, 1.0),
        Err(NeckError::NonPositiveEigenfunction { .. })
    ));
}

#[test]
fn warped_formula_matches_cylinder_geometry() {
    for a in [0.4, 0.9, 1.0, 2.5, 7.0] {
        let s = AxisymSurface::round(a, 0.0, 64).unwrap();
        let neck = build_neck(&s, &vec![1.0; 65], 0.0, 3.0).unwrap();
        let cyl = neck.to_warp_profile(32).unwrap();
        assert_eq!(cyl, WarpProfile::cylinder(a, 0.0, 3.0, 32).unwrap());
        let ambient = slice_geometry(&cyl, 1.5).unwrap().scalar_curvature_ambient;
        for r in neck.scalar_curvature() {
            assert!((r - ambient).abs() < 1e-8);
        }
    }
}

#[test]
fn non_round_neck_is_not_a_warped_line() {
    let s = AxisymSurface::perturbed_round(1.0, 0.1, 2, 64).unwrap().with_stability_potential(0.5);
    let e = stability_first_eigen(&s).unwrap();
    let neck = build_neck(&s, &e.phi, 0.5, 1.0).unwrap();
    assert!(neck.to_warp_profile(16).is_err());
}

#[test]
fn barrier_monotone_in_the_proof_regime() {
    let mut rng = SplitMix64::seed_from_u64(9);
    for _ in 0..200 {
        let a0 = rng.random_range(0.1..100.0);
        let c0 = rng.random_range(1e-3..1.0) * a0;
        assert!(barrier_length(a0, c0).unwrap().holds);
    }
    let b = barrier_length(4.0 * PI, 1.0).unwrap();
    assert_eq!((b.length, b.crossing_bound), (64.0 * PI, 100.0));
    assert!((b.required - 8.0 * PI).abs() < 1e-15);
    assert_eq!(barrier_length(1.0, 1.0).unwrap().crossing_bound, 8.0);
    assert_eq!(monotonicity_area_bound(2.0, 1.0, DEFAULT_MONOTONICITY_EXPONENT), 2.0);
    assert_eq!(monotonicity_area_bound(2.0, 3.0, 2), 18.0);
}

#[test]
fn surface_text_round_trip() {
    let s = AxisymSurface::perturbed_round(1.3, 0.1, 3, 40).unwrap().with_stability_potential(0.7);
    assert_eq!(AxisymSurface::from_text(&s.to_text()).unwrap(), s);
}
