use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use weak_imcf::audit::*;
use weak_imcf::geometry::WarpProfile;
use weak_imcf::imcf::solve_weak_imcf;
use weak_imcf::models::random_psc_dumbbell;
use weak_imcf::trace::{line_trace, FlowTrace};

fn flat_trace() -> FlowTrace {
    let sol = solve_weak_imcf(&WarpProfile::flat(1.0, 20.0, 4096).unwrap(), 1.0).unwrap();
    line_trace(&sol).unwrap()
}

fn dumbbell_trace(seed: u64) -> FlowTrace {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let p = random_psc_dumbbell(&mut rng, 1.0, (0.2, 0.32), 20.0, 4096);
    line_trace(&solve_weak_imcf(&p, 0.0).unwrap()).unwrap()
}

#[test]
fn flat_trace_is_the_equality_case() {
    let tr = flat_trace();
    let mut rng = SplitMix64::seed_from_u64(1);
    for _ in 0..50 {
        let a = rng.random_range(0.0..tr.t_end());
        let b = rng.random_range(0.0..tr.t_end());
        let o = geroch_check(&tr, a.min(b), a.max(b), 1.0).unwrap();
        assert!(o.pass && o.residual.abs() <= o.tol);
    }
    assert_eq!(geroch_check(&tr, 1.0, 1.0, 1.0).unwrap().residual, 0.0);

    let o = gronwall_bound(&tr, 0.0, 1.0, 1.0).unwrap();
    assert!(o.pass);
    assert!((o.lhs - o.rhs).abs() <= o.tol);
    // evaluated at the last sample with time ≤ 1: both sides are 16π there
    assert!((o.lhs - 16.0 * PI).abs() < 1e-9);
    assert!((o.rhs - 16.0 * PI).abs() <= o.tol);

    let o = gronwall_bound(&tr, 0.0, 0.0, 1.0).unwrap();
    assert_eq!((o.lhs, o.rhs), (16.0 * PI, 16.0 * PI));

    let m = hawking_monotone_check(&tr, 1.0).unwrap();
    assert!(m.pass);
    assert!(tr.samples().iter().all(|s| s.hawking.abs() <= 1e-4));
}

#[test]
fn jumps_only_lower_willmore() {
    let mut seen = 0;
    for seed in 0..40 {
        let tr = dumbbell_trace(seed);
        let s = tr.samples();
        // in-flow jumps are stored as a before/after pair at one time
        let jumps: Vec<usize> = (1..s.len()).filter(|&k| s[k].is_jump && s[k].t == s[k - 1].t).collect();
        seen += jumps.len();
        for k in jumps {
            let o = geroch_between(&tr, k - 1, k, 1.0).unwrap();
            assert!(o.contains_jump && o.residual <= 0.0 && o.pass);
            let wide = geroch_between(&tr, k.saturating_sub(40), (k + 40).min(s.len() - 1), 1.0).unwrap();
            assert!(wide.contains_jump && wide.pass);
        }
    }
    assert!(seen >= 3, "only {seen} in-flow jumps");
}

#[test]
fn geroch_residual_is_additive() {
    let tr = dumbbell_trace(11);
    let n = tr.len();
    let mut rng = SplitMix64::seed_from_u64(2);
    for _ in 0..30 {
        let mut idx = [rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n)];
        idx.sort();
        let [i, j, k] = idx;
        let whole = geroch_between(&tr, i, k, 1.0).unwrap().residual;
        let parts = geroch_between(&tr, i, j, 1.0).unwrap().residual + geroch_between(&tr, j, k, 1.0).unwrap().residual;
        assert!((whole - parts).abs() <= 1e-9 * (1.0 + whole.abs()));
    }
}

#[test]
fn psc_dumbbell_gronwall_and_injection() {
    for seed in 0..3 {
        let tr = dumbbell_trace(seed);
        let lambda = tr.samples()[tr.len() - 1].min_r;
        assert!(lambda > 0.0);
        assert!(gronwall_bound(&tr, lambda, 2f64.ln(), 1.0).unwrap().pass);
        assert!(gronwall_sweep(&tr, lambda, 1.0).unwrap().iter().all(|o| o.pass));
        assert!(geroch_sweep(&tr, 1.0).unwrap().0.pass);
        assert!(!geroch_sweep(&tr.with_inflated_willmore(1.01), 1.0).unwrap().0.pass);
        let m = hawking_monotone_check(&tr, 1.0).unwrap();
        assert!(m.pass);
        assert!(audit_trace(&tr, &AuditOptions::default()).passed());
    }
}

#[test]
fn schwarzschild_hawking_mass_is_constant() {
    let p = WarpProfile::schwarzschild(1.0, 3.0, 40.0, 8192).unwrap();
    let tr = line_trace(&solve_weak_imcf(&p, p.r_min()).unwrap()).unwrap();
    assert!(tr.samples().iter().all(|s| (s.hawking - 1.0).abs() <= 1e-4));
    let o = hawking_monotone_check(&tr, 1.0).unwrap();
    assert!(o.pass && o.residual.abs() <= o.tol);
}

#[test]
fn bound_examples() {
    let c = gap_constant();
    let a0 = 4.0 * PI;
    let at = |x: f64| x * PI / a0;
    assert!(gap_certificate(at(5.0), a0).unwrap().pass);
    assert!(gap_certificate(0.0, a0).unwrap().pass);
    assert!(!gap_certificate(at(8.0), a0).unwrap().pass);
    assert!(bbn_bound(at(8.0), a0).unwrap().pass);
    assert!(!bbn_bound(at(8.1), a0).unwrap().pass);
    assert!(bbn_bound(c / a0, a0).unwrap().pass);
    assert!(gap_certificate(c / a0, a0).unwrap().pass);
    let v = gap_certificate(at(6.0), a0).unwrap();
    assert!(!v.pass && v.log2_margin < 0.0);
    assert!(v.form_discrepancy <= 1e-12);
    assert!(matches!(bbn_bound(-1.0, a0), Err(AuditError::InvalidInput(_))));
}

#[test]
fn csv_round_trip_and_reaudit() {
    let tr = dumbbell_trace(7);
    let csv = tr.to_csv();
    let back = FlowTrace::from_csv(&csv).unwrap();
    assert_eq!(back.to_csv(), csv);
    // without the stored curvature integral only the one-sided check runs
    assert!(!back.has_exact_curvature());
    let report = audit_trace(&back, &AuditOptions::default());
    assert!(report.passed(), "{}", report.to_text());
    assert!(!geroch_sweep(&back.with_inflated_willmore(1.01), 1.0).unwrap().0.pass);
}

#[test]
fn floor_above_the_trace_is_rejected() {
    let tr = dumbbell_trace(3);
    let lambda = tr.samples()[tr.len() - 1].min_r;
    assert!(matches!(
        gronwall_bound(&tr, 2.0 * lambda + 1.0, 1.0, 1.0),
        Err(AuditError::CurvatureFloorViolated { .. })
    ));
}
