//! Parametrized model geometries used by the scenario runner and the test
//! suites: PSC dumbbells and balanced or unbalanced branching trees.

use std::f64::consts::PI;

use rand::Rng;

use crate::geometry::{slice_geometry, GeometryError, ProfileKind, WarpProfile};
use crate::tree::{EdgeSpec, TreeSpec};

/// Smallest ambient scalar curvature over the knots of `p`.
pub fn min_scalar_curvature(p: &WarpProfile) -> Result<f64, GeometryError> {
    p.grid().iter().try_fold(f64::INFINITY, |m, &r| {
        Ok(m.min(slice_geometry(p, r)?.scalar_curvature_ambient))
    })
}

/// Whether the slice area fails to be monotone, i.e. the flow must jump.
pub fn has_neck(p: &WarpProfile) -> bool {
    p.phi_knots().windows(2).any(|w| w[1] < w[0])
}

/// Dumbbell on `[0, ·]` with `φ(0) = start_phi` exactly and a neck deep
/// enough to force a jump.
fn random_dumbbell_kind<R: Rng>(rng: &mut R, start_phi: f64, slope: (f64, f64)) -> ProfileKind {
    let slope = rng.random_range(slope.0..slope.1);
    let width = rng.random_range(1.9..2.6);
    let center = rng.random_range(3.0..5.0);
    // the dip overcomes the slope when depth > slope·width·√e
    let monotone_limit = slope * width * 1.6487212707001282;
    let depth = rng.random_range(1.05 * monotone_limit..1.5 * monotone_limit);
    let base = start_phi + depth * (-center * center / (2.0 * width * width)).exp();
    ProfileKind::Dumbbell {
        base,
        slope,
        center,
        width,
        depth,
    }
}

/// A random dumbbell on `[0, length]` starting at radius `start_phi`, with
/// positive scalar curvature at every knot and at least one neck.
/// Rejection sampled; `slope` bounds the asymptotic slope.
pub fn random_psc_dumbbell<R: Rng>(
    rng: &mut R,
    start_phi: f64,
    slope: (f64, f64),
    length: f64,
    intervals: usize,
) -> WarpProfile {
    loop {
        let kind = random_dumbbell_kind(rng, start_phi, slope);
        let Ok(p) = WarpProfile::closed_form(kind, 0.0, length, intervals) else {
            continue;
        };
        if has_neck(&p) && min_scalar_curvature(&p).is_ok_and(|r| r > 0.0) {
            return p;
        }
    }
}

/// The cone `φ = start_phi + slope·r` on `[0, length]`; scalar curvature
/// `2(1 − slope²)/φ²`, positive for slopes below one.
pub fn cone_segment(start_phi: f64, slope: f64, length: f64, intervals: usize) -> Result<WarpProfile, GeometryError> {
    let kind = ProfileKind::Dumbbell {
        base: start_phi,
        slope,
        center: 0.0,
        width: 1.0,
        depth: 0.0,
    };
    WarpProfile::closed_form(kind, 0.0, length, intervals)
}

/// Flat (cone) segment starting at area `start_area` with `length` of arclength.
pub fn flat_segment(start_area: f64, length: f64, intervals: usize) -> Result<WarpProfile, GeometryError> {
    let r0 = (start_area / (4.0 * PI)).sqrt();
    WarpProfile::flat(r0, r0 + length, intervals)
}

/// Slope given to each of `k` branches so that `Σ φ′² ≤ trunk_slope²`
/// at the junction: the crossing then cannot raise `∫H²`.
pub fn branch_slope(trunk_slope: f64, k: usize) -> f64 {
    BRANCH_SLOPE_FACTOR * trunk_slope / (k as f64).sqrt()
}

const BRANCH_SLOPE_FACTOR: f64 = 0.95;

/// A flat trunk that grows from area `a0` to exactly `sum(branch_areas)`,
/// splitting into cone branches that start with the given areas. The
/// systole floor is `a0` when every branch area is at least `a0`.
pub fn star_tree(a0: f64, branch_areas: &[f64], branch_length: f64, intervals: usize) -> Result<TreeSpec, GeometryError> {
    let total: f64 = branch_areas.iter().sum();
    let r0 = (a0 / (4.0 * PI)).sqrt();
    let r1 = (total / (4.0 * PI)).sqrt();
    let trunk = WarpProfile::flat(r0, r1, intervals)?;
    let slope = branch_slope(1.0, branch_areas.len());
    let mut edges = vec![EdgeSpec {
        tail: 0,
        head: 1,
        profile: trunk,
        length: None,
    }];
    for (k, &a) in branch_areas.iter().enumerate() {
        edges.push(EdgeSpec {
            tail: 1,
            head: k + 2,
            profile: cone_segment((a / (4.0 * PI)).sqrt(), slope, branch_length, intervals)?,
            length: None,
        });
    }
    let floor = branch_areas.iter().all(|&a| a >= a0).then_some(a0);
    Ok(TreeSpec {
        vertices: (0..branch_areas.len() + 2).collect(),
        edges,
        root_edge: 0,
        systole_floor: floor,
        epsilon_junction: 1e-6,
    })
}

/// Random tree whose edges are PSC dumbbells: a dumbbell trunk, then two or
/// three dumbbell branches splitting its terminal area in a random ratio.
pub fn random_dumbbell_tree<R: Rng>(rng: &mut R, intervals: usize) -> TreeSpec {
    let start = rng.random_range(0.9..1.3);
    let trunk_length = rng.random_range(9.0..12.0);
    let trunk = random_psc_dumbbell(rng, start, (0.2, 0.32), trunk_length, intervals);
    let end_phi = trunk.phi_knots()[trunk.len() - 1];
    let end_slope = trunk.terminal_slope();
    let end_area = 4.0 * PI * end_phi * end_phi;
    let k = rng.random_range(2..=3usize);
    let mut weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..1.5)).collect();
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    let top = branch_slope(end_slope, k);
    let mut edges = vec![EdgeSpec {
        tail: 0,
        head: 1,
        profile: trunk,
        length: None,
    }];
    for (i, w) in weights.iter().enumerate() {
        let phi0 = (w * end_area / (4.0 * PI)).sqrt();
        let length = rng.random_range(10.0..14.0);
        edges.push(EdgeSpec {
            tail: 1,
            head: i + 2,
            profile: random_psc_dumbbell(rng, phi0, (0.6 * top, top), length, intervals),
            length: None,
        });
    }
    TreeSpec {
        vertices: (0..k + 2).collect(),
        edges,
        root_edge: 0,
        systole_floor: None,
        epsilon_junction: 1e-6,
    }
}
