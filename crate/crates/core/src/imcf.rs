//! Weak IMCF on a single warped half-line.
//!
//! In rotational symmetry the weak flow is determined by the slice areas
//! alone: the arrival time is `u(r) = ln(Ǎ(r)/Ǎ(r_start))` where `Ǎ` is the
//! monotone least-area envelope of `A`. Plateaus of `Ǎ` are the jump regions.
//! [`verify_weak_solution`] checks the result against the variational
//! definition with random compactly supported competitors.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use thiserror::Error;

use crate::geometry::{area_crossing, slice_area, GeometryError, WarpProfile};
use crate::textfmt::fmt_f64;

/// First-order quadrature budget constant: `tol_quad = QUAD_TOL_CONST · h · max A`.
pub const QUAD_TOL_CONST: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ImcfError {
    #[error("empty grid")]
    EmptyGrid,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("start position {r} must lie strictly inside [{lo}, {hi}]")]
    StartOutsideGrid { r: f64, lo: f64, hi: f64 },
    #[error("no proper solution: envelope area saturates at {saturation:.6e} (time {time:.6})")]
    NonProper {
        saturation: f64,
        time: f64,
        partial: Box<FlowSolution>,
    },
}

/// A maximal plateau of the envelope that the flow crosses instantaneously.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRegion {
    /// First solution-grid index inside the plateau.
    pub start: usize,
    /// Index where the envelope meets the area again (the landing slice).
    pub end: usize,
    /// Point in the cell before `start` where the slice area reaches the plateau level.
    pub r_entry: f64,
    pub r_exit: f64,
    /// Area of the plateau, equal before and after the jump.
    pub level: f64,
}

/// Arrival-time function of the weak flow starting from `{r < r_start}`.
#[derive(Debug, Clone)]
pub struct FlowSolution {
    profile: WarpProfile,
    r_start: f64,
    grid: Vec<f64>,
    area: Vec<f64>,
    envelope: Vec<f64>,
    u: Vec<f64>,
    jump_regions: Vec<JumpRegion>,
    proper: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HullRegion {
    pub r_out: f64,
    pub strictly_minimizing: bool,
}

/// `Ǎ(i) = max_{ρ ≤ i} min_{s ≥ ρ} A(s)` over grid indices.
pub fn hull_envelope(area: &[f64]) -> Result<Vec<f64>, ImcfError> {
    if area.is_empty() {
        return Err(ImcfError::EmptyGrid);
    }
    let mut env = area.to_vec();
    for i in (0..env.len() - 1).rev() {
        env[i] = env[i].min(env[i + 1]);
    }
    for i in 1..env.len() {
        env[i] = env[i].max(env[i - 1]);
    }
    Ok(env)
}

/// Solves the weak flow from the slice `r_start`, first replacing the
/// initial region by its minimizing hull.
pub fn solve_weak_imcf(p: &WarpProfile, r_start: f64) -> Result<FlowSolution, ImcfError> {
    let (lo, hi) = (p.r_min(), p.r_max());
    if !(r_start >= lo && r_start < hi) {
        return Err(ImcfError::StartOutsideGrid { r: r_start, lo, hi });
    }
    let snap = 1e-12 * (hi - lo);
    let mut grid = vec![r_start];
    grid.extend(p.grid().iter().copied().filter(|&g| g > r_start + snap));
    if grid.len() < 2 {
        return Err(ImcfError::StartOutsideGrid { r: r_start, lo, hi });
    }
    let area = grid
        .iter()
        .map(|&r| slice_area(p, r))
        .collect::<Result<Vec<_>, _>>()?;
    let envelope = hull_envelope(&area)?;
    let a0 = envelope[0];
    let u: Vec<f64> = envelope.iter().map(|e| (e / a0).ln()).collect();
    let jump_regions = find_jump_regions(p, &grid, &area, &envelope)?;
    let last = envelope.len() - 1;
    let proper = p.escapes() && envelope[last] > a0;
    let sol = FlowSolution {
        profile: p.clone(),
        r_start,
        grid,
        area,
        envelope,
        u,
        jump_regions,
        proper,
    };
    if proper {
        Ok(sol)
    } else {
        Err(ImcfError::NonProper {
            saturation: sol.envelope[last],
            time: sol.u[last],
            partial: Box::new(sol),
        })
    }
}

fn find_jump_regions(p: &WarpProfile, grid: &[f64], area: &[f64], env: &[f64]) -> Result<Vec<JumpRegion>, ImcfError> {
    let n = grid.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if env[i] >= area[i] {
            i += 1;
            continue;
        }
        let start = i;
        let level = env[i];
        while i < n && env[i] < area[i] {
            i += 1;
        }
        let end = i.min(n - 1);
        let r_entry = if start == 0 {
            grid[0]
        } else {
            area_crossing(p, grid[start - 1], grid[start], level)?
        };
        out.push(JumpRegion {
            start,
            end,
            r_entry,
            r_exit: grid[end],
            level,
        });
    }
    Ok(out)
}

impl FlowSolution {
    pub fn profile(&self) -> &WarpProfile {
        &self.profile
    }

    pub fn r_start(&self) -> f64 {
        self.r_start
    }

    /// Solution grid: `r_start` followed by the profile knots beyond it.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn area(&self) -> &[f64] {
        &self.area
    }

    pub fn envelope(&self) -> &[f64] {
        &self.envelope
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn jump_regions(&self) -> &[JumpRegion] {
        &self.jump_regions
    }

    pub fn is_proper(&self) -> bool {
        self.proper
    }

    /// Boundary area at `t = 0`, after the initial hull replacement.
    pub fn initial_area(&self) -> f64 {
        self.envelope[0]
    }

    /// Largest time reached on the grid.
    pub fn final_time(&self) -> f64 {
        self.u[self.u.len() - 1]
    }

    pub fn max_spacing(&self) -> f64 {
        self.grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Whether solution-grid index `i` lies inside a jump region (landing excluded).
    pub fn in_jump(&self, i: usize) -> bool {
        self.envelope[i] < self.area[i]
    }

    /// Position of the boundary of `{u < t}`, or `None` past the grid.
    pub fn front_position(&self, t: f64) -> Option<f64> {
        if t < 0.0 {
            return None;
        }
        let level = self.envelope[0] * t.exp();
        let k = self.envelope.partition_point(|&e| e < level);
        if k == 0 {
            return Some(self.grid[0]);
        }
        if k >= self.grid.len() {
            return None;
        }
        // the cell (k-1, k) always starts on a smooth knot
        area_crossing(&self.profile, self.grid[k - 1], self.grid[k], level).ok()
    }

    /// Same grid and areas with a replaced level function. Used to inject
    /// faults into the certifier.
    pub fn with_level_function(&self, u: Vec<f64>) -> FlowSolution {
        assert_eq!(u.len(), self.u.len(), "level function length mismatch");
        FlowSolution { u, ..self.clone() }
    }

    /// Columnar export `r,u,area,envelope,in_jump`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,u,area,envelope,in_jump\n");
        for i in 0..self.grid.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                fmt_f64(self.grid[i]),
                fmt_f64(self.u[i]),
                fmt_f64(self.area[i]),
                fmt_f64(self.envelope[i]),
                u8::from(self.in_jump(i))
            );
        }
        out
    }

    /// Slice areas at cell midpoints, the quadrature weights of the certifier.
    fn midpoint_areas(&self) -> Vec<f64> {
        self.grid
            .windows(2)
            .map(|w| slice_area(&self.profile, 0.5 * (w[0] + w[1])).expect("midpoint inside grid"))
            .collect()
    }

    /// `QUAD_TOL_CONST · h · max A`.
    pub fn quadrature_tolerance(&self) -> f64 {
        let max_area = self.area.iter().copied().fold(0.0, f64::max);
        QUAD_TOL_CONST * self.max_spacing() * max_area
    }
}

/// Piecewise-linear tent `amplitude·max(0, 1 − |r − center|/half_width)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: f64,
    pub half_width: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn at(&self, r: f64) -> f64 {
        self.amplitude * (1.0 - (r - self.center).abs() / self.half_width).max(0.0)
    }
}

/// `J_u(u) − J_u(u + ψ)` for the tent `ψ`, midpoint quadrature with forward
/// differences. Only cells touching the support contribute.
pub fn bump_gap(sol: &FlowSolution, mid_area: &[f64], bump: &Bump) -> f64 {
    let grid = &sol.grid;
    let u = &sol.u;
    let lo = grid.partition_point(|&g| g < bump.center - bump.half_width).saturating_sub(1);
    let hi = grid
        .partition_point(|&g| g <= bump.center + bump.half_width)
        .min(grid.len() - 1);
    let mut gap = 0.0;
    for i in lo..hi {
        let du = u[i + 1] - u[i];
        let (p0, p1) = (bump.at(grid[i]), bump.at(grid[i + 1]));
        let weight = du.abs();
        let j_u = du.abs() + 0.5 * (u[i] + u[i + 1]) * weight;
        let j_v = (du + p1 - p0).abs() + (0.5 * (u[i] + u[i + 1]) + 0.5 * (p0 + p1)) * weight;
        gap += (j_u - j_v) * mid_area[i];
    }
    gap
}

/// Largest `J_u(u) − J_u(v)` over `n_trials` random tent competitors
/// supported strictly inside the solution grid. Zero trials report 0.
///
/// Randomness is SplitMix64 seeded with `seed`, so residuals reproduce
/// bit-exactly.
pub fn verify_weak_solution(sol: &FlowSolution, n_trials: usize, seed: u64) -> f64 {
    let mid_area = sol.midpoint_areas();
    let mut rng = SplitMix64::seed_from_u64(seed);
    let lo = sol.grid[0];
    let hi = sol.grid[sol.grid.len() - 1];
    let h = sol.max_spacing();
    let span = hi - lo;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..n_trials {
        let half_width = rng.random_range((2.0 * h).min(0.25 * span)..=(0.5 * span - h).max(2.0 * h));
        let half_width = half_width.min(0.5 * span - h);
        let center = rng.random_range(lo + half_width + 0.5 * h..=hi - half_width - 0.5 * h);
        let amplitude = rng.random_range(-1.0..=1.0);
        let bump = Bump {
            center,
            half_width,
            amplitude,
        };
        worst = worst.max(bump_gap(sol, &mid_area, &bump));
    }
    if n_trials == 0 {
        0.0
    } else {
        worst
    }
}

/// The minimizing hull of `{r ≤ r_in}` along the knots of `p`; ties go to
/// the largest radius.
pub fn minimizing_hull(p: &WarpProfile, r_in: f64) -> Result<HullRegion, ImcfError> {
    let a_in = slice_area(p, r_in)?;
    let ahead: Vec<(f64, f64)> = p
        .grid()
        .iter()
        .copied()
        .zip(p.knot_areas())
        .filter(|&(g, _)| g > r_in)
        .collect();
    let inf = ahead.iter().map(|&(_, a)| a).fold(f64::INFINITY, f64::min);
    if inf < a_in {
        let r_out = ahead
            .iter()
            .rev()
            .find(|&&(_, a)| a == inf)
            .map(|&(g, _)| g)
            .expect("minimum attained");
        return Ok(HullRegion {
            r_out,
            strictly_minimizing: false,
        });
    }
    Ok(HullRegion {
        r_out: r_in,
        strictly_minimizing: ahead.iter().all(|&(_, a)| a > a_in),
    })
}
