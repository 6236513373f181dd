//! Warped necks `h + φ² dt²` over axisymmetric spheres.
//!
//! A surface is `h = a(θ)²(dθ² + sin²θ dψ²)`, conformal to the unit sphere,
//! so the Dirichlet energy of an axisymmetric function does not see `a`.
//! On the node grid `θᵢ = iπ/N` with dual cells clipped at the poles this
//! gives a finite-volume Sturm–Liouville system: fluxes `sin θ_{i+½}/Δθ`
//! and masses `a²(cos θ_{i−½} − cos θ_{i+½})`. The pole cells are half
//! cells, which is all the Neumann condition needs.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::Deserialize;
use thiserror::Error;

use crate::geometry::{GeometryError, WarpProfile};
use crate::textfmt::{fmt_f64, fmt_f64_list};

/// Inverse iteration stops when successive iterates differ by less than this (max norm).
pub const EIGEN_TOL: f64 = 1e-10;
pub const EIGEN_MAX_ITER: usize = 500;

/// `tol_eig` at the reference resolution `N = 400`; it scales like `Δθ²`.
pub const TOL_EIG_REF: f64 = 1e-6;
const TOL_EIG_REF_INTERVALS: f64 = 400.0;

/// Default exponent of the area monotonicity bound `c₁r₁ⁿ` (surfaces in a 3-manifold).
pub const DEFAULT_MONOTONICITY_EXPONENT: u32 = 2;

pub const MIN_INTERVALS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeckError {
    #[error("inverse iteration did not converge in {iterations} iterations (last change {change:.3e})")]
    NotConverged { iterations: usize, change: f64 },
    #[error("first eigenfunction changes sign at knot {index} (value {value:.3e}); discretization bug")]
    NonPositiveEigenfunction { index: usize, value: f64 },
    #[error("eigenfunction inequality fails at theta = {theta}: deficit {deficit:.3e}")]
    EigenInequalityViolated { theta: f64, deficit: f64 },
    #[error("non-positive input: {0}")]
    NonPositiveInput(String),
    #[error("invalid surface: {0}")]
    InvalidSurface(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Axisymmetric conformally round sphere with a stability potential `W(θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisymSurface {
    theta: Vec<f64>,
    a: Vec<f64>,
    potential: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SurfaceDoc {
    a: Vec<f64>,
    potential: Vec<f64>,
}

impl AxisymSurface {
    /// Surface from conformal factor and potential sampled at `θᵢ = iπ/N`.
    pub fn new(a: Vec<f64>, potential: Vec<f64>) -> Result<Self, NeckError> {
        if a.len() != potential.len() {
            return Err(NeckError::InvalidSurface(format!(
                "a has {} samples but the potential has {}",
                a.len(),
                potential.len()
            )));
        }
        if a.len() < MIN_INTERVALS + 1 {
            return Err(NeckError::InvalidSurface(format!(
                "need at least {} samples, got {}",
                MIN_INTERVALS + 1,
                a.len()
            )));
        }
        if let Some((i, v)) = a.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(NeckError::InvalidSurface(format!("a must be positive, got {v} at knot {i}")));
        }
        if potential.iter().any(|w| !w.is_finite()) {
            return Err(NeckError::InvalidSurface("non-finite potential".into()));
        }
        let n = a.len() - 1;
        let h = PI / n as f64;
        let theta: Vec<f64> = (0..=n).map(|i| if i == n { PI } else { i as f64 * h }).collect();
        // one-sided second-order slopes; an even factor gives O(h²) here
        let scale = a.iter().copied().fold(0.0, f64::max);
        let start = (-3.0 * a[0] + 4.0 * a[1] - a[2]) / (2.0 * h);
        let end = (3.0 * a[n] - 4.0 * a[n - 1] + a[n - 2]) / (2.0 * h);
        for (pole, slope) in [(0.0, start), (PI, end)] {
            if slope.abs() > h * scale {
                return Err(NeckError::InvalidSurface(format!(
                    "a is not smooth at the pole theta = {pole}: slope {slope:.3e}"
                )));
            }
        }
        Ok(Self { theta, a, potential })
    }

    /// `a(θ)` sampled from a closure, with zero potential.
    pub fn from_conformal_factor(intervals: usize, a: impl Fn(f64) -> f64) -> Result<Self, NeckError> {
        let n = intervals;
        let a: Vec<f64> = (0..=n).map(|i| a(if i == n { PI } else { i as f64 * PI / n as f64 })).collect();
        let zeros = vec![0.0; a.len()];
        Self::new(a, zeros)
    }

    /// Round sphere of the given radius with constant potential `w0`.
    pub fn round(radius: f64, w0: f64, intervals: usize) -> Result<Self, NeckError> {
        if !(radius > 0.0) {
            return Err(NeckError::NonPositiveInput(format!("radius {radius}")));
        }
        Self::from_conformal_factor(intervals, |_| radius)?.with_potential(vec![w0; intervals + 1])
    }

    /// `a(θ) = radius·(1 + amplitude·cos(mode·θ))`, smooth at both poles.
    pub fn perturbed_round(radius: f64, amplitude: f64, mode: u32, intervals: usize) -> Result<Self, NeckError> {
        if !(radius > 0.0) || !(amplitude.abs() < 1.0) {
            return Err(NeckError::InvalidSurface(format!(
                "need radius > 0 and |amplitude| < 1, got {radius}, {amplitude}"
            )));
        }
        Self::from_conformal_factor(intervals, |t| radius * (1.0 + amplitude * (mode as f64 * t).cos()))
    }

    pub fn with_potential(self, potential: Vec<f64>) -> Result<Self, NeckError> {
        Self::new(self.a, potential)
    }

    /// Potential `W = K − λ/2`, whose first eigenfunction certifies
    /// `Δφ ≤ (K − λ/2)φ` whenever `μ₁ ≥ 0`.
    pub fn with_stability_potential(self, lambda: f64) -> Self {
        let potential = self.gauss_curvature().iter().map(|k| k - 0.5 * lambda).collect();
        Self { potential, ..self }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn conformal_factor(&self) -> &[f64] {
        &self.a
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn intervals(&self) -> usize {
        self.a.len() - 1
    }

    pub fn spacing(&self) -> f64 {
        PI / self.intervals() as f64
    }

    /// `tol_eig` for this resolution.
    pub fn eigen_tolerance(&self) -> f64 {
        let r = TOL_EIG_REF_INTERVALS / self.intervals() as f64;
        TOL_EIG_REF * r * r
    }

    /// Whether `a` is constant, i.e. the surface is a round sphere.
    pub fn is_round(&self) -> bool {
        let a0 = self.a[0];
        self.a.iter().all(|&v| (v - a0).abs() <= 1e-12 * a0)
    }

    /// Dual-cell measure on the unit sphere (per unit `ψ`-angle).
    fn round_mass(&self) -> Vec<f64> {
        let n = self.intervals();
        let h = self.spacing();
        (0..=n)
            .map(|i| {
                let lo = if i == 0 { 0.0 } else { self.theta[i] - 0.5 * h };
                let hi = if i == n { PI } else { self.theta[i] + 0.5 * h };
                lo.cos() - hi.cos()
            })
            .collect()
    }

    fn mass(&self) -> Vec<f64> {
        self.round_mass().iter().zip(&self.a).map(|(m, a)| m * a * a).collect()
    }

    /// Edge weights `sin θ_{i+½}/Δθ`.
    fn flux(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.intervals()).map(|i| (self.theta[i] + 0.5 * h).sin() / h).collect()
    }

    /// `Σ_j w_ij (f_j − f_i)`, the stiffness action with the sign of a Laplacian.
    fn stiffness_action(&self, f: &[f64]) -> Vec<f64> {
        let w = self.flux();
        let mut out = vec![0.0; f.len()];
        for (i, wi) in w.iter().enumerate() {
            let d = wi * (f[i + 1] - f[i]);
            out[i] += d;
            out[i + 1] -= d;
        }
        out
    }

    /// Laplacian of the unit round metric.
    fn round_laplacian(&self, f: &[f64]) -> Vec<f64> {
        let m = self.round_mass();
        self.stiffness_action(f).iter().zip(&m).map(|(s, m)| s / m).collect()
    }

    /// `Δ_h f = Δ_round f / a²`.
    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        self.round_laplacian(f).iter().zip(&self.a).map(|(l, a)| l / (a * a)).collect()
    }

    /// `K = (1 − Δ_round ln a)/a²`, with the same stencil as the operator.
    pub fn gauss_curvature(&self) -> Vec<f64> {
        let ln_a: Vec<f64> = self.a.iter().map(|a| a.ln()).collect();
        self.round_laplacian(&ln_a)
            .iter()
            .zip(&self.a)
            .map(|(l, a)| (1.0 - l) / (a * a))
            .collect()
    }

    /// Total area `2π Σ mᵢ`.
    pub fn area(&self) -> f64 {
        2.0 * PI * self.mass().iter().sum::<f64>()
    }

    /// `(∫|∇f|² + W f²)/∫f²` on the grid.
    pub fn rayleigh_quotient(&self, f: &[f64]) -> f64 {
        let w = self.flux();
        let m = self.mass();
        let grad: f64 = w.iter().enumerate().map(|(i, wi)| wi * (f[i + 1] - f[i]).powi(2)).sum();
        let pot: f64 = (0..f.len()).map(|i| self.potential[i] * m[i] * f[i] * f[i]).sum();
        let norm: f64 = (0..f.len()).map(|i| m[i] * f[i] * f[i]).sum();
        (grad + pot) / norm
    }

    /// Diagonal and off-diagonal of `M^{-1/2}(K + WM)M^{-1/2}`, whose spectrum
    /// is that of `−Δ_h + W`.
    pub fn symmetric_operator(&self) -> (Vec<f64>, Vec<f64>) {
        let w = self.flux();
        let m = self.mass();
        let n = m.len();
        let diag = (0..n)
            .map(|i| {
                let left = if i > 0 { w[i - 1] } else { 0.0 };
                let right = if i + 1 < n { w[i] } else { 0.0 };
                (left + right) / m[i] + self.potential[i]
            })
            .collect();
        let off = (0..n - 1).map(|i| -w[i] / (m[i] * m[i + 1]).sqrt()).collect();
        (diag, off)
    }

    pub fn to_text(&self) -> String {
        format!(
            "a = {}\npotential = {}\n",
            fmt_f64_list(&self.a),
            fmt_f64_list(&self.potential)
        )
    }

    pub fn from_text(text: &str) -> Result<Self, NeckError> {
        let doc: SurfaceDoc = toml::from_str(text).map_err(|e| NeckError::Parse(e.to_string()))?;
        Self::new(doc.a, doc.potential)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstEigen {
    pub mu: f64,
    /// Positive, normalized to maximum 1.
    pub phi: Vec<f64>,
    pub iterations: usize,
}

/// Number of eigenvalues of the symmetric tridiagonal `(d, e)` below `x`.
fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..d.len() {
        let coupling = if i == 0 { 0.0 } else { e[i - 1] * e[i - 1] / q };
        q = d[i] - x - coupling;
        if q == 0.0 {
            q = -f64::EPSILON * (d[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Solves `(T − σ)x = y` for a positive definite shifted tridiagonal.
fn thomas(d: &[f64], e: &[f64], sigma: f64, y: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut piv = d[0] - sigma;
    x[0] = y[0] / piv;
    for i in 1..n {
        c[i] = e[i - 1] / piv;
        piv = d[i] - sigma - e[i - 1] * c[i];
        x[i] = (y[i] - e[i - 1] * x[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i + 1] * x[i + 1];
    }
    x
}

/// Smallest eigenvalue and positive eigenfunction of `−Δ_h + W` on
/// axisymmetric functions.
pub fn stability_first_eigen(s: &AxisymSurface) -> Result<FirstEigen, NeckError> {
    let (d, e) = s.symmetric_operator();
    let n = d.len();
    // Gershgorin bracket, then bisection on the Sturm count
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    let scale = lo.abs().max(hi.abs()).max(1.0);
    while hi - lo > 4.0 * f64::EPSILON * scale {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(&d, &e, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // shift just below μ₁ keeps the system positive definite
    let sigma = lo - 64.0 * f64::EPSILON * scale;
    let sqrt_m: Vec<f64> = s.mass().iter().map(|m| m.sqrt()).collect();
    let mut psi = sqrt_m.clone();
    normalize_max(&mut psi);
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < EIGEN_MAX_ITER {
        iterations += 1;
        let mut next = thomas(&d, &e, sigma, &psi);
        normalize_max(&mut next);
        change = next.iter().zip(&psi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        psi = next;
        if change <= EIGEN_TOL {
            break;
        }
    }
    if !(change <= EIGEN_TOL) {
        return Err(NeckError::NotConverged { iterations, change });
    }
    let mut phi: Vec<f64> = psi.iter().zip(&sqrt_m).map(|(p, m)| p / m).collect();
    normalize_max(&mut phi);
    if let Some((index, &value)) = phi.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(NeckError::NonPositiveEigenfunction { index, value });
    }
    Ok(FirstEigen {
        mu: s.rayleigh_quotient(&phi),
        phi,
        iterations,
    })
}

/// Scales to maximum absolute value 1 with a positive largest entry.
fn normalize_max(v: &mut [f64]) {
    let (mut big, mut sign) = (0.0, 1.0);
    for &x in v.iter() {
        if x.abs() > big {
            big = x.abs();
            sign = x.signum();
        }
    }
    if big > 0.0 {
        v.iter_mut().for_each(|x| *x *= sign / big);
    }
}

/// `g = h + φ² dt²` on `Σ × [0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeckMetric {
    surface: AxisymSurface,
    phi: Vec<f64>,
    lambda: f64,
    length: f64,
    scalar_curvature: Vec<f64>,
}

impl NeckMetric {
    pub fn surface(&self) -> &AxisymSurface {
        &self.surface
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// `R = 2(K − Δφ/φ)` at each knot.
    pub fn scalar_curvature(&self) -> &[f64] {
        &self.scalar_curvature
    }

    pub fn min_scalar_curvature(&self) -> f64 {
        self.scalar_curvature.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// The neck as a warped half-line segment. Only a round sphere with a
    /// constant `φ` is rotationally symmetric in the three-dimensional
    /// sense: it is the cylinder of radius `a` and length `φ·T`.
    pub fn to_warp_profile(&self, intervals: usize) -> Result<WarpProfile, NeckError> {
        let p0 = self.phi[0];
        let constant = self.phi.iter().all(|&p| (p - p0).abs() <= 1e-10 * p0);
        if !self.surface.is_round() || !constant {
            return Err(NeckError::InvalidSurface(
                "only a round surface with constant phi is a warped half-line".into(),
            ));
        }
        Ok(WarpProfile::cylinder(self.surface.a[0], 0.0, p0 * self.length, intervals)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "lambda = {}", fmt_f64(self.lambda));
        let _ = writeln!(out, "length = {}", fmt_f64(self.length));
        let _ = writeln!(out, "min_R = {}", fmt_f64(self.min_scalar_curvature()));
        let _ = writeln!(out, "theta = {}", fmt_f64_list(&self.surface.theta));
        let _ = writeln!(out, "a = {}", fmt_f64_list(&self.surface.a));
        let _ = writeln!(out, "phi = {}", fmt_f64_list(&self.phi));
        let _ = writeln!(out, "R = {}", fmt_f64_list(&self.scalar_curvature));
        out
    }
}

/// Builds the warped neck over `s` with warping function `phi1`, checking
/// `Δφ ≤ (K − λ/2)φ` knot by knot within `tol_eig`.
pub fn build_neck(s: &AxisymSurface, phi1: &[f64], lambda: f64, length: f64) -> Result<NeckMetric, NeckError> {
    if phi1.len() != s.a.len() {
        return Err(NeckError::InvalidSurface(format!(
            "phi has {} samples, the surface {}",
            phi1.len(),
            s.a.len()
        )));
    }
    if let Some((index, &value)) = phi1.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(NeckError::NonPositiveEigenfunction { index, value });
    }
    if !(length > 0.0) {
        return Err(NeckError::NonPositiveInput(format!("neck length {length}")));
    }
    let tol = s.eigen_tolerance();
    let k = s.gauss_curvature();
    let lap = s.laplacian(phi1);
    let mut scalar_curvature = Vec::with_capacity(phi1.len());
    for i in 0..phi1.len() {
        let ratio = lap[i] / phi1[i];
        // R ≥ λ − tol  ⟺  Δφ/φ − (K − λ/2) ≤ tol/2
        let deficit = ratio - (k[i] - 0.5 * lambda);
        if deficit > 0.5 * tol {
            return Err(NeckError::EigenInequalityViolated {
                theta: s.theta[i],
                deficit,
            });
        }
        scalar_curvature.push(2.0 * (k[i] - ratio));
    }
    let neck = NeckMetric {
        surface: s.clone(),
        phi: phi1.to_vec(),
        lambda,
        length,
        scalar_curvature,
    };
    debug_assert!(neck.min_scalar_curvature() >= lambda - tol);
    Ok(neck)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barrier {
    /// `T = 16A₀/c₀`.
    pub length: f64,
    /// `c₀·2⌊T/4⌋`.
    pub crossing_bound: f64,
    /// `2A₀`.
    pub required: f64,
    /// Whether the crossing bound exceeds `2A₀`; false flags a degenerate input.
    pub holds: bool,
}

/// Neck length that forces any sphere crossing the neck to have area above `2A₀`.
pub fn barrier_length(a0: f64, c0: f64) -> Result<Barrier, NeckError> {
    if !(a0 > 0.0 && a0.is_finite()) || !(c0 > 0.0 && c0.is_finite()) {
        return Err(NeckError::NonPositiveInput(format!("A0 = {a0}, c0 = {c0}")));
    }
    let length = 16.0 * a0 / c0;
    let crossing_bound = c0 * 2.0 * (length / 4.0).floor();
    let required = 2.0 * a0;
    Ok(Barrier {
        length,
        crossing_bound,
        required,
        holds: crossing_bound > required,
    })
}

/// Area lower bound `c₁r₁ⁿ` for a minimal surface through the center of a
/// ball of radius `r₁`. The barrier uses unit balls, where the exponent
/// drops out; it is exposed for other radii.
pub fn monotonicity_area_bound(c1: f64, r1: f64, exponent: u32) -> f64 {
    c1 * r1.powi(exponent as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_sphere_constant_potential() {
        let s = AxisymSurface::round(1.0, 0.75, 64).unwrap();
        let e = stability_first_eigen(&s).unwrap();
        assert!((e.mu - 0.75).abs() < 1e-12);
        assert!(e.phi.iter().all(|p| (p - 1.0).abs() < 1e-10));
    }

    #[test]
    fn round_curvature_and_area() {
        let s = AxisymSurface::round(2.0, 0.0, 100).unwrap();
        assert!(s.gauss_curvature().iter().all(|k| (k - 0.25).abs() < 1e-12));
        assert!((s.area() - 16.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn barrier_examples() {
        let b = barrier_length(4.0 * PI, 1.0).unwrap();
        assert_eq!(b.length, 64.0 * PI);
        assert_eq!(b.crossing_bound, 100.0);
        assert!(b.holds);
        let b = barrier_length(1.0, 16.0).unwrap();
        assert_eq!((b.length, b.crossing_bound, b.holds), (1.0, 0.0, false));
        assert!(barrier_length(0.0, 1.0).is_err());
    }

    #[test]
    fn cone_pole_rejected() {
        assert!(AxisymSurface::from_conformal_factor(100, |t| 1.0 + 0.5 * t).is_err());
    }
}
