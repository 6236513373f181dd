//! Rotationally symmetric warped products `dr² + φ(r)² g_{S²}` and the
//! geometry of their round slices `{r = const}`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::Deserialize;
use thiserror::Error;

use crate::textfmt::{fmt_f64, fmt_f64_list};

/// Slices with `φ` below this are treated as pinched.
pub const PINCH_THRESHOLD: f64 = 1e-12;

/// Minimum number of grid intervals for a sampled profile.
pub const MIN_SAMPLED_INTERVALS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("position {r} outside profile range [{lo}, {hi}]")]
    OutOfRange { r: f64, lo: f64, hi: f64 },
    #[error("degenerate slice at r = {r}: phi = {phi:e}")]
    DegenerateProfile { r: f64, phi: f64 },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("profile parse error: {0}")]
    Parse(String),
}

/// Closed-form warping families. `Sampled` profiles carry only knot data.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileKind {
    Sampled,
    /// `φ(r) = r`, Euclidean space.
    Flat,
    /// `φ(r) = a·sin(r/a)`, the round 3-sphere of radius `a`.
    RoundSphere { radius: f64 },
    /// Spatial Schwarzschild of mass `m` in arclength measured from the horizon.
    Schwarzschild { mass: f64 },
    /// `φ ≡ a`, the round cylinder `R × S²(a)`.
    Cylinder { radius: f64 },
    /// `φ(r) = base + slope·r − depth·exp(−(r − center)² / 2 width²)`:
    /// a cone with a Gaussian neck carved into it.
    Dumbbell {
        base: f64,
        slope: f64,
        center: f64,
        width: f64,
        depth: f64,
    },
}

impl ProfileKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProfileKind::Sampled => "sampled",
            ProfileKind::Flat => "flat",
            ProfileKind::RoundSphere { .. } => "round-sphere",
            ProfileKind::Schwarzschild { .. } => "schwarzschild",
            ProfileKind::Cylinder { .. } => "cylinder",
            ProfileKind::Dumbbell { .. } => "dumbbell",
        }
    }
}

/// `φ` together with its first two derivatives at one position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub phi: f64,
    pub dphi: f64,
    pub ddphi: f64,
}

/// Warping function of `dr² + φ(r)² g_{S²}` on a finite arclength grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpProfile {
    grid: Vec<f64>,
    phi: Vec<f64>,
    kind: ProfileKind,
    // knot derivatives, only populated for sampled profiles
    dphi: Vec<f64>,
    ddphi: Vec<f64>,
}

/// Geometry of the round slice `{r = const}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceGeometry {
    pub r: f64,
    pub area: f64,
    pub mean_curvature: f64,
    pub gauss_curvature: f64,
    pub scalar_curvature_ambient: f64,
    pub willmore: f64,
    pub hawking_mass: f64,
    /// `|Å|²`; round slices are umbilic so this is always zero.
    pub traceless_a_norm: f64,
}

impl WarpProfile {
    /// Sampled profile from knot data. Requires at least
    /// [`MIN_SAMPLED_INTERVALS`] intervals.
    pub fn sampled(grid: Vec<f64>, phi: Vec<f64>) -> Result<Self, GeometryError> {
        if grid.len() != phi.len() {
            return Err(GeometryError::InvalidProfile(format!(
                "grid has {} knots but phi has {}",
                grid.len(),
                phi.len()
            )));
        }
        if grid.len() < MIN_SAMPLED_INTERVALS + 1 {
            return Err(GeometryError::InvalidProfile(format!(
                "sampled profile needs at least {} knots, got {}",
                MIN_SAMPLED_INTERVALS + 1,
                grid.len()
            )));
        }
        check_grid(&grid)?;
        if let Some((i, p)) = phi
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p > 0.0))
        {
            return Err(GeometryError::InvalidProfile(format!(
                "phi must be positive, got {p} at knot {i}"
            )));
        }
        let (dphi, ddphi) = knot_derivatives(&grid, &phi);
        Ok(Self {
            grid,
            phi,
            kind: ProfileKind::Sampled,
            dphi,
            ddphi,
        })
    }

    /// Closed-form profile sampled on `intervals + 1` uniform knots of `[r_min, r_max]`.
    pub fn closed_form(
        kind: ProfileKind,
        r_min: f64,
        r_max: f64,
        intervals: usize,
    ) -> Result<Self, GeometryError> {
        if matches!(kind, ProfileKind::Sampled) {
            return Err(GeometryError::InvalidProfile(
                "closed_form called with the sampled kind".into(),
            ));
        }
        validate_params(&kind)?;
        if intervals == 0 || !(r_max > r_min) || !r_min.is_finite() || !r_max.is_finite() {
            return Err(GeometryError::InvalidProfile(format!(
                "bad grid [{r_min}, {r_max}] with {intervals} intervals"
            )));
        }
        let grid = uniform_grid(r_min, r_max, intervals);
        let mut phi = Vec::with_capacity(grid.len());
        for &r in &grid {
            let j = analytic_jet(&kind, r);
            if !(j.phi.is_finite() && j.phi > 0.0) {
                return Err(GeometryError::InvalidProfile(format!(
                    "{} profile has phi = {} at r = {r}",
                    kind.name(),
                    j.phi
                )));
            }
            phi.push(j.phi);
        }
        Ok(Self {
            grid,
            phi,
            kind,
            dphi: Vec::new(),
            ddphi: Vec::new(),
        })
    }

    pub fn flat(r_min: f64, r_max: f64, intervals: usize) -> Result<Self, GeometryError> {
        Self::closed_form(ProfileKind::Flat, r_min, r_max, intervals)
    }

    pub fn cylinder(radius: f64, r_min: f64, r_max: f64, intervals: usize) -> Result<Self, GeometryError> {
        Self::closed_form(ProfileKind::Cylinder { radius }, r_min, r_max, intervals)
    }

    pub fn round_sphere(radius: f64, r_min: f64, r_max: f64, intervals: usize) -> Result<Self, GeometryError> {
        Self::closed_form(ProfileKind::RoundSphere { radius }, r_min, r_max, intervals)
    }

    /// Schwarzschild exterior between area radii `s_min < s_max`, sampled
    /// uniformly in arclength.
    pub fn schwarzschild(mass: f64, s_min: f64, s_max: f64, intervals: usize) -> Result<Self, GeometryError> {
        if !(mass > 0.0) || !(s_min > 2.0 * mass) || !(s_max > s_min) {
            return Err(GeometryError::InvalidProfile(format!(
                "schwarzschild needs 2m < s_min < s_max, got m = {mass}, [{s_min}, {s_max}]"
            )));
        }
        Self::closed_form(
            ProfileKind::Schwarzschild { mass },
            schwarzschild_arclength(mass, s_min),
            schwarzschild_arclength(mass, s_max),
            intervals,
        )
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn phi_knots(&self) -> &[f64] {
        &self.phi
    }

    pub fn r_min(&self) -> f64 {
        self.grid[0]
    }

    pub fn r_max(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Largest knot spacing.
    pub fn max_spacing(&self) -> f64 {
        self.grid
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// The same knots as a sampled profile, derivatives by finite differences.
    pub fn to_sampled(&self) -> Result<Self, GeometryError> {
        Self::sampled(self.grid.clone(), self.phi.clone())
    }

    fn check_range(&self, r: f64) -> Result<f64, GeometryError> {
        let (lo, hi) = (self.r_min(), self.r_max());
        let slack = 1e-12 * (hi - lo).abs().max(1.0);
        if !(r >= lo - slack && r <= hi + slack) {
            return Err(GeometryError::OutOfRange { r, lo, hi });
        }
        Ok(r.clamp(lo, hi))
    }

    /// `φ, φ′, φ″` at `r`. Closed forms are exact; sampled profiles use the
    /// knot finite differences, linearly interpolated between knots.
    pub fn jet(&self, r: f64) -> Result<Jet, GeometryError> {
        let r = self.check_range(r)?;
        if !matches!(self.kind, ProfileKind::Sampled) {
            return Ok(analytic_jet(&self.kind, r));
        }
        let (i, w) = self.locate(r);
        let lerp = |v: &[f64]| {
            if w == 0.0 {
                v[i]
            } else {
                (1.0 - w) * v[i] + w * v[i + 1]
            }
        };
        Ok(Jet {
            phi: lerp(&self.phi),
            dphi: lerp(&self.dphi),
            ddphi: lerp(&self.ddphi),
        })
    }

    pub fn phi_at(&self, r: f64) -> Result<f64, GeometryError> {
        self.jet(r).map(|j| j.phi)
    }

    /// Cell index and barycentric weight of `r` (assumed in range).
    pub(crate) fn locate(&self, r: f64) -> (usize, f64) {
        let n = self.grid.len();
        let i = match self.grid.binary_search_by(|g| g.total_cmp(&r)) {
            Ok(i) => return (i.min(n - 1), 0.0),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let w = (r - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
        (i, w.clamp(0.0, 1.0))
    }

    /// Slope of `φ` at the outer end of the grid.
    pub fn terminal_slope(&self) -> f64 {
        match self.kind {
            ProfileKind::Sampled => self.dphi[self.dphi.len() - 1],
            _ => analytic_jet(&self.kind, self.r_max()).dphi,
        }
    }

    /// Whether the end continues to grow past the grid (positive terminal
    /// slope), which is the properness criterion used by the flow solvers.
    pub fn escapes(&self) -> bool {
        self.terminal_slope() > 0.0
    }

    /// Knot values of the slice area `4πφ²`.
    pub fn knot_areas(&self) -> Vec<f64> {
        self.phi.iter().map(|p| 4.0 * PI * p * p).collect()
    }

    /// Canonical structured-text form; see [`WarpProfile::from_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.write_fields(&mut out);
        out
    }

    pub(crate) fn write_fields(&self, out: &mut String) {
        let _ = writeln!(out, "kind = \"{}\"", self.kind.name());
        match &self.kind {
            ProfileKind::Sampled => {
                let _ = writeln!(out, "grid = {}", fmt_f64_list(&self.grid));
                let _ = writeln!(out, "phi = {}", fmt_f64_list(&self.phi));
                return;
            }
            ProfileKind::Flat => {}
            ProfileKind::RoundSphere { radius } | ProfileKind::Cylinder { radius } => {
                let _ = writeln!(out, "radius = {}", fmt_f64(*radius));
            }
            ProfileKind::Schwarzschild { mass } => {
                let _ = writeln!(out, "mass = {}", fmt_f64(*mass));
            }
            ProfileKind::Dumbbell {
                base,
                slope,
                center,
                width,
                depth,
            } => {
                let _ = writeln!(out, "base = {}", fmt_f64(*base));
                let _ = writeln!(out, "slope = {}", fmt_f64(*slope));
                let _ = writeln!(out, "center = {}", fmt_f64(*center));
                let _ = writeln!(out, "width = {}", fmt_f64(*width));
                let _ = writeln!(out, "depth = {}", fmt_f64(*depth));
            }
        }
        let _ = writeln!(out, "r_min = {}", fmt_f64(self.r_min()));
        let _ = writeln!(out, "r_max = {}", fmt_f64(self.r_max()));
        let _ = writeln!(out, "intervals = {}", self.grid.len() - 1);
    }

    pub fn from_text(text: &str) -> Result<Self, GeometryError> {
        let doc: ProfileDoc = toml::from_str(text).map_err(|e| GeometryError::Parse(e.to_string()))?;
        doc.build()
    }
}

/// Serialized form of a [`WarpProfile`].
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileDoc {
    Sampled {
        grid: Vec<f64>,
        phi: Vec<f64>,
    },
    Flat {
        r_min: f64,
        r_max: f64,
        intervals: usize,
    },
    RoundSphere {
        radius: f64,
        r_min: f64,
        r_max: f64,
        intervals: usize,
    },
    Schwarzschild {
        mass: f64,
        r_min: f64,
        r_max: f64,
        intervals: usize,
    },
    Cylinder {
        radius: f64,
        r_min: f64,
        r_max: f64,
        intervals: usize,
    },
    Dumbbell {
        base: f64,
        slope: f64,
        center: f64,
        width: f64,
        depth: f64,
        r_min: f64,
        r_max: f64,
        intervals: usize,
    },
}

impl ProfileDoc {
    pub fn build(self) -> Result<WarpProfile, GeometryError> {
        match self {
            ProfileDoc::Sampled { grid, phi } => WarpProfile::sampled(grid, phi),
            ProfileDoc::Flat { r_min, r_max, intervals } => WarpProfile::flat(r_min, r_max, intervals),
            ProfileDoc::RoundSphere { radius, r_min, r_max, intervals } => {
                WarpProfile::round_sphere(radius, r_min, r_max, intervals)
            }
            ProfileDoc::Schwarzschild { mass, r_min, r_max, intervals } => {
                WarpProfile::closed_form(ProfileKind::Schwarzschild { mass }, r_min, r_max, intervals)
            }
            ProfileDoc::Cylinder { radius, r_min, r_max, intervals } => {
                WarpProfile::cylinder(radius, r_min, r_max, intervals)
            }
            ProfileDoc::Dumbbell {
                base,
                slope,
                center,
                width,
                depth,
                r_min,
                r_max,
                intervals,
            } => WarpProfile::closed_form(
                ProfileKind::Dumbbell {
                    base,
                    slope,
                    center,
                    width,
                    depth,
                },
                r_min,
                r_max,
                intervals,
            ),
        }
    }
}

/// Point of `[lo, hi]` where the slice area equals `level`, by bisection
/// on the profile itself. Assumes `A(lo) ≤ level ≤ A(hi)`; returns the end
/// that is already past `level` otherwise.
pub fn area_crossing(p: &WarpProfile, lo: f64, hi: f64, level: f64) -> Result<f64, GeometryError> {
    let excess = |r: f64| -> Result<f64, GeometryError> { Ok(slice_area(p, r)? - level) };
    if excess(lo)? >= 0.0 {
        return Ok(lo);
    }
    if excess(hi)? <= 0.0 {
        return Ok(hi);
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if excess(mid)? < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// `4πφ(r)²`.
pub fn slice_area(p: &WarpProfile, r: f64) -> Result<f64, GeometryError> {
    let phi = p.phi_at(r)?;
    Ok(4.0 * PI * phi * phi)
}

/// All slice quantities at `r`.
pub fn slice_geometry(p: &WarpProfile, r: f64) -> Result<SliceGeometry, GeometryError> {
    let jet = p.jet(r)?;
    if jet.phi < PINCH_THRESHOLD {
        return Err(GeometryError::DegenerateProfile { r, phi: jet.phi });
    }
    Ok(geometry_from_jet(r, jet))
}

pub(crate) fn geometry_from_jet(r: f64, jet: Jet) -> SliceGeometry {
    let Jet { phi, dphi, .. } = jet;
    let area = 4.0 * PI * phi * phi;
    let willmore = 16.0 * PI * dphi * dphi;
    SliceGeometry {
        r,
        area,
        mean_curvature: 2.0 * dphi / phi,
        gauss_curvature: 1.0 / (phi * phi),
        scalar_curvature_ambient: warped_scalar_curvature(jet),
        willmore,
        hawking_mass: hawking_mass(area, willmore),
        traceless_a_norm: 0.0,
    }
}

/// `R = −4φ″/φ + 2(1 − φ′²)/φ²`.
pub fn warped_scalar_curvature(jet: Jet) -> f64 {
    -4.0 * jet.ddphi / jet.phi + 2.0 * (1.0 - jet.dphi * jet.dphi) / (jet.phi * jet.phi)
}

/// `√(|Σ|/16π)·(1 − ∫H²/16π)`.
pub fn hawking_mass(area: f64, willmore: f64) -> f64 {
    (area / (16.0 * PI)).sqrt() * (1.0 - willmore / (16.0 * PI))
}

/// Arclength from the horizon of the Schwarzschild slice with area radius `s`.
pub fn schwarzschild_arclength(mass: f64, s: f64) -> f64 {
    let m2 = 2.0 * mass;
    let root = (s - m2).max(0.0).sqrt();
    (s * (s - m2)).max(0.0).sqrt() + m2 * ((s.sqrt() + root) / m2.sqrt()).ln()
}

/// Inverse of [`schwarzschild_arclength`]: area radius of the slice at arclength `r ≥ 0`.
pub fn schwarzschild_area_radius(mass: f64, r: f64) -> f64 {
    let m2 = 2.0 * mass;
    if r <= 0.0 {
        return m2;
    }
    // r(s) ≥ s − 2m, so the root lies in [2m, r + 2m].
    let (mut lo, mut hi) = (m2, r + m2);
    let mut s = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = schwarzschild_arclength(mass, s) - r;
        if f == 0.0 {
            break;
        }
        if f > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let newton = s - f * (1.0 - m2 / s).max(0.0).sqrt();
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - s).abs() <= 1e-16 * s {
            s = next;
            break;
        }
        s = next;
    }
    s
}

fn analytic_jet(kind: &ProfileKind, r: f64) -> Jet {
    match *kind {
        ProfileKind::Flat => Jet { phi: r, dphi: 1.0, ddphi: 0.0 },
        ProfileKind::Cylinder { radius } => Jet { phi: radius, dphi: 0.0, ddphi: 0.0 },
        ProfileKind::RoundSphere { radius } => {
            let x = r / radius;
            Jet {
                phi: radius * x.sin(),
                dphi: x.cos(),
                ddphi: -x.sin() / radius,
            }
        }
        ProfileKind::Schwarzschild { mass } => {
            let s = schwarzschild_area_radius(mass, r);
            Jet {
                phi: s,
                dphi: (1.0 - 2.0 * mass / s).max(0.0).sqrt(),
                ddphi: mass / (s * s),
            }
        }
        ProfileKind::Dumbbell {
            base,
            slope,
            center,
            width,
            depth,
        } => {
            let x = r - center;
            let w2 = width * width;
            let g = (-x * x / (2.0 * w2)).exp();
            Jet {
                phi: base + slope * r - depth * g,
                dphi: slope + depth * x / w2 * g,
                ddphi: depth * (1.0 / w2 - x * x / (w2 * w2)) * g,
            }
        }
        ProfileKind::Sampled => unreachable!("sampled profiles have no analytic jet"),
    }
}

fn validate_params(kind: &ProfileKind) -> Result<(), GeometryError> {
    let ok = match *kind {
        ProfileKind::Sampled | ProfileKind::Flat => true,
        ProfileKind::RoundSphere { radius } | ProfileKind::Cylinder { radius } => radius > 0.0 && radius.is_finite(),
        ProfileKind::Schwarzschild { mass } => mass > 0.0 && mass.is_finite(),
        ProfileKind::Dumbbell {
            base,
            slope,
            center,
            width,
            depth,
        } => [base, slope, center, width, depth].iter().all(|v| v.is_finite()) && width > 0.0,
    };
    if ok {
        Ok(())
    } else {
        Err(GeometryError::InvalidProfile(format!("bad parameters for {kind:?}")))
    }
}

fn check_grid(grid: &[f64]) -> Result<(), GeometryError> {
    if grid.iter().any(|g| !g.is_finite()) {
        return Err(GeometryError::InvalidProfile("non-finite grid value".into()));
    }
    if let Some(i) = grid.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(GeometryError::InvalidProfile(format!(
            "grid not strictly increasing at knot {}",
            i + 1
        )));
    }
    Ok(())
}

pub(crate) fn uniform_grid(lo: f64, hi: f64, intervals: usize) -> Vec<f64> {
    let h = (hi - lo) / intervals as f64;
    (0..=intervals)
        .map(|i| if i == intervals { hi } else { lo + h * i as f64 })
        .collect()
}

/// Second-order finite differences on a possibly non-uniform grid:
/// centered three-point stencils inside, one-sided three-point at the ends.
fn knot_derivatives(x: &[f64], f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    for i in 0..n {
        // stencil knots
        let (a, b, c) = if i == 0 {
            (0, 1, 2)
        } else if i == n - 1 {
            (n - 3, n - 2, n - 1)
        } else {
            (i - 1, i, i + 1)
        };
        let (xa, xb, xc) = (x[a], x[b], x[c]);
        let xi = x[i];
        // derivatives of the Lagrange basis through (xa, xb, xc) at xi
        let la = ((xi - xb) + (xi - xc)) / ((xa - xb) * (xa - xc));
        let lb = ((xi - xa) + (xi - xc)) / ((xb - xa) * (xb - xc));
        let lc = ((xi - xa) + (xi - xb)) / ((xc - xa) * (xc - xb));
        d1[i] = la * f[a] + lb * f[b] + lc * f[c];
        d2[i] = 2.0 * (f[a] / ((xa - xb) * (xa - xc)) + f[b] / ((xb - xa) * (xb - xc)) + f[c] / ((xc - xa) * (xc - xb)));
    }
    // The three-point second difference is only first-order at the ends;
    // extrapolate from the interior instead.
    if n >= 4 {
        d2[0] = d2[1] + (d2[1] - d2[2]) * (x[1] - x[0]) / (x[2] - x[1]);
        d2[n - 1] = d2[n - 2] + (d2[n - 2] - d2[n - 3]) * (x[n - 1] - x[n - 2]) / (x[n - 2] - x[n - 3]);
    }
    (d1, d2)
}
