//! Flow traces: time series of the slice quantities the auditor consumes.

use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::{hawking_mass, slice_geometry, GeometryError, SliceGeometry};
use crate::imcf::FlowSolution;
use crate::textfmt::fmt_f64;

pub const CSV_HEADER: &str = "t,n_components,total_area,chi,willmore,min_R,hawking,jump";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("trace is empty")]
    Empty,
    #[error("time decreases at sample {index}: {prev} -> {t}")]
    TimeOrder { index: usize, prev: f64, t: f64 },
    #[error("repeated time {t} at sample {index} is not an event boundary")]
    RepeatedTime { index: usize, t: f64 },
    #[error("odd Euler characteristic {chi} at sample {index}")]
    OddChi { index: usize, chi: i64 },
    #[error("non-finite value in sample {index}")]
    NonFinite { index: usize },
    #[error("csv format: {0}")]
    Format(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One instant of a flow. Consecutive samples may share a time only across
/// an event (a jump or a junction crossing): the first is the state just
/// before, the second just after.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub n_components: usize,
    pub total_area: f64,
    pub chi: i64,
    /// `∫_{Σ_t} H²`.
    pub willmore: f64,
    /// Minimum ambient scalar curvature over the region swept so far.
    pub min_r: f64,
    pub hawking: f64,
    pub is_jump: bool,
    /// Exact `∫_{Σ_t} R` when known (symmetric model traces only).
    pub r_integral: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrace {
    samples: Vec<TraceSample>,
}

impl FlowTrace {
    pub fn new(samples: Vec<TraceSample>) -> Result<Self, TraceError> {
        if samples.is_empty() {
            return Err(TraceError::Empty);
        }
        for (i, s) in samples.iter().enumerate() {
            let finite = [s.t, s.total_area, s.willmore, s.min_r, s.hawking]
                .iter()
                .all(|v| v.is_finite())
                && s.r_integral.is_none_or(f64::is_finite);
            if !finite {
                return Err(TraceError::NonFinite { index: i });
            }
            if s.chi % 2 != 0 {
                return Err(TraceError::OddChi { index: i, chi: s.chi });
            }
            if i > 0 {
                let prev = &samples[i - 1];
                if s.t < prev.t {
                    return Err(TraceError::TimeOrder {
                        index: i,
                        prev: prev.t,
                        t: s.t,
                    });
                }
                if s.t == prev.t && !is_event_pair(prev, s) {
                    return Err(TraceError::RepeatedTime { index: i, t: s.t });
                }
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn initial_area(&self) -> f64 {
        self.samples[0].total_area
    }

    pub fn t_end(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    /// Index of the last sample with time `≤ t` (the post-event state at an event time).
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let k = self.samples.partition_point(|s| s.t <= t);
        k.checked_sub(1)
    }

    /// Largest `|total_area(t) / (e^{t − t₀} A₀) − 1|` and where it occurs.
    pub fn area_law_deviation(&self) -> (f64, f64) {
        let first = &self.samples[0];
        self.samples
            .iter()
            .map(|s| {
                let expected = first.total_area * (s.t - first.t).exp();
                ((s.total_area / expected - 1.0).abs(), s.t)
            })
            .fold((0.0, first.t), |acc, x| if x.0 > acc.0 { x } else { acc })
    }

    pub fn has_exact_curvature(&self) -> bool {
        self.samples.iter().all(|s| s.r_integral.is_some())
    }

    /// Same trace with `willmore` scaled by `factor` after the first sample.
    pub fn with_inflated_willmore(&self, factor: f64) -> FlowTrace {
        let mut samples = self.samples.clone();
        for s in samples.iter_mut().skip(1) {
            s.willmore *= factor;
            s.hawking = hawking_mass(s.total_area, s.willmore);
        }
        FlowTrace { samples }
    }

    /// Same trace with areas scaled by `factor` after the first sample.
    pub fn with_scaled_area(&self, factor: f64) -> FlowTrace {
        let mut samples = self.samples.clone();
        for s in samples.iter_mut().skip(1) {
            s.total_area *= factor;
            if let Some(ri) = s.r_integral.as_mut() {
                *ri *= factor;
            }
        }
        FlowTrace { samples }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.samples.len() * 160);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                fmt_f64(s.t),
                s.n_components,
                fmt_f64(s.total_area),
                s.chi,
                fmt_f64(s.willmore),
                fmt_f64(s.min_r),
                fmt_f64(s.hawking),
                u8::from(s.is_jump)
            );
        }
        out
    }

    /// Parses a trace CSV. Columns are matched by header name; `area` is
    /// accepted for `total_area` and `n_components` is optional.
    pub fn from_csv(text: &str) -> Result<Self, TraceError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or(TraceError::Empty)?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let find = |names: &[&str]| cols.iter().position(|c| names.contains(c));
        let need = |names: &[&str]| {
            find(names).ok_or_else(|| TraceError::Format(format!("missing column {}", names[0])))
        };
        let c_t = need(&["t"])?;
        let c_area = need(&["total_area", "area"])?;
        let c_chi = need(&["chi"])?;
        let c_w = need(&["willmore"])?;
        let c_r = need(&["min_R", "min_r"])?;
        let c_m = need(&["hawking"])?;
        let c_j = need(&["jump"])?;
        let c_n = find(&["n_components"]);
        let mut samples = Vec::new();
        for (row, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(TraceError::Format(format!(
                    "row {} has {} fields, header has {}",
                    row + 1,
                    fields.len(),
                    cols.len()
                )));
            }
            let num = |c: usize| {
                fields[c]
                    .parse::<f64>()
                    .map_err(|_| TraceError::Format(format!("row {}: bad number {:?}", row + 1, fields[c])))
            };
            let chi = num(c_chi)?;
            if chi.fract() != 0.0 {
                return Err(TraceError::Format(format!("row {}: chi must be an integer", row + 1)));
            }
            let jump = match fields[c_j] {
                "0" | "false" => false,
                "1" | "true" => true,
                other => return Err(TraceError::Format(format!("row {}: bad jump flag {other:?}", row + 1))),
            };
            let n_components = match c_n {
                Some(c) => num(c)? as usize,
                None => (chi / 2.0).max(0.0) as usize,
            };
            samples.push(TraceSample {
                t: num(c_t)?,
                n_components,
                total_area: num(c_area)?,
                chi: chi as i64,
                willmore: num(c_w)?,
                min_r: num(c_r)?,
                hawking: num(c_m)?,
                is_jump: jump,
                r_integral: None,
            });
        }
        FlowTrace::new(samples)
    }
}

fn is_event_pair(before: &TraceSample, after: &TraceSample) -> bool {
    after.is_jump || after.chi != before.chi || after.n_components != before.n_components
}

/// Trace of the single front described by `sol`: one sample per knot the
/// front passes smoothly, plus a before/after pair at each jump.
pub fn line_trace(sol: &FlowSolution) -> Result<FlowTrace, TraceError> {
    let p = sol.profile();
    let grid = sol.grid();
    let u = sol.u();
    let mut builder = LineBuilder::default();
    // swept-region curvature includes everything the initial hull absorbed
    let mut i = 0;
    if let Some(first) = sol.jump_regions().first().filter(|j| j.start == 0) {
        for &r in &grid[..=first.end] {
            builder.sweep(slice_geometry(p, r)?);
        }
        i = first.end;
    }
    builder.push(u[i], slice_geometry(p, grid[i])?, false);
    let mut jumps = sol.jump_regions().iter().filter(|j| j.start > 0).peekable();
    i += 1;
    while i < grid.len() {
        if let Some(jump) = jumps.next_if(|j| j.start == i) {
            let t = u[jump.start];
            if builder.samples.last().is_none_or(|s| s.t < t) {
                builder.push(t, slice_geometry(p, jump.r_entry)?, false);
            }
            for &r in &grid[jump.start..jump.end] {
                builder.sweep(slice_geometry(p, r)?);
            }
            builder.push(t, slice_geometry(p, grid[jump.end])?, true);
            i = jump.end + 1;
            continue;
        }
        let g = slice_geometry(p, grid[i])?;
        if builder.samples.last().is_some_and(|s| s.t >= u[i]) {
            // an equal-area stretch outside any jump region is also crossed
            // at once; its far end becomes the post-event sample
            let stretch_goes_on = i + 1 < grid.len() && u[i + 1] == u[i];
            if stretch_goes_on || jumps.peek().is_some_and(|j| j.start == i + 1) {
                builder.sweep(g);
            } else {
                builder.push_event(u[i], g);
            }
        } else {
            builder.push(u[i], g, false);
        }
        i += 1;
    }
    FlowTrace::new(builder.samples)
}

/// Trace of `sol` at the requested times (sorted, within the solved range),
/// with before/after pairs inserted at jumps that fall between them.
pub fn line_trace_at_times(sol: &FlowSolution, times: &[f64]) -> Result<FlowTrace, TraceError> {
    let p = sol.profile();
    let grid = sol.grid();
    let u = sol.u();
    let mut builder = LineBuilder::default();
    let mut swept = 0;
    let mut jumps = sol.jump_regions().iter().filter(|j| j.start > 0).peekable();
    for &t in times {
        while let Some(jump) = jumps.next_if(|j| u[j.start] <= t) {
            let tj = u[jump.start];
            while swept < jump.start {
                builder.sweep(slice_geometry(p, grid[swept])?);
                swept += 1;
            }
            if builder.samples.last().is_none_or(|s| s.t < tj) {
                builder.push(tj, slice_geometry(p, jump.r_entry)?, false);
            }
            while swept < jump.end {
                builder.sweep(slice_geometry(p, grid[swept])?);
                swept += 1;
            }
            builder.push(tj, slice_geometry(p, grid[jump.end])?, true);
        }
        if builder.samples.last().is_some_and(|s| s.t == t) {
            continue;
        }
        let r = sol.front_position(t).ok_or_else(|| {
            TraceError::Format(format!("time {t} outside the solved range [0, {}]", sol.final_time()))
        })?;
        while swept < grid.len() && grid[swept] <= r {
            builder.sweep(slice_geometry(p, grid[swept])?);
            swept += 1;
        }
        builder.push(t, slice_geometry(p, r)?, false);
    }
    FlowTrace::new(builder.samples)
}

#[derive(Default)]
struct LineBuilder {
    samples: Vec<TraceSample>,
    min_r: f64,
    started: bool,
}

impl LineBuilder {
    fn sweep(&mut self, g: SliceGeometry) {
        let r = g.scalar_curvature_ambient;
        self.min_r = if self.started { self.min_r.min(r) } else { r };
        self.started = true;
    }

    /// Post-event sample at the time of the last sample, keeping at most
    /// one before/after pair per time.
    fn push_event(&mut self, t: f64, g: SliceGeometry) {
        let n = self.samples.len();
        if n >= 2 && self.samples[n - 2].t == t {
            self.samples.pop();
        }
        self.push(t, g, true);
    }

    fn push(&mut self, t: f64, g: SliceGeometry, is_jump: bool) {
        self.sweep(g);
        self.samples.push(TraceSample {
            t,
            n_components: 1,
            total_area: g.area,
            chi: 2,
            willmore: g.willmore,
            min_r: self.min_r,
            hawking: g.hawking_mass,
            is_jump,
            r_integral: Some(g.scalar_curvature_ambient * g.area),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::WarpProfile;
    use crate::imcf::solve_weak_imcf;
    use std::f64::consts::PI;

    fn sample(t: f64, chi: i64, jump: bool) -> TraceSample {
        TraceSample {
            t,
            n_components: (chi / 2) as usize,
            total_area: 4.0 * PI * t.exp(),
            chi,
            willmore: 16.0 * PI,
            min_r: 0.0,
            hawking: 0.0,
            is_jump: jump,
            r_integral: None,
        }
    }

    #[test]
    fn rejects_bad_orderings() {
        assert!(matches!(FlowTrace::new(vec![]), Err(TraceError::Empty)));
        let back = vec![sample(0.0, 2, false), sample(-0.1, 2, false)];
        assert!(matches!(FlowTrace::new(back), Err(TraceError::TimeOrder { .. })));
        let dup = vec![sample(0.0, 2, false), sample(0.0, 2, false)];
        assert!(matches!(FlowTrace::new(dup), Err(TraceError::RepeatedTime { .. })));
        let odd = vec![sample(0.0, 3, false)];
        assert!(matches!(FlowTrace::new(odd), Err(TraceError::OddChi { .. })));
        let event = vec![sample(0.0, 2, false), sample(0.5, 2, false), sample(0.5, 4, false)];
        assert!(FlowTrace::new(event).is_ok());
    }

    #[test]
    fn csv_roundtrip_is_byte_identical() {
        let p = WarpProfile::flat(1.0, 3.0, 40).unwrap();
        let trace = line_trace(&solve_weak_imcf(&p, 1.0).unwrap()).unwrap();
        let csv = trace.to_csv();
        let back = FlowTrace::from_csv(&csv).unwrap();
        assert_eq!(back.to_csv(), csv);
        assert_eq!(back.len(), trace.len());
    }

    #[test]
    fn csv_accepts_short_header() {
        let text = "t,area,chi,willmore,min_R,hawking,jump\n0,12.5,2,50.2,0,0,0\n0.5,20.6,2,50.2,0,0,0\n";
        let trace = FlowTrace::from_csv(text).unwrap();
        assert_eq!(trace.samples()[1].n_components, 1);
        assert!(FlowTrace::from_csv("t,chi\n0,2\n").is_err());
        assert!(FlowTrace::from_csv("t,area,chi,willmore,min_R,hawking,jump\n0,1,2,1,0,0,maybe\n").is_err());
    }

    #[test]
    fn flat_line_trace_follows_area_law() {
        let p = WarpProfile::flat(1.0, 5.0, 200).unwrap();
        let sol = solve_weak_imcf(&p, 1.0).unwrap();
        let trace = line_trace(&sol).unwrap();
        assert_eq!(trace.len(), 201);
        assert!(trace.area_law_deviation().0 < 1e-12);
        let times: Vec<f64> = (0..=30).map(|k| k as f64 * 0.1).collect();
        let sampled = line_trace_at_times(&sol, &times).unwrap();
        assert_eq!(sampled.len(), 31);
        assert!(sampled.area_law_deviation().0 < 1e-4);
    }

    #[test]
    fn equal_area_stretch_becomes_one_event_pair() {
        // cone, then a cylinder piece, then cone again
        let grid: Vec<f64> = (0..=30).map(|k| k as f64 * 0.1).collect();
        let phi = grid.iter().map(|&r| 1.0 + r.min(1.0) + (r - 2.0).max(0.0)).collect();
        let sol = solve_weak_imcf(&WarpProfile::sampled(grid, phi).unwrap(), 0.0).unwrap();
        let trace = line_trace(&sol).unwrap();
        let s = trace.samples();
        let pairs: Vec<usize> = (1..s.len()).filter(|&k| s[k].t == s[k - 1].t).collect();
        assert_eq!(pairs.len(), 1);
        let k = pairs[0];
        assert!(s[k].is_jump);
        assert_eq!(s[k].total_area, s[k - 1].total_area);
        assert!((s[k].t - 4f64.ln()).abs() < 1e-12);
        assert!(trace.area_law_deviation().0 < 1e-12);
    }
}
