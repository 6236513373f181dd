//! Audits of a [`FlowTrace`] against the inequality chain of the weak flow:
//! the integral Geroch monotonicity, its Gronwall form, Hawking mass
//! monotonicity, and the two systolic bounds.

use std::f64::consts::{PI, SQRT_2};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::textfmt::fmt_f64;
use crate::trace::{FlowTrace, TraceSample};

/// `tol_int = TOL_INT_CONST · (Δt² · max|integrand| + Σ local trapezoid error estimates)`.
pub const TOL_INT_CONST: f64 = 10.0;

/// Traces coarser than this cannot meet the second-order budget.
pub const MAX_TRACE_STEP: f64 = 0.1;

/// Relative rounding allowance added to every one-sided comparison.
const ROUNDING: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuditError {
    #[error("trace too sparse: step {dt:.3e} at t = {t:.6} exceeds {max:.1e}")]
    SparseTrace { dt: f64, t: f64, max: f64 },
    #[error("interval [{t1}, {t2}] not inside the trace range [{lo}, {hi}]")]
    OutOfRange { t1: f64, t2: f64, lo: f64, hi: f64 },
    #[error("curvature floor {lambda} violated: min R = {min_r} at t = {t}")]
    CurvatureFloorViolated { lambda: f64, min_r: f64, t: f64 },
    #[error("precondition unmet: {0}")]
    PreconditionUnmet(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GerochOutcome {
    /// `H(t₂) − H(t₁) − ∫[4πχ − ∫R − ½H]`; nonpositive for a valid flow.
    pub residual: f64,
    pub tol: f64,
    /// Whether the two-sided equality check applied (smooth stretch, exact R).
    pub equality_checked: bool,
    pub contains_jump: bool,
    pub pass: bool,
}

/// Integral Geroch check between the samples at `t1` and `t2` (the
/// post-event sample when a time carries an event).
pub fn geroch_check(trace: &FlowTrace, t1: f64, t2: f64, tol_scale: f64) -> Result<GerochOutcome, AuditError> {
    let (lo, hi) = (trace.samples()[0].t, trace.t_end());
    if !(t1 <= t2) || t1 < lo || t2 > hi {
        return Err(AuditError::OutOfRange { t1, t2, lo, hi });
    }
    let i = trace.index_at(t1).unwrap_or(0);
    let j = trace.index_at(t2).unwrap_or(0);
    geroch_between(trace, i, j, tol_scale)
}

/// Index form of [`geroch_check`].
pub fn geroch_between(trace: &FlowTrace, i: usize, j: usize, tol_scale: f64) -> Result<GerochOutcome, AuditError> {
    let s = trace.samples();
    let mut acc = GerochAccumulator::default();
    for k in i..j {
        acc.add(&cell(s, k)?);
    }
    Ok(acc.outcome(&s[i], &s[j], tol_scale))
}

/// Per-cell pieces of the Geroch quadrature between samples `k` and `k + 1`.
struct Cell {
    dt: f64,
    trapezoid: f64,
    abs_trapezoid: f64,
    max_f: f64,
    /// `dt³·|f″|/12` with `f″` from divided differences of neighbouring cells.
    curvature_error: f64,
    jump: bool,
    exact: bool,
}

fn cell(s: &[TraceSample], k: usize) -> Result<Cell, AuditError> {
    let (a, b) = (&s[k], &s[k + 1]);
    let dt = b.t - a.t;
    if dt > MAX_TRACE_STEP {
        return Err(AuditError::SparseTrace {
            dt,
            t: a.t,
            max: MAX_TRACE_STEP,
        });
    }
    let (fa, fb) = (geroch_integrand(a), geroch_integrand(b));
    let slope = |m: usize| -> Option<(f64, f64)> {
        let d = s[m + 1].t - s[m].t;
        (d > 0.0).then(|| ((geroch_integrand(&s[m + 1]) - geroch_integrand(&s[m])) / d, d))
    };
    let mut curvature: f64 = 0.0;
    let mut found = 0;
    if let Some((here, _)) = slope(k) {
        let neighbours = [k.checked_sub(1), (k + 2 < s.len()).then_some(k + 1)];
        for m in neighbours.into_iter().flatten() {
            if let Some((other, d)) = slope(m) {
                curvature = curvature.max(2.0 * (here - other).abs() / (dt + d));
                found += 1;
            }
        }
    }
    let mut curvature_error = dt * dt * dt * curvature / 12.0;
    if found < 2 {
        // one-sided differences miss the √t start of a front leaving a
        // minimal slice; fall back to the bound for a monotone integrand
        curvature_error = curvature_error.max(0.5 * dt * (fb - fa).abs());
    }
    Ok(Cell {
        dt,
        trapezoid: 0.5 * dt * (fa + fb),
        abs_trapezoid: 0.5 * dt * (fa.abs() + fb.abs()),
        max_f: fa.abs().max(fb.abs()),
        curvature_error,
        jump: b.is_jump,
        exact: a.r_integral.is_some() && b.r_integral.is_some(),
    })
}

#[derive(Default, Clone, Copy)]
struct GerochAccumulator {
    integral: f64,
    abs_sum: f64,
    max_f: f64,
    max_dt: f64,
    curvature_error: f64,
    contains_jump: bool,
    inexact: bool,
}

impl GerochAccumulator {
    fn add(&mut self, c: &Cell) {
        self.integral += c.trapezoid;
        self.abs_sum += c.abs_trapezoid;
        self.max_f = self.max_f.max(c.max_f);
        self.max_dt = self.max_dt.max(c.dt);
        self.curvature_error += c.curvature_error;
        self.contains_jump |= c.jump;
        self.inexact |= !c.exact;
    }

    fn outcome(&self, first: &TraceSample, last: &TraceSample, tol_scale: f64) -> GerochOutcome {
        let residual = last.willmore - first.willmore - self.integral;
        let rounding = ROUNDING * (first.willmore.abs() + last.willmore.abs() + self.abs_sum);
        let budget = self.max_dt * self.max_dt * self.max_f + self.curvature_error;
        let tol = tol_scale * TOL_INT_CONST * budget + rounding;
        let equality_checked = !self.contains_jump && !self.inexact && first.r_integral.is_some();
        let pass = residual <= tol && (!equality_checked || residual >= -tol);
        GerochOutcome {
            residual,
            tol,
            equality_checked,
            contains_jump: self.contains_jump,
            pass,
        }
    }
}

/// `4πχ − ∫_Σ R − ½H`, with `∫R` bounded below by `min_R · |Σ|` when the
/// exact integral is not carried by the trace.
fn geroch_integrand(s: &TraceSample) -> f64 {
    let r_int = s.r_integral.unwrap_or(s.min_r * s.total_area);
    4.0 * PI * s.chi as f64 - r_int - 0.5 * s.willmore
}

/// Worst Geroch outcome over every consecutive interval and every prefix
/// interval `[t₀, tᵢ]`. Returns the failing (or, when all pass, the
/// largest normalized) outcome and its end time.
pub fn geroch_sweep(trace: &FlowTrace, tol_scale: f64) -> Result<(GerochOutcome, f64), AuditError> {
    let s = trace.samples();
    let mut worst: Option<(GerochOutcome, f64)> = None;
    let mut consider = |o: GerochOutcome, t: f64| {
        let score = |o: &GerochOutcome| {
            let lower = if o.equality_checked { -o.residual } else { f64::NEG_INFINITY };
            (o.residual.max(lower) - o.tol) / o.tol.max(f64::MIN_POSITIVE)
        };
        let replace = match &worst {
            None => true,
            Some((w, _)) => (!o.pass && w.pass) || (o.pass == w.pass && score(&o) > score(w)),
        };
        if replace {
            worst = Some((o, t));
        }
    };
    let mut prefix = GerochAccumulator::default();
    for k in 1..s.len() {
        let c = cell(s, k - 1)?;
        let mut single = GerochAccumulator::default();
        single.add(&c);
        prefix.add(&c);
        consider(single.outcome(&s[k - 1], &s[k], tol_scale), s[k].t);
        consider(prefix.outcome(&s[0], &s[k], tol_scale), s[k].t);
    }
    Ok(worst.unwrap_or((
        GerochOutcome {
            residual: 0.0,
            tol: 0.0,
            equality_checked: false,
            contains_jump: false,
            pass: true,
        },
        s[0].t,
    )))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GronwallOutcome {
    /// Sample time the check was evaluated at.
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Checks `H(t) ≤ H(0)e^{−t/2} + 4πe^{−t/2}∫₀ᵗ e^{s/2}χ ds − ⅔λ|Σ₀|(e^t − e^{−t/2})`
/// at the last sample with time `≤ t`. Times are measured from the first sample.
pub fn gronwall_bound(trace: &FlowTrace, lambda: f64, t: f64, tol_scale: f64) -> Result<GronwallOutcome, AuditError> {
    let s = trace.samples();
    let t0 = s[0].t;
    if t < t0 || t > trace.t_end() {
        return Err(AuditError::OutOfRange {
            t1: t,
            t2: t,
            lo: t0,
            hi: trace.t_end(),
        });
    }
    let j = trace.index_at(t).unwrap_or(0);
    let mut last = None;
    gronwall_scan(trace, lambda, tol_scale, j, |o| last = Some(o))?;
    Ok(last.expect("the scan visits sample j"))
}

/// [`gronwall_bound`] at every sample, in one pass.
pub fn gronwall_sweep(trace: &FlowTrace, lambda: f64, tol_scale: f64) -> Result<Vec<GronwallOutcome>, AuditError> {
    let mut out = Vec::with_capacity(trace.len());
    gronwall_scan(trace, lambda, tol_scale, trace.len() - 1, |o| out.push(o))?;
    Ok(out)
}

fn gronwall_scan(
    trace: &FlowTrace,
    lambda: f64,
    tol_scale: f64,
    upto: usize,
    mut visit: impl FnMut(GronwallOutcome),
) -> Result<(), AuditError> {
    let s = trace.samples();
    let t0 = s[0].t;
    if let Some(bad) = s[..=upto].iter().find(|x| x.min_r < lambda) {
        return Err(AuditError::CurvatureFloorViolated {
            lambda,
            min_r: bad.min_r,
            t: bad.t,
        });
    }
    let weight = |x: &TraceSample| 4.0 * PI * ((x.t - t0) / 2.0).exp() * x.chi as f64;
    let a0 = s[0].total_area;
    let mut integral = 0.0;
    let mut max_f: f64 = weight(&s[0]).abs();
    let mut max_dt: f64 = 0.0;
    for j in 0..=upto {
        if j > 0 {
            let dt = s[j].t - s[j - 1].t;
            integral += 0.5 * dt * (weight(&s[j - 1]) + weight(&s[j]));
            max_f = max_f.max(weight(&s[j]).abs());
            max_dt = max_dt.max(dt);
        }
        let tau = s[j].t - t0;
        let decay = (-tau / 2.0).exp();
        let lhs = s[j].willmore;
        let rhs = s[0].willmore * decay + decay * integral - (2.0 / 3.0) * lambda * a0 * (tau.exp() - decay);
        let rounding = ROUNDING * (lhs.abs() + s[0].willmore.abs() + integral.abs() + (lambda * a0 * tau.exp()).abs());
        let tol = tol_scale * TOL_INT_CONST * max_dt * max_dt * max_f * tau.max(1.0) + rounding;
        visit(GronwallOutcome {
            t: s[j].t,
            lhs,
            rhs,
            tol,
            pass: lhs <= rhs + tol,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HawkingOutcome {
    /// Smallest increment `m_H(t_{i+1}) − m_H(t_i)` and where it ends.
    pub residual: f64,
    pub at_t: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Hawking mass monotonicity; requires `R ≥ 0` and `χ = 2` along the trace.
pub fn hawking_monotone_check(trace: &FlowTrace, tol_scale: f64) -> Result<HawkingOutcome, AuditError> {
    let s = trace.samples();
    if let Some(bad) = s.iter().find(|x| x.chi > 2) {
        return Err(AuditError::PreconditionUnmet(format!(
            "chi = {} > 2 at t = {}",
            bad.chi, bad.t
        )));
    }
    // R·|Σ| is scale free, so the rounding allowance is too
    if let Some(bad) = s.iter().find(|x| x.min_r * x.total_area < -ROUNDING * 4.0 * PI) {
        return Err(AuditError::PreconditionUnmet(format!(
            "negative scalar curvature {} at t = {}",
            bad.min_r, bad.t
        )));
    }
    let mut worst = (f64::INFINITY, s[0].t);
    let mut max_dt: f64 = 0.0;
    let mut max_m: f64 = 0.0;
    for w in s.windows(2) {
        let inc = w[1].hawking - w[0].hawking;
        if inc < worst.0 {
            worst = (inc, w[1].t);
        }
        max_dt = max_dt.max(w[1].t - w[0].t);
        max_m = max_m.max(w[0].hawking.abs()).max(w[1].hawking.abs());
    }
    if s.len() < 2 {
        worst = (0.0, s[0].t);
    }
    let tol = tol_scale * TOL_INT_CONST * max_dt * max_dt * max_m + ROUNDING * max_m.max(1e-3);
    Ok(HawkingOutcome {
        residual: worst.0,
        at_t: worst.1,
        tol,
        pass: worst.0 >= -tol,
    })
}

/// `24π(2 − √2)/(4 − √2) ≈ 5.44π`.
pub fn gap_constant() -> f64 {
    24.0 * PI * (2.0 - SQRT_2) / (4.0 - SQRT_2)
}

/// The same constant read off the `t = log 2` evaluation
/// `0 ≤ 16π(1 − 1/√2) − ⅔λA₀(2 − 1/√2)`.
pub fn gap_constant_from_log2() -> f64 {
    let inv = 1.0 / SQRT_2;
    16.0 * PI * (1.0 - inv) / ((2.0 / 3.0) * (2.0 - inv))
}

/// `16π(1 − 1/√2) − ⅔λA₀(2 − 1/√2)`, nonnegative exactly when the gap bound holds.
pub fn log2_margin(lambda: f64, a0: f64) -> f64 {
    let inv = 1.0 / SQRT_2;
    16.0 * PI * (1.0 - inv) - (2.0 / 3.0) * lambda * a0 * (2.0 - inv)
}

pub const BBN_BOUND: f64 = 8.0 * PI;

/// Relative slack on both bounds so equality cases survive rounding of `λ·A₀`.
pub const BOUND_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    /// `sys π₂ · min R ≤ 8π`.
    Bbn,
    /// `sys π₂ · min R ≤ c ≈ 5.44π`.
    Gap,
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Bbn => write!(f, "8pi"),
            Bound::Gap => write!(f, "c"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapVerdict {
    pub lambda: f64,
    pub a0: f64,
    pub product: f64,
    pub bound_used: Bound,
    pub bound_value: f64,
    pub c_value: f64,
    /// `16π(1 − 1/√2) − ⅔λA₀(2 − 1/√2)`.
    pub log2_margin: f64,
    /// `|c − c_log2| / π` between the two algebraic forms of the constant.
    pub form_discrepancy: f64,
    pub pass: bool,
}

fn check_bound_inputs(lambda: f64, a0: f64) -> Result<(), AuditError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(AuditError::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
    }
    if !(a0 > 0.0 && a0.is_finite()) {
        return Err(AuditError::InvalidInput(format!("A0 must be > 0, got {a0}")));
    }
    Ok(())
}

/// Tests `λ·A₀ ≤ c`. The verdict also carries the `t = log 2` margin,
/// whose sign must agree with the pass flag.
pub fn gap_certificate(lambda: f64, a0: f64) -> Result<GapVerdict, AuditError> {
    check_bound_inputs(lambda, a0)?;
    let c = gap_constant();
    let discrepancy = (c - gap_constant_from_log2()).abs() / PI;
    let product = lambda * a0;
    let margin = log2_margin(lambda, a0);
    let pass = product <= c * (1.0 + BOUND_REL_TOL);
    // the margin form carries its own rounding; only compare away from the boundary
    let boundary = (product - c).abs() <= BOUND_REL_TOL * c;
    if !boundary && pass != (margin >= 0.0) {
        return Err(AuditError::InvalidInput(format!(
            "gap forms disagree at lambda*A0 = {product}: margin {margin}"
        )));
    }
    Ok(GapVerdict {
        lambda,
        a0,
        product,
        bound_used: Bound::Gap,
        bound_value: c,
        c_value: c,
        log2_margin: margin,
        form_discrepancy: discrepancy,
        pass,
    })
}

/// Tests `λ·A₀ ≤ 8π`.
pub fn bbn_bound(lambda: f64, a0: f64) -> Result<GapVerdict, AuditError> {
    check_bound_inputs(lambda, a0)?;
    let c = gap_constant();
    let product = lambda * a0;
    Ok(GapVerdict {
        lambda,
        a0,
        product,
        bound_used: Bound::Bbn,
        bound_value: BBN_BOUND,
        c_value: c,
        log2_margin: log2_margin(lambda, a0),
        form_discrepancy: (c - gap_constant_from_log2()).abs() / PI,
        pass: product <= BBN_BOUND * (1.0 + BOUND_REL_TOL),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::NotApplicable => "n/a",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    pub name: String,
    pub status: CheckStatus,
    pub worst_residual: f64,
    pub location_t: f64,
    pub note: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub checks: Vec<CheckRecord>,
}

impl AuditReport {
    pub fn push(&mut self, name: &str, status: CheckStatus, worst_residual: f64, location_t: f64, note: impl Into<String>) {
        self.checks.push(CheckRecord {
            name: name.to_string(),
            status,
            worst_residual,
            location_t,
            note: note.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// 0 when every applicable check passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(out, "[[check]]");
            let _ = writeln!(out, "name = \"{}\"", c.name);
            let _ = writeln!(out, "status = \"{}\"", c.status);
            let _ = writeln!(out, "worst_residual = {}", fmt_f64(c.worst_residual));
            let _ = writeln!(out, "location_t = {}", fmt_f64(c.location_t));
            let _ = writeln!(out, "note = {:?}", c.note);
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditOptions {
    /// Certified curvature floor; defaults to the trace's own `min_R`.
    pub lambda: Option<f64>,
    /// Initial (systolic) area for the bound checks.
    pub a0: Option<f64>,
    /// Relative tolerance of the exponential area law.
    pub area_tol: f64,
    pub tol_scale: f64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            lambda: None,
            a0: None,
            area_tol: 1e-2,
            tol_scale: 1.0,
        }
    }
}

/// Runs every applicable check on `trace`.
pub fn audit_trace(trace: &FlowTrace, opts: &AuditOptions) -> AuditReport {
    let mut report = AuditReport::default();
    let s = trace.samples();

    let (dev, at) = trace.area_law_deviation();
    report.push(
        "area_law",
        status(dev <= opts.area_tol),
        dev,
        at,
        format!("relative deviation from e^t A0, tolerance {:.3e}", opts.area_tol),
    );

    match geroch_sweep(trace, opts.tol_scale) {
        Ok((o, t)) => {
            let note = if trace.has_exact_curvature() {
                "exact slice curvature; equality checked on smooth stretches"
            } else {
                "one-sided: dropped gradient and traceless terms cannot be reconstructed"
            };
            report.push("geroch", status(o.pass), o.residual, t, note);
        }
        Err(e) => report.push("geroch", CheckStatus::Fail, f64::NAN, s[0].t, e.to_string()),
    }

    let floor = s[s.len() - 1].min_r;
    let lambda = opts.lambda.unwrap_or(floor);
    match gronwall_sweep(trace, lambda, opts.tol_scale) {
        Err(e) => report.push("gronwall", CheckStatus::Fail, f64::NAN, s[0].t, e.to_string()),
        Ok(all) => {
            let gap = |o: &GronwallOutcome| o.lhs - o.rhs - o.tol;
            let o = all
                .iter()
                .copied()
                .reduce(|w, o| if gap(&o) > gap(&w) { o } else { w })
                .expect("traces are nonempty");
            report.push(
                "gronwall",
                status(all.iter().all(|o| o.pass)),
                o.lhs - o.rhs,
                o.t,
                format!("lambda = {}", fmt_f64(lambda)),
            );
        }
    }

    match hawking_monotone_check(trace, opts.tol_scale) {
        Ok(o) => report.push("hawking_monotone", status(o.pass), o.residual, o.at_t, ""),
        Err(e) => report.push("hawking_monotone", CheckStatus::NotApplicable, f64::NAN, s[0].t, e.to_string()),
    }

    if let (Some(lambda), Some(a0)) = (opts.lambda, opts.a0) {
        push_bounds(&mut report, lambda, a0);
    }
    report
}

/// Appends the `bbn_bound` and `gap_certificate` records.
pub fn push_bounds(report: &mut AuditReport, lambda: f64, a0: f64) {
    for (name, verdict) in [("bbn_bound", bbn_bound(lambda, a0)), ("gap_certificate", gap_certificate(lambda, a0))] {
        match verdict {
            Ok(v) => report.push(
                name,
                status(v.pass),
                v.product - v.bound_value,
                0.0,
                format!(
                    "lambda*A0 = {:.6}*pi against {} = {:.6}*pi",
                    v.product / PI,
                    v.bound_used,
                    v.bound_value / PI
                ),
            ),
            Err(e) => report.push(name, CheckStatus::Fail, f64::NAN, 0.0, e.to_string()),
        }
    }
}

fn status(ok: bool) -> CheckStatus {
    if ok {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_sample(t: f64) -> TraceSample {
        TraceSample {
            t,
            n_components: 1,
            total_area: 4.0 * PI * t.exp(),
            chi: 2,
            willmore: 16.0 * PI,
            min_r: 0.0,
            hawking: 0.0,
            is_jump: false,
            r_integral: Some(0.0),
        }
    }

    fn flat_trace(n: usize, t_end: f64) -> FlowTrace {
        FlowTrace::new((0..=n).map(|k| flat_sample(t_end * k as f64 / n as f64)).collect()).unwrap()
    }

    #[test]
    fn degenerate_interval_is_zero() {
        let tr = flat_trace(20, 1.0);
        let o = geroch_check(&tr, 0.5, 0.5, 1.0).unwrap();
        assert_eq!(o.residual, 0.0);
        assert!(o.pass);
    }

    #[test]
    fn flat_geroch_equality() {
        let tr = flat_trace(100, 2.0);
        let o = geroch_check(&tr, 0.0, 2.0, 1.0).unwrap();
        assert_eq!(o.residual, 0.0);
        assert!(o.equality_checked && o.pass);
    }

    #[test]
    fn sparse_trace_is_rejected() {
        let tr = flat_trace(4, 2.0);
        assert!(matches!(geroch_check(&tr, 0.0, 2.0, 1.0), Err(AuditError::SparseTrace { .. })));
        assert!(matches!(geroch_check(&tr, 0.0, 3.0, 1.0), Err(AuditError::OutOfRange { .. })));
    }

    #[test]
    fn gronwall_trivial_at_zero() {
        let tr = flat_trace(50, 1.0);
        let o = gronwall_bound(&tr, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(o.lhs, o.rhs);
        assert_eq!(o.lhs, 16.0 * PI);
    }

    #[test]
    fn gronwall_floor_violation() {
        let tr = flat_trace(50, 1.0);
        assert!(matches!(
            gronwall_bound(&tr, 0.5, 1.0, 1.0),
            Err(AuditError::CurvatureFloorViolated { .. })
        ));
    }

    #[test]
    fn hawking_preconditions() {
        let mut samples: Vec<TraceSample> = (0..10).map(|k| flat_sample(0.05 * k as f64)).collect();
        samples[5].chi = 4;
        samples[5].n_components = 2;
        samples[6].chi = 4;
        samples[6].n_components = 2;
        let tr = FlowTrace::new(samples).unwrap();
        assert!(matches!(hawking_monotone_check(&tr, 1.0), Err(AuditError::PreconditionUnmet(_))));
        let ok = hawking_monotone_check(&flat_trace(10, 0.5), 1.0).unwrap();
        assert!(ok.pass && ok.residual == 0.0);
    }

    #[test]
    fn constant_forms_agree() {
        assert!((gap_constant() - gap_constant_from_log2()).abs() < 1e-12 * PI);
        assert!(gap_constant() < BBN_BOUND);
    }

    #[test]
    fn bound_examples() {
        assert!(gap_certificate(5.0 * PI, 1.0).unwrap().pass);
        assert!(gap_certificate(0.0, 3.0).unwrap().pass);
        assert!(!gap_certificate(8.0 * PI, 1.0).unwrap().pass);
        assert!(bbn_bound(8.0 * PI, 1.0).unwrap().pass);
        assert!(!bbn_bound(8.1 * PI, 1.0).unwrap().pass);
        assert!(bbn_bound(gap_constant(), 1.0).unwrap().pass);
        assert!(gap_certificate(-1.0, 1.0).is_err());
        assert!(bbn_bound(1.0, 0.0).is_err());
    }

    #[test]
    fn report_exit_codes() {
        let mut r = AuditReport::default();
        r.push("a", CheckStatus::Pass, 0.0, 0.0, "");
        r.push("b", CheckStatus::NotApplicable, f64::NAN, 0.0, "");
        assert_eq!(r.exit_code(), 0);
        r.push("c", CheckStatus::Fail, 1.0, 0.0, "");
        assert_eq!(r.exit_code(), 1);
        assert_eq!(r.failures().count(), 1);
        assert!(r.to_text().contains("status = \"fail\""));
    }
}
