//! Executes scenarios and turns their results into audit reports.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_xoshiro::SplitMix64;
use rayon::prelude::*;
use weak_imcf::audit::*;
use weak_imcf::geometry::{slice_area, ProfileKind, WarpProfile, MIN_SAMPLED_INTERVALS};
use weak_imcf::imcf::{solve_weak_imcf, verify_weak_solution, FlowSolution, ImcfError};
use weak_imcf::models::{min_scalar_curvature, random_dumbbell_tree, random_psc_dumbbell, star_tree};
use weak_imcf::neck::{barrier_length, build_neck, stability_first_eigen, AxisymSurface, NeckError};
use weak_imcf::textfmt::fmt_f64;
use weak_imcf::trace::{line_trace, FlowTrace};
use weak_imcf::tree::{build_tree, chi_of, solve_tree_flow, TreeError, TreeFlowResult, TreeManifold, TreeSpec};

use crate::output::write_artifacts;
use crate::scenario::{Kind, Model, Scenario, SurfaceInput};
use crate::{ConfigError, EXIT_CONFIG, EXIT_FAIL, EXIT_PASS};

const DEFAULT_LINE_INTERVALS: usize = 4096;
const DEFAULT_TREE_INTERVALS: usize = 2048;
const DEFAULT_NECK_INTERVALS: usize = 400;
const DEFAULT_TRIALS: usize = 1000;
/// Slack on the neck's curvature floor.
const NECK_FLOOR_TOL: f64 = 1e-6;

/// Command-line overrides applied on top of a scenario.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol_scale: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub name: String,
    pub kind: Kind,
    pub report: AuditReport,
    pub quantities: BTreeMap<String, f64>,
    /// `(file name, contents)` pairs.
    pub artifacts: Vec<(String, String)>,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code()
    }

    pub fn report_text(&self) -> String {
        let mut out = String::new();
        let verdict = if self.report.passed() { "pass" } else { "fail" };
        let _ = writeln!(out, "scenario = {:?}", self.name);
        let _ = writeln!(out, "kind = {:?}", self.kind.name());
        let _ = writeln!(out, "verdict = {verdict:?}");
        let _ = writeln!(out, "exit_code = {}", self.exit_code());
        let _ = writeln!(out, "\n[quantities]");
        for (k, v) in &self.quantities {
            let _ = writeln!(out, "{k} = {}", fmt_f64(*v));
        }
        out.push('\n');
        out.push_str(&self.report.to_text());
        out
    }

    /// Writes the artifacts plus `report.txt` into `out/<name>`.
    pub fn write(&self, out: &Path) -> Result<PathBuf, ConfigError> {
        let mut files = self.artifacts.clone();
        files.push(("report.txt".into(), self.report_text()));
        write_artifacts(out, &self.name, &files)
    }
}

struct Run {
    report: AuditReport,
    quantities: BTreeMap<String, f64>,
    artifacts: Vec<(String, String)>,
}

impl Run {
    fn new() -> Self {
        Self {
            report: AuditReport::default(),
            quantities: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    fn quantity(&mut self, name: &str, v: f64) {
        self.quantities.insert(name.to_string(), v);
    }

    fn artifact(&mut self, name: &str, contents: String) {
        self.artifacts.push((name.to_string(), contents));
    }
}

fn status(ok: bool) -> CheckStatus {
    if ok {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    }
}

fn input_err(e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Input(e.to_string())
}

fn read(s: &Scenario, p: &Path) -> Result<String, ConfigError> {
    let path = s.resolve(p);
    std::fs::read_to_string(&path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))
}

/// Runs one scenario. Configuration and input problems are errors; audit
/// failures are reported in the returned output.
pub fn run_scenario(s: &Scenario, ov: Overrides) -> Result<RunOutput, ConfigError> {
    let seed = ov.seed.or(s.parameters.seed).unwrap_or(0);
    let tol_scale = ov.tol_scale.or(s.parameters.tol_scale).unwrap_or(1.0);
    if !(tol_scale > 0.0) {
        return Err(ConfigError::Invalid(format!("tol_scale must be positive, got {tol_scale}")));
    }
    let mut run = Run::new();
    match s.kind {
        Kind::LineFlow => line_flow(s, seed, tol_scale, &mut run)?,
        Kind::TreeFlow => tree_flow(s, seed, tol_scale, &mut run)?,
        Kind::AuditOnly => audit_only(s, tol_scale, &mut run)?,
        Kind::NeckBuild => neck_build(s, &mut run)?,
        Kind::GapCheck => {
            let (lambda, a0) = (s.parameters.lambda.unwrap_or_default(), s.parameters.a0.unwrap_or_default());
            gap_check(lambda, a0, &mut run)?;
        }
    }
    apply_expectations(s, &mut run)?;
    Ok(RunOutput {
        name: s.name.clone(),
        kind: s.kind,
        report: run.report,
        quantities: run.quantities,
        artifacts: run.artifacts,
    })
}

fn audit_options(s: &Scenario, tol_scale: f64) -> AuditOptions {
    AuditOptions {
        lambda: s.parameters.lambda,
        a0: s.parameters.a0,
        area_tol: s.parameters.area_tol.unwrap_or(AuditOptions::default().area_tol),
        tol_scale,
    }
}

fn trace_quantities(trace: &FlowTrace, run: &mut Run) {
    let s = trace.samples();
    let last = &s[s.len() - 1];
    run.quantity("initial_area", trace.initial_area());
    run.quantity("t_end", trace.t_end());
    run.quantity("final_willmore", last.willmore);
    run.quantity("final_hawking", last.hawking);
    run.quantity("min_R", last.min_r);
    run.quantity("max_willmore_error_16pi", s.iter().map(|x| (x.willmore - 16.0 * PI).abs()).fold(0.0, f64::max));
    run.quantity("max_abs_hawking", s.iter().map(|x| x.hawking.abs()).fold(0.0, f64::max));
    run.quantity("area_law_deviation", trace.area_law_deviation().0);
}

fn line_profile(s: &Scenario, seed: u64) -> Result<WarpProfile, ConfigError> {
    let i = &s.inputs;
    let n = s.parameters.intervals;
    let p = if let Some(doc) = &i.profile {
        doc.clone().build().map_err(input_err)?
    } else if let Some(path) = &i.profile_file {
        WarpProfile::from_text(&read(s, path)?).map_err(input_err)?
    } else if let Some(Model::PscDumbbell { start_phi, slope, length }) = &i.model {
        if !(slope[0] < slope[1] && slope[0] > 0.0 && *start_phi > 0.0 && *length > 0.0) {
            return Err(ConfigError::Invalid("psc-dumbbell needs 0 < slope[0] < slope[1], start_phi > 0, length > 0".into()));
        }
        let mut rng = SplitMix64::seed_from_u64(seed);
        return Ok(random_psc_dumbbell(
            &mut rng,
            *start_phi,
            (slope[0], slope[1]),
            *length,
            n.unwrap_or(DEFAULT_LINE_INTERVALS),
        ));
    } else {
        unreachable!("validated scenario")
    };
    let p = match (n, p.kind()) {
        (None, _) => p,
        (Some(_), ProfileKind::Sampled) => {
            return Err(ConfigError::Invalid("parameters.intervals cannot resample a sampled profile".into()))
        }
        (Some(n), kind) => WarpProfile::closed_form(kind.clone(), p.r_min(), p.r_max(), n).map_err(input_err)?,
    };
    if p.len() < MIN_SAMPLED_INTERVALS + 1 {
        return Err(ConfigError::Invalid(format!(
            "profile needs at least {MIN_SAMPLED_INTERVALS} intervals, got {}",
            p.len() - 1
        )));
    }
    Ok(p)
}

fn line_flow(s: &Scenario, seed: u64, tol_scale: f64, run: &mut Run) -> Result<(), ConfigError> {
    let p = line_profile(s, seed)?;
    let r_start = s.parameters.r_start.unwrap_or(p.r_min());
    let sol = match solve_weak_imcf(&p, r_start) {
        Ok(sol) => {
            run.report.push("proper", CheckStatus::Pass, 0.0, sol.final_time(), "");
            sol
        }
        Err(ImcfError::NonProper { saturation, time, partial }) => {
            run.report.push(
                "proper",
                CheckStatus::Fail,
                saturation,
                time,
                format!("area saturates at {} after t = {}", fmt_f64(saturation), fmt_f64(time)),
            );
            *partial
        }
        Err(e) => return Err(input_err(e)),
    };
    let mut trace = line_trace(&sol).map_err(input_err)?;
    if let Some(t_max) = s.parameters.t_max {
        trace = truncate(&trace, t_max)?;
    }

    let trials = s.parameters.trials.unwrap_or(DEFAULT_TRIALS);
    let residual = verify_weak_solution(&sol, trials, seed);
    let tol = tol_scale * sol.quadrature_tolerance();
    run.report.push(
        "weak_certificate",
        status(residual <= tol),
        residual,
        0.0,
        format!("{trials} competitors, tol_quad = {}", fmt_f64(tol)),
    );
    run.quantity("certificate_residual", residual);
    run.quantity("jumps", sol.jump_regions().len() as f64);
    run.quantity("h", sol.max_spacing());
    let u_err = flat_error(&sol);
    if let Some(e) = u_err {
        run.quantity("max_error_2_ln_r", e);
    }

    let floor = min_scalar_curvature(&p).map_err(input_err)?;
    run.quantity("profile_min_R", floor);
    let mut opts = audit_options(s, tol_scale);
    let explicit = opts.lambda.is_some() && opts.a0.is_some();
    if opts.lambda.is_none() && floor >= 0.0 {
        opts.lambda = Some(floor);
    }
    let lambda = opts.lambda;
    let a0 = opts.a0.unwrap_or(trace.initial_area());
    if !explicit {
        // the gap needs a branching model; a single line only meets 8π
        opts.a0 = None;
    }
    let audit = audit_trace(&trace, &opts);
    run.report.checks.extend(audit.checks);
    if let (false, Some(lambda)) = (explicit, lambda) {
        push_bbn(run, lambda, a0)?;
    }
    trace_quantities(&trace, run);

    run.artifact("trace.csv", trace.to_csv());
    run.artifact("events.csv", line_events(&sol)?);
    run.artifact("solution.csv", sol.to_csv());
    Ok(())
}

/// `sup |u − 2 ln(r/r₀)|` for flat profiles, where the exact flow is known.
fn flat_error(sol: &FlowSolution) -> Option<f64> {
    matches!(sol.profile().kind(), ProfileKind::Flat).then(|| {
        let r0 = sol.r_start();
        sol.grid()
            .iter()
            .zip(sol.u())
            .map(|(r, u)| (u - 2.0 * (r / r0).ln()).abs())
            .fold(0.0, f64::max)
    })
}

fn line_events(sol: &FlowSolution) -> Result<String, ConfigError> {
    let mut out = String::from("time,kind,component,area_before,area_after,old_cut,new_cut\n");
    let p = sol.profile();
    for j in sol.jump_regions() {
        let kind = if j.start == 0 { "initial-hull" } else { "jump" };
        let before = slice_area(p, j.r_entry).map_err(input_err)?;
        let after = slice_area(p, j.r_exit).map_err(input_err)?;
        let _ = writeln!(
            out,
            "{},{kind},0,{},{},0@{},0@{}",
            fmt_f64(sol.u()[j.end]),
            fmt_f64(before),
            fmt_f64(after),
            fmt_f64(j.r_entry),
            fmt_f64(j.r_exit)
        );
    }
    Ok(out)
}

fn truncate(trace: &FlowTrace, t_max: f64) -> Result<FlowTrace, ConfigError> {
    let keep: Vec<_> = trace.samples().iter().copied().filter(|x| x.t <= t_max).collect();
    if keep.len() < 2 {
        return Err(ConfigError::Invalid(format!("t_max = {t_max} leaves fewer than two trace samples")));
    }
    FlowTrace::new(keep).map_err(input_err)
}

fn tree_spec(s: &Scenario, seed: u64) -> Result<TreeSpec, ConfigError> {
    let i = &s.inputs;
    if let Some(table) = &i.tree {
        let text = toml::to_string(table).map_err(|e| ConfigError::Parse(e.to_string()))?;
        return TreeSpec::from_text(&text).map_err(input_err);
    }
    if let Some(path) = &i.tree_file {
        return TreeSpec::from_text(&read(s, path)?).map_err(input_err);
    }
    match &i.model {
        Some(Model::DumbbellTree) => {
            let mut rng = SplitMix64::seed_from_u64(seed);
            Ok(random_dumbbell_tree(&mut rng, s.parameters.intervals.unwrap_or(DEFAULT_TREE_INTERVALS)))
        }
        Some(Model::StarTree { a0, branch_areas, branch_length }) => {
            if branch_areas.is_empty() || !branch_areas.iter().all(|&a| a > 0.0) || !(*a0 > 0.0) || !(*branch_length > 0.0) {
                return Err(ConfigError::Invalid("star-tree needs a0 > 0, positive branch areas and length".into()));
            }
            star_tree(*a0, branch_areas, *branch_length, s.parameters.intervals.unwrap_or(DEFAULT_TREE_INTERVALS))
                .map_err(input_err)
        }
        _ => unreachable!("validated scenario"),
    }
}

fn tree_floor(tree: &TreeManifold) -> Result<f64, ConfigError> {
    tree.edges().iter().try_fold(f64::INFINITY, |m, e| {
        Ok(m.min(min_scalar_curvature(e.profile()).map_err(input_err)?))
    })
}

fn tree_flow(s: &Scenario, seed: u64, tol_scale: f64, run: &mut Run) -> Result<(), ConfigError> {
    let spec = tree_spec(s, seed)?;
    let tree = build_tree(&spec).map_err(input_err)?;
    let t_max = s.parameters.t_max.unwrap_or(f64::INFINITY);
    let res: TreeFlowResult = match solve_tree_flow(&tree, t_max) {
        Ok(res) => {
            run.report.push("proper", CheckStatus::Pass, 0.0, res.t_end(), "");
            res
        }
        Err(TreeError::NonProper { edge, saturation, time, partial }) => {
            run.report.push(
                "proper",
                CheckStatus::Fail,
                saturation,
                time,
                format!("leaf edge {edge} saturates at area {}", fmt_f64(saturation)),
            );
            *partial
        }
        Err(e) => return Err(input_err(e)),
    };
    let trace = res.trace();
    let h = res.max_spacing();
    run.quantity("h", h);
    run.quantity("t_split", res.t_split());
    run.quantity("jumps", res.jump_events().count() as f64);
    run.quantity("components", res.components().len() as f64);
    run.quantity("chi_end", chi_of(&res, res.t_end()) as f64);
    run.quantity("leaves", tree.leaf_count() as f64);
    let junction = tree.junction_willmore_jumps().map_err(input_err)?;
    run.quantity("max_junction_willmore_jump", junction.iter().map(|j| j.1).fold(f64::NEG_INFINITY, f64::max));

    // with a systole floor A₀ = initial area, k pieces of area ≥ A₀ need e^T ≥ k
    match (tree.systole_floor(), res.t_split().is_finite()) {
        (Some(_), true) => {
            let k = res.component_count(res.t_split());
            let bound = (k as f64).ln() - 2.0 * h;
            run.report.push(
                "splitting_time",
                status(res.t_split() >= bound),
                res.t_split() - bound,
                res.t_split(),
                format!("{k} components at the split, bound ln {k} - 2h"),
            );
        }
        _ => run.report.push("splitting_time", CheckStatus::NotApplicable, f64::NAN, 0.0, "no floor or no split"),
    }

    let floor = tree_floor(&tree)?;
    run.quantity("tree_min_R", floor);
    let mut opts = audit_options(s, tol_scale);
    let lambda = opts.lambda.unwrap_or(floor.max(0.0));
    let a0 = opts.a0.or(tree.systole_floor()).unwrap_or(trace.initial_area());
    opts.lambda = Some(lambda);
    opts.a0 = None;
    let audit = audit_trace(trace, &opts);
    run.report.checks.extend(audit.checks);
    push_bbn(run, lambda, a0)?;
    // a root and at least two leaves: the gap must hold on a PSC model
    if tree.is_branching() && tree.leaf_count() + 1 >= 3 && lambda > 0.0 {
        let gap = gap_certificate(lambda, a0).map_err(input_err)?;
        run.report.push(
            "model_consistency",
            status(gap.pass),
            gap.product - gap.bound_value,
            0.0,
            format!("branching PSC tree: lambda*A0 = {:.6}*pi against c", gap.product / PI),
        );
    }
    trace_quantities(trace, run);

    run.artifact("trace.csv", trace.to_csv());
    run.artifact("events.csv", res.events_csv());
    run.artifact("components.csv", res.components_csv());
    run.artifact("arrival.csv", res.arrival_csv(&tree));
    Ok(())
}

fn push_bbn(run: &mut Run, lambda: f64, a0: f64) -> Result<(), ConfigError> {
    let bbn = bbn_bound(lambda, a0).map_err(input_err)?;
    run.report.push(
        "bbn_bound",
        status(bbn.pass),
        bbn.product - bbn.bound_value,
        0.0,
        format!("lambda*A0 = {:.6}*pi against 8pi", bbn.product / PI),
    );
    Ok(())
}

fn audit_only(s: &Scenario, tol_scale: f64, run: &mut Run) -> Result<(), ConfigError> {
    let path = s.inputs.trace_file.as_ref().expect("validated scenario");
    let trace = FlowTrace::from_csv(&read(s, path)?).map_err(input_err)?;
    run.report.checks.extend(audit_trace(&trace, &audit_options(s, tol_scale)).checks);
    trace_quantities(&trace, run);
    Ok(())
}

/// Audit of a stand-alone trace file, as a run output named after the file.
pub fn audit_file(path: &Path, lambda: Option<f64>, a0: Option<f64>, tol_scale: f64) -> Result<RunOutput, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    let trace = FlowTrace::from_csv(&text).map_err(input_err)?;
    if lambda.is_some() != a0.is_some() {
        return Err(ConfigError::Invalid("--lambda and --a0 go together".into()));
    }
    let mut run = Run::new();
    let opts = AuditOptions {
        lambda,
        a0,
        tol_scale,
        ..AuditOptions::default()
    };
    run.report.checks.extend(audit_trace(&trace, &opts).checks);
    trace_quantities(&trace, &mut run);
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace").to_string();
    Ok(RunOutput {
        name: format!("audit-{name}"),
        kind: Kind::AuditOnly,
        report: run.report,
        quantities: run.quantities,
        artifacts: run.artifacts,
    })
}

fn neck_surface(s: &Scenario, n: usize) -> Result<AxisymSurface, ConfigError> {
    if let Some(path) = &s.inputs.surface_file {
        return AxisymSurface::from_text(&read(s, path)?).map_err(input_err);
    }
    match s.inputs.surface.as_ref().expect("validated scenario") {
        SurfaceInput::Round { radius } => AxisymSurface::round(*radius, 0.0, n),
        SurfaceInput::Perturbed { radius, amplitude, mode } => AxisymSurface::perturbed_round(*radius, *amplitude, *mode, n),
        SurfaceInput::Sampled { a } => AxisymSurface::new(a.clone(), vec![0.0; a.len()]),
    }
    .map_err(input_err)
}

fn neck_build(s: &Scenario, run: &mut Run) -> Result<(), ConfigError> {
    let lambda = s.parameters.lambda.expect("validated scenario");
    if !(lambda >= 0.0) {
        return Err(ConfigError::Invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    let length = s.parameters.length.unwrap_or(1.0);
    let surface = neck_surface(s, s.parameters.intervals.unwrap_or(DEFAULT_NECK_INTERVALS))?.with_stability_potential(lambda);
    let area = surface.area();
    run.quantity("area", area);
    match stability_first_eigen(&surface) {
        Ok(e) => {
            run.quantity("mu", e.mu);
            run.report.push(
                "stability",
                status(e.mu >= -surface.eigen_tolerance()),
                e.mu,
                0.0,
                "first eigenvalue of the stability operator",
            );
            match build_neck(&surface, &e.phi, lambda, length) {
                Ok(neck) => {
                    let min_r = neck.min_scalar_curvature();
                    run.quantity("min_R", min_r);
                    run.report.push(
                        "neck_floor",
                        status(min_r >= lambda - NECK_FLOOR_TOL),
                        min_r - lambda,
                        0.0,
                        format!("min R against lambda = {}", fmt_f64(lambda)),
                    );
                    run.artifact("neck.txt", neck.to_text());
                    if let Ok(p) = neck.to_warp_profile(64) {
                        run.artifact("profile.toml", p.to_text());
                    }
                }
                Err(NeckError::EigenInequalityViolated { theta, deficit }) => run.report.push(
                    "neck_floor",
                    CheckStatus::Fail,
                    -deficit,
                    theta,
                    "eigenfunction inequality violated (location is theta)",
                ),
                Err(e) => return Err(input_err(e)),
            }
        }
        Err(e @ NeckError::NotConverged { .. }) => {
            run.report.push("stability", CheckStatus::Fail, f64::NAN, 0.0, e.to_string());
        }
        Err(e) => return Err(input_err(e)),
    }
    let bbn = bbn_bound(lambda, area).map_err(input_err)?;
    run.report.push(
        "bbn_bound",
        status(bbn.pass),
        bbn.product - bbn.bound_value,
        0.0,
        format!("lambda*|S| = {:.6}*pi against 8pi", bbn.product / PI),
    );
    if let Some(c0) = s.parameters.c0 {
        let a0 = s.parameters.a0.unwrap_or(area);
        let b = barrier_length(a0, c0).map_err(input_err)?;
        run.quantity("barrier_length", b.length);
        run.quantity("crossing_bound", b.crossing_bound);
        run.report.push(
            "barrier",
            status(b.holds),
            b.crossing_bound - b.required,
            0.0,
            format!("T = 16 A0 / c0 = {}", fmt_f64(b.length)),
        );
    }
    Ok(())
}

fn gap_check(lambda: f64, a0: f64, run: &mut Run) -> Result<(), ConfigError> {
    let v = gap_certificate(lambda, a0).map_err(input_err)?;
    run.quantity("product_over_pi", v.product / PI);
    run.quantity("c_over_pi", v.c_value / PI);
    run.quantity("log2_margin", v.log2_margin);
    run.quantity("form_discrepancy", v.form_discrepancy);
    push_bounds(&mut run.report, lambda, a0);
    Ok(())
}

/// The `gap` subcommand: both bounds for one `(λ, A₀)`.
pub fn gap_output(lambda: f64, a0: f64) -> Result<RunOutput, ConfigError> {
    let mut run = Run::new();
    gap_check(lambda, a0, &mut run)?;
    Ok(RunOutput {
        name: "gap".into(),
        kind: Kind::GapCheck,
        report: run.report,
        quantities: run.quantities,
        artifacts: run.artifacts,
    })
}

/// Checks named by an expectation are judged by it instead of by their own
/// status; quantity expectations become extra checks.
fn apply_expectations(s: &Scenario, run: &mut Run) -> Result<(), ConfigError> {
    for e in &s.expect {
        if let Some(name) = &e.check {
            let want = e.status.as_deref().expect("validated scenario");
            let Some(rec) = run.report.checks.iter_mut().find(|c| &c.name == name) else {
                return Err(ConfigError::Invalid(format!(
                    "expectation names check {name:?}, which a {} run does not produce",
                    s.kind.name()
                )));
            };
            let got = rec.status.to_string();
            rec.status = status(got == want);
            rec.note = format!("expected {want}, got {got}; {}", rec.note);
        } else if let Some(q) = &e.quantity {
            let Some(&v) = run.quantities.get(q) else {
                return Err(ConfigError::Invalid(format!(
                    "expectation names quantity {q:?}, which a {} run does not produce",
                    s.kind.name()
                )));
            };
            let tol = e.tol.unwrap_or(0.0);
            let ok = e.min.is_none_or(|m| v >= m)
                && e.max.is_none_or(|m| v <= m)
                && e.value.is_none_or(|x| (v - x).abs() <= tol);
            let mut want = Vec::new();
            if let Some(m) = e.min {
                want.push(format!(">= {}", fmt_f64(m)));
            }
            if let Some(m) = e.max {
                want.push(format!("<= {}", fmt_f64(m)));
            }
            if let Some(x) = e.value {
                want.push(format!("= {} +- {}", fmt_f64(x), fmt_f64(tol)));
            }
            run.report.push(&format!("expect:{q}"), status(ok), v, 0.0, format!("want {}", want.join(", ")));
        }
    }
    Ok(())
}

/// Result of one scenario inside a batch.
#[derive(Debug, Clone)]
pub struct BatchEntry {
    pub file: PathBuf,
    pub name: String,
    pub kind: String,
    pub exit_code: i32,
    pub detail: String,
}

/// Runs every `*.toml` scenario in `dir` concurrently. Results come back in
/// file-name order whatever the scheduling.
pub fn run_batch(dir: &Path, ov: Overrides, out: Option<&Path>) -> Result<Vec<BatchEntry>, ConfigError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| ConfigError::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(ConfigError::Invalid(format!("no scenario files in {}", dir.display())));
    }
    let loaded: Vec<Result<Scenario, ConfigError>> = files.iter().map(|f| Scenario::load(f)).collect();
    let mut seen = BTreeMap::new();
    for (f, s) in files.iter().zip(&loaded) {
        if let Ok(s) = s {
            seen.entry(s.name.clone()).or_insert_with(Vec::new).push(f.clone());
        }
    }
    let entries = files
        .par_iter()
        .zip(loaded)
        .map(|(file, loaded)| {
            let entry = |name: String, kind: String, exit_code: i32, detail: String| BatchEntry {
                file: file.clone(),
                name,
                kind,
                exit_code,
                detail,
            };
            let s = match loaded {
                Ok(s) => s,
                Err(e) => return entry("-".into(), "-".into(), EXIT_CONFIG, e.to_string()),
            };
            if seen[&s.name].len() > 1 {
                return entry(s.name.clone(), s.kind.name().into(), EXIT_CONFIG, "duplicate scenario name".into());
            }
            let result = run_scenario(&s, ov).and_then(|o| {
                if let Some(out) = out {
                    o.write(out)?;
                }
                Ok(o)
            });
            match result {
                Ok(o) => {
                    let failed: Vec<String> = o.report.failures().map(|c| c.name.clone()).collect();
                    let detail = if failed.is_empty() { "ok".into() } else { format!("failed: {}", failed.join(", ")) };
                    entry(s.name.clone(), s.kind.name().into(), o.exit_code(), detail)
                }
                Err(e) => entry(s.name.clone(), s.kind.name().into(), EXIT_CONFIG, e.to_string()),
            }
        })
        .collect();
    Ok(entries)
}

/// Batch exit code: configuration errors dominate audit failures.
pub fn batch_exit_code(entries: &[BatchEntry]) -> i32 {
    entries.iter().map(|e| e.exit_code).max().unwrap_or(EXIT_CONFIG)
}

pub fn batch_table(entries: &[BatchEntry]) -> String {
    let w = entries.iter().map(|e| e.name.len()).max().unwrap_or(4).max(4);
    let mut out = format!("{:<w$}  {:<10}  {:<6}  detail\n", "name", "kind", "status");
    for e in entries {
        let st = match e.exit_code {
            EXIT_PASS => "pass",
            EXIT_FAIL => "FAIL",
            _ => "ERROR",
        };
        let _ = writeln!(out, "{:<w$}  {:<10}  {:<6}  {}", e.name, e.kind, st, e.detail);
    }
    let failures = entries.iter().filter(|e| e.exit_code != EXIT_PASS).count();
    let _ = writeln!(out, "{} scenarios, {} failed", entries.len(), failures);
    out
}
