//! Weak IMCF on a rooted tree of warped edges.
//!
//! Junctions are zero-thickness: the terminal slice of an edge is glued to
//! the initial slices of its children with area continuity up to a relative
//! tolerance. The front is a set of points, one per component, each sitting
//! on an edge. Event times come from knot areas in closed form and positions
//! in between invert the slice area, so each component's area grows exactly
//! like `e^t`. Jumps go to the farthest least-area cut ahead, found by a
//! suffix-minimum pass that folds each subtree into one number at its root
//! vertex.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use serde::Deserialize;
use thiserror::Error;

use crate::geometry::{
    area_crossing, hawking_mass, slice_geometry, GeometryError, ProfileDoc, SliceGeometry, WarpProfile, PINCH_THRESHOLD,
};
use crate::textfmt::fmt_f64;
use crate::trace::{FlowTrace, TraceError, TraceSample};

pub const DEFAULT_JUNCTION_TOLERANCE: f64 = 1e-6;

/// Relative slack when comparing a declared edge length to the profile span.
const LENGTH_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone)]
pub enum TreeError {
    #[error("not a tree: {0}")]
    NotATree(String),
    #[error("junction mismatch at vertex {vertex}: relative area error {relative_error:.6e}")]
    JunctionMismatch { vertex: usize, relative_error: f64 },
    #[error("systole floor {floor}: {detail}")]
    FloorViolated { floor: f64, detail: String },
    #[error("edge {edge}: declared length {declared} but the profile spans {actual}")]
    LengthMismatch { edge: usize, declared: f64, actual: f64 },
    #[error("edge {edge} pinches at r = {r} (phi = {phi:.3e})")]
    PinchedEdge { edge: usize, r: f64, phi: f64 },
    #[error("edge {edge}: {source}")]
    Profile { edge: usize, source: GeometryError },
    #[error("flow not proper: leaf edge {edge} saturates at area {saturation} at t = {time}")]
    NonProper {
        edge: usize,
        saturation: f64,
        time: f64,
        partial: Box<TreeFlowResult>,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

impl From<GeometryError> for TreeError {
    fn from(source: GeometryError) -> Self {
        TreeError::Profile { edge: usize::MAX, source }
    }
}

#[derive(Debug, Clone)]
pub struct EdgeSpec {
    pub tail: usize,
    pub head: usize,
    pub profile: WarpProfile,
    /// Optional declared arclength, checked against the profile span.
    pub length: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TreeSpec {
    pub vertices: Vec<usize>,
    pub edges: Vec<EdgeSpec>,
    pub root_edge: usize,
    /// When set, every slice must have area at least this value and the
    /// initial slice must have exactly this area.
    pub systole_floor: Option<f64>,
    pub epsilon_junction: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeDoc {
    #[serde(default)]
    schema_version: Option<u32>,
    vertices: Vec<usize>,
    root_edge: usize,
    #[serde(default)]
    systole_floor: Option<f64>,
    #[serde(default)]
    epsilon_junction: Option<f64>,
    edges: Vec<EdgeDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    tail: usize,
    head: usize,
    #[serde(default)]
    length: Option<f64>,
    profile: ProfileDoc,
}

impl TreeSpec {
    /// Parses the structured-text tree format written by [`TreeSpec::to_text`].
    pub fn from_text(text: &str) -> Result<Self, TreeError> {
        let doc: TreeDoc = toml::from_str(text).map_err(|e| TreeError::Parse(e.to_string()))?;
        if doc.schema_version.is_some_and(|v| v != 1) {
            return Err(TreeError::Parse(format!(
                "unsupported schema_version {}",
                doc.schema_version.unwrap_or_default()
            )));
        }
        let edges = doc
            .edges
            .into_iter()
            .enumerate()
            .map(|(i, e)| {
                Ok(EdgeSpec {
                    tail: e.tail,
                    head: e.head,
                    profile: e.profile.build().map_err(|source| TreeError::Profile { edge: i, source })?,
                    length: e.length,
                })
            })
            .collect::<Result<Vec<_>, TreeError>>()?;
        Ok(TreeSpec {
            vertices: doc.vertices,
            edges,
            root_edge: doc.root_edge,
            systole_floor: doc.systole_floor,
            epsilon_junction: doc.epsilon_junction.unwrap_or(DEFAULT_JUNCTION_TOLERANCE),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let ids: Vec<String> = self.vertices.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "schema_version = 1");
        let _ = writeln!(out, "vertices = [{}]", ids.join(", "));
        let _ = writeln!(out, "root_edge = {}", self.root_edge);
        let _ = writeln!(out, "epsilon_junction = {}", fmt_f64(self.epsilon_junction));
        if let Some(f) = self.systole_floor {
            let _ = writeln!(out, "systole_floor = {}", fmt_f64(f));
        }
        for e in &self.edges {
            let _ = writeln!(out, "\n[[edges]]\ntail = {}\nhead = {}", e.tail, e.head);
            if let Some(l) = e.length {
                let _ = writeln!(out, "length = {}", fmt_f64(l));
            }
            let _ = writeln!(out, "[edges.profile]");
            e.profile.write_fields(&mut out);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TreeEdge {
    tail: usize,
    head: usize,
    profile: WarpProfile,
    areas: Vec<f64>,
    children: Vec<usize>,
}

impl TreeEdge {
    /// Vertex id at the root side.
    pub fn tail(&self) -> usize {
        self.tail
    }

    pub fn head(&self) -> usize {
        self.head
    }

    pub fn profile(&self) -> &WarpProfile {
        &self.profile
    }

    pub fn knot_areas(&self) -> &[f64] {
        &self.areas
    }

    /// Outgoing edges at the head vertex; empty for a leaf.
    pub fn children(&self) -> &[usize] {
        &self.children
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Validated tree: oriented away from the root, junction-balanced.
#[derive(Debug, Clone)]
pub struct TreeManifold {
    vertices: Vec<usize>,
    edges: Vec<TreeEdge>,
    root_edge: usize,
    epsilon_junction: f64,
    systole_floor: Option<f64>,
    min_slice_area: f64,
}

impl TreeManifold {
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn edges(&self) -> &[TreeEdge] {
        &self.edges
    }

    pub fn root_edge(&self) -> usize {
        self.root_edge
    }

    pub fn epsilon_junction(&self) -> f64 {
        self.epsilon_junction
    }

    pub fn systole_floor(&self) -> Option<f64> {
        self.systole_floor
    }

    /// Smallest knot slice area over all edges.
    pub fn min_slice_area(&self) -> f64 {
        self.min_slice_area
    }

    pub fn initial_area(&self) -> f64 {
        self.edges[self.root_edge].areas[0]
    }

    pub fn max_spacing(&self) -> f64 {
        self.edges.iter().map(|e| e.profile.max_spacing()).fold(0.0, f64::max)
    }

    /// Whether some vertex has two or more outgoing edges.
    pub fn is_branching(&self) -> bool {
        self.edges.iter().any(|e| e.children.len() >= 2)
    }

    /// Number of leaf ends, i.e. boundary pieces at infinity of the model.
    pub fn leaf_count(&self) -> usize {
        self.edges.iter().filter(|e| e.is_leaf()).count()
    }

    /// Change of `∫H²` across each junction, `Σ 16πφ_c′(0)² − 16πφ′(end)²`,
    /// keyed by head vertex id. A positive value means the zero-thickness
    /// junction raises the Willmore energy instantaneously, which no smooth
    /// flow can do, so monotonicity audits across that crossing will fail.
    pub fn junction_willmore_jumps(&self) -> Result<Vec<(usize, f64)>, TreeError> {
        let mut out = Vec::new();
        for (i, e) in self.edges.iter().enumerate() {
            if e.is_leaf() {
                continue;
            }
            let before = geometry_at(self, i, e.profile.r_max())?.willmore;
            let mut after = 0.0;
            for &c in &e.children {
                after += geometry_at(self, c, self.edges[c].profile.r_min())?.willmore;
            }
            out.push((e.head, after - before));
        }
        Ok(out)
    }
}

fn geometry_at(tree: &TreeManifold, edge: usize, r: f64) -> Result<SliceGeometry, TreeError> {
    slice_geometry(&tree.edges[edge].profile, r).map_err(|source| TreeError::Profile { edge, source })
}

/// Validates `spec` and assembles the tree.
pub fn build_tree(spec: &TreeSpec) -> Result<TreeManifold, TreeError> {
    let eps = spec.epsilon_junction;
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(TreeError::InvalidInput(format!("epsilon_junction must be finite and >= 0, got {eps}")));
    }
    if spec.vertices.is_empty() {
        return Err(TreeError::NotATree("no vertices".into()));
    }
    let mut index = BTreeMap::new();
    for (i, &v) in spec.vertices.iter().enumerate() {
        if index.insert(v, i).is_some() {
            return Err(TreeError::NotATree(format!("duplicate vertex id {v}")));
        }
    }
    if spec.edges.len() + 1 != spec.vertices.len() {
        return Err(TreeError::NotATree(format!(
            "{} vertices need {} edges, got {}",
            spec.vertices.len(),
            spec.vertices.len() - 1,
            spec.edges.len()
        )));
    }
    if spec.root_edge >= spec.edges.len() {
        return Err(TreeError::NotATree(format!("root edge {} does not exist", spec.root_edge)));
    }
    let n = spec.vertices.len();
    let mut incoming = vec![0usize; n];
    let mut outgoing: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, e) in spec.edges.iter().enumerate() {
        let lookup = |v: usize| {
            index
                .get(&v)
                .copied()
                .ok_or_else(|| TreeError::NotATree(format!("edge {i} references unknown vertex {v}")))
        };
        let (t, h) = (lookup(e.tail)?, lookup(e.head)?);
        if t == h {
            return Err(TreeError::NotATree(format!("edge {i} is a loop at vertex {}", e.tail)));
        }
        incoming[h] += 1;
        outgoing[t].push(i);
    }
    let root_tail = index[&spec.edges[spec.root_edge].tail];
    for (v, &k) in incoming.iter().enumerate() {
        let expected = usize::from(v != root_tail);
        if k != expected {
            return Err(TreeError::NotATree(format!(
                "vertex {} has {k} incoming edges, expected {expected}",
                spec.vertices[v]
            )));
        }
    }
    if outgoing[root_tail].len() != 1 {
        return Err(TreeError::NotATree(format!(
            "root vertex {} must carry only the root edge",
            spec.vertices[root_tail]
        )));
    }
    let mut seen = vec![false; n];
    let mut stack = vec![root_tail];
    seen[root_tail] = true;
    while let Some(v) = stack.pop() {
        for &e in &outgoing[v] {
            let h = index[&spec.edges[e].head];
            if seen[h] {
                return Err(TreeError::NotATree(format!("cycle through vertex {}", spec.vertices[h])));
            }
            seen[h] = true;
            stack.push(h);
        }
    }
    if let Some(v) = seen.iter().position(|s| !s) {
        return Err(TreeError::NotATree(format!(
            "vertex {} is not reachable from the root",
            spec.vertices[v]
        )));
    }

    let mut edges = Vec::with_capacity(spec.edges.len());
    for (i, e) in spec.edges.iter().enumerate() {
        let actual = e.profile.r_max() - e.profile.r_min();
        if let Some(declared) = e.length {
            if !((declared - actual).abs() <= LENGTH_SLACK * declared.abs().max(1.0)) {
                return Err(TreeError::LengthMismatch { edge: i, declared, actual });
            }
        }
        edges.push(TreeEdge {
            tail: e.tail,
            head: e.head,
            profile: e.profile.clone(),
            areas: e.profile.knot_areas(),
            children: outgoing[index[&e.head]].clone(),
        });
    }
    for e in &edges {
        if e.is_leaf() {
            continue;
        }
        let end = e.areas[e.areas.len() - 1];
        let sum: f64 = e.children.iter().map(|&c| edges[c].areas[0]).sum();
        let relative_error = (sum - end).abs() / end;
        if !(relative_error <= eps) {
            return Err(TreeError::JunctionMismatch {
                vertex: e.head,
                relative_error,
            });
        }
    }
    let min_slice_area = edges
        .iter()
        .flat_map(|e| e.areas.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let tree = TreeManifold {
        vertices: spec.vertices.clone(),
        edges,
        root_edge: spec.root_edge,
        epsilon_junction: eps,
        systole_floor: spec.systole_floor,
        min_slice_area,
    };
    if let Some(floor) = spec.systole_floor {
        if !(floor.is_finite() && floor > 0.0) {
            return Err(TreeError::InvalidInput(format!("systole_floor must be positive, got {floor}")));
        }
        let slack = floor * eps.max(1e-12);
        if min_slice_area < floor - slack {
            return Err(TreeError::FloorViolated {
                floor,
                detail: format!("minimum slice area {min_slice_area} is below the floor"),
            });
        }
        let a0 = tree.initial_area();
        if (a0 - floor).abs() > slack {
            return Err(TreeError::FloorViolated {
                floor,
                detail: format!("initial slice area {a0} must equal the floor"),
            });
        }
    }
    Ok(tree)
}

/// Where the least-area cut ahead of a knot lies.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Target {
    Knot(usize),
    /// Past the head vertex, in the children's subtrees.
    Downstream,
}

/// `m[j]`: least cut area over everything at or beyond knot `j` of the
/// edge, including its subtree; `target[j]`: the farthest cut achieving it.
struct Envelope {
    m: Vec<f64>,
    target: Vec<Target>,
}

fn envelopes(tree: &TreeManifold) -> (Vec<Envelope>, Vec<f64>) {
    let ne = tree.edges.len();
    // reverse of a root-first order visits children before parents
    let mut order = Vec::with_capacity(ne);
    let mut queue = VecDeque::from([tree.root_edge]);
    while let Some(e) = queue.pop_front() {
        order.push(e);
        queue.extend(tree.edges[e].children.iter().copied());
    }
    let mut env: Vec<Option<Envelope>> = (0..ne).map(|_| None).collect();
    let mut head_cut = vec![f64::INFINITY; ne];
    for &e in order.iter().rev() {
        let edge = &tree.edges[e];
        let c = if edge.is_leaf() {
            f64::INFINITY
        } else {
            edge.children
                .iter()
                .map(|&ch| env[ch].as_ref().map_or(f64::INFINITY, |v| v.m[0]))
                .sum()
        };
        head_cut[e] = c;
        let a = &edge.areas;
        let n = a.len();
        let mut m = vec![0.0; n];
        let mut target = vec![Target::Knot(0); n];
        // ties resolve to the farther cut: the largest minimizing enclosure
        (m[n - 1], target[n - 1]) = if c <= a[n - 1] {
            (c, Target::Downstream)
        } else {
            (a[n - 1], Target::Knot(n - 1))
        };
        for j in (0..n - 1).rev() {
            (m[j], target[j]) = if m[j + 1] <= a[j] {
                (m[j + 1], target[j + 1])
            } else {
                (a[j], Target::Knot(j))
            };
        }
        env[e] = Some(Envelope { m, target });
    }
    (env.into_iter().map(|e| e.expect("every edge is reachable")).collect(), head_cut)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutPoint {
    pub edge: usize,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// The initial slice was not outward minimizing and was replaced by its hull at `t = 0`.
    InitialHull,
    Jump,
    /// A front point passed a vertex onto each outgoing edge at their initial knots.
    JunctionCrossing,
    /// A component reached the end of an escaping leaf grid; the run stops here.
    Truncated,
    /// A component reached the end of a non-escaping leaf.
    Saturated,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::InitialHull => "initial-hull",
            EventKind::Jump => "jump",
            EventKind::JunctionCrossing => "junction-crossing",
            EventKind::Truncated => "truncated",
            EventKind::Saturated => "saturated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowEvent {
    pub time: f64,
    pub kind: EventKind,
    pub component: usize,
    pub old_cut: Vec<CutPoint>,
    pub new_cut: Vec<CutPoint>,
    /// True slice areas on either side of the event.
    pub area_before: f64,
    pub area_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentSample {
    pub t: f64,
    pub edge: usize,
    pub r: f64,
    /// Area the event clock runs on: the knot area, or the plateau level before a jump.
    pub level: f64,
    pub area: f64,
    pub willmore: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComponentEnd {
    /// Still moving at `t_max`.
    Alive,
    /// Replaced by its children at this time.
    Split(f64),
    Truncated(f64),
    Saturated(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentTrace {
    pub id: usize,
    pub parent: Option<usize>,
    pub birth_time: f64,
    pub end: ComponentEnd,
    /// Front positions at knots and events; two samples share a time at a jump.
    pub samples: Vec<ComponentSample>,
}

impl ComponentTrace {
    pub fn death_time(&self) -> Option<f64> {
        match self.end {
            ComponentEnd::Split(t) => Some(t),
            _ => None,
        }
    }

    fn alive_after(&self, t: f64) -> bool {
        self.birth_time <= t && self.death_time().is_none_or(|d| t < d)
    }

    fn alive_before(&self, t: f64) -> bool {
        self.birth_time < t && self.death_time().is_none_or(|d| t <= d)
    }

    /// Front point just after `t` (post-event at an event time).
    fn position_after(&self, tree: &TreeManifold, t: f64) -> (usize, f64) {
        let k = self.samples.partition_point(|s| s.t <= t).max(1) - 1;
        self.interpolate(tree, k, t)
    }

    /// Front point just before `t` (pre-event at an event time).
    fn position_before(&self, tree: &TreeManifold, t: f64) -> (usize, f64) {
        let k = self.samples.partition_point(|s| s.t < t);
        match self.samples.get(k) {
            Some(s) if s.t == t => (s.edge, s.r),
            _ => self.interpolate(tree, k.max(1) - 1, t),
        }
    }

    /// Between two samples the front is where the slice area has grown by `e^{Δt}`.
    fn interpolate(&self, tree: &TreeManifold, k: usize, t: f64) -> (usize, f64) {
        let s = &self.samples[k];
        let Some(next) = self.samples.get(k + 1).filter(|n| n.t > s.t && t > s.t) else {
            return (s.edge, s.r);
        };
        let level = s.area * (t - s.t).exp();
        let r = area_crossing(&tree.edges[s.edge].profile, s.r, next.r, level).unwrap_or(s.r);
        (s.edge, r)
    }
}

#[derive(Debug, Clone)]
pub struct TreeFlowResult {
    components: Vec<ComponentTrace>,
    events: Vec<FlowEvent>,
    arrival: Vec<Vec<f64>>,
    t_split: f64,
    t_end: f64,
    t_max: f64,
    max_spacing: f64,
    trace: FlowTrace,
}

impl TreeFlowResult {
    pub fn components(&self) -> &[ComponentTrace] {
        &self.components
    }

    pub fn events(&self) -> &[FlowEvent] {
        &self.events
    }

    /// `(time, old cut, new cut)` of every jump, including the initial hull.
    pub fn jump_events(&self) -> impl Iterator<Item = &FlowEvent> {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Jump | EventKind::InitialHull))
    }

    /// First time with at least two components; infinite if it never happens.
    pub fn t_split(&self) -> f64 {
        self.t_split
    }

    /// End of the simulated range: `t_max`, or earlier if a leaf grid ran out.
    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// Largest knot spacing over the tree, the `h` of the accuracy budget.
    pub fn max_spacing(&self) -> f64 {
        self.max_spacing
    }

    /// Arrival time of the front at each knot of `edge` (the level function
    /// restricted to the grid); infinite where the front never got to.
    pub fn arrival_times(&self, edge: usize) -> &[f64] {
        &self.arrival[edge]
    }

    pub fn trace(&self) -> &FlowTrace {
        &self.trace
    }

    pub fn component_count(&self, t: f64) -> usize {
        self.components.iter().filter(|c| c.alive_after(t)).count()
    }

    /// Front points just after `t`, one per component.
    pub fn front_at(&self, tree: &TreeManifold, t: f64) -> Vec<CutPoint> {
        self.components
            .iter()
            .filter(|c| c.alive_after(t))
            .map(|c| {
                let (edge, r) = c.position_after(tree, t);
                CutPoint { edge, r }
            })
            .collect()
    }

    pub fn total_area(&self, tree: &TreeManifold, t: f64) -> Result<f64, TreeError> {
        self.front_at(tree, t)
            .iter()
            .try_fold(0.0, |acc, p| Ok(acc + geometry_at(tree, p.edge, p.r)?.area))
    }

    /// `edge_id,knot,r,u` rows of the grid level function.
    pub fn arrival_csv(&self, tree: &TreeManifold) -> String {
        let mut out = String::from("edge,knot,r,u\n");
        for (e, times) in self.arrival.iter().enumerate() {
            for (k, (&u, &r)) in times.iter().zip(tree.edges[e].profile.grid()).enumerate() {
                let _ = writeln!(out, "{e},{k},{},{}", fmt_f64(r), fmt_f64(u));
            }
        }
        out
    }

    /// One row per component sample.
    pub fn components_csv(&self) -> String {
        let mut out = String::from("component,parent,t,edge,r,area,willmore\n");
        for c in &self.components {
            let parent = c.parent.map_or_else(|| "-".to_string(), |p| p.to_string());
            for s in &c.samples {
                let _ = writeln!(
                    out,
                    "{},{parent},{},{},{},{},{}",
                    c.id,
                    fmt_f64(s.t),
                    s.edge,
                    fmt_f64(s.r),
                    fmt_f64(s.area),
                    fmt_f64(s.willmore)
                );
            }
        }
        out
    }

    /// `time,kind,component,area_before,area_after,old_cut,new_cut`, cuts as
    /// `edge@r` joined by `;`.
    pub fn events_csv(&self) -> String {
        events_csv(&self.events)
    }
}

pub(crate) fn events_csv(events: &[FlowEvent]) -> String {
    let cut = |c: &[CutPoint]| {
        c.iter()
            .map(|p| format!("{}@{}", p.edge, fmt_f64(p.r)))
            .collect::<Vec<_>>()
            .join(";")
    };
    let mut out = String::from("time,kind,component,area_before,area_after,old_cut,new_cut\n");
    for e in events {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_f64(e.time),
            e.kind.name(),
            e.component,
            fmt_f64(e.area_before),
            fmt_f64(e.area_after),
            cut(&e.old_cut),
            cut(&e.new_cut)
        );
    }
    out
}

/// First time with at least two components.
pub fn splitting_time(result: &TreeFlowResult) -> f64 {
    result.t_split
}

/// `χ = 2 · (component count)`, right-continuous at crossings.
pub fn chi_of(result: &TreeFlowResult, t: f64) -> i64 {
    2 * result.component_count(t) as i64
}

struct Birth {
    parent: Option<usize>,
    edge: usize,
    knot: usize,
    time: f64,
}

struct Solver<'a> {
    tree: &'a TreeManifold,
    env: Vec<Envelope>,
    head_cut: Vec<f64>,
    arrival: Vec<Vec<f64>>,
    events: Vec<FlowEvent>,
    t_max: f64,
}

impl Solver<'_> {
    fn mark(&mut self, edge: usize, knots: std::ops::Range<usize>, t: f64) {
        for u in &mut self.arrival[edge][knots] {
            if t < *u {
                *u = t;
            }
        }
    }

    /// The least-area cut in the subtrees beyond the head of `edge`, marking
    /// every knot it skips as reached at `t`.
    fn descend(&mut self, edge: usize, t: f64, cut: &mut Vec<(usize, usize)>) {
        for c in self.tree.edges[edge].children.clone() {
            match self.env[c].target[0] {
                Target::Knot(l) => {
                    self.mark(c, 0..l, t);
                    cut.push((c, l));
                }
                Target::Downstream => {
                    let n = self.tree.edges[c].areas.len();
                    self.mark(c, 0..n, t);
                    self.descend(c, t, cut);
                }
            }
        }
    }

    fn sample(&self, t: f64, edge: usize, r: f64, level: f64) -> Result<ComponentSample, TreeError> {
        let g = geometry_at(self.tree, edge, r)?;
        Ok(ComponentSample {
            t,
            edge,
            r,
            level,
            area: g.area,
            willmore: g.willmore,
        })
    }

    fn cut_points(&self, cut: &[(usize, usize)]) -> Vec<CutPoint> {
        cut.iter()
            .map(|&(edge, k)| CutPoint {
                edge,
                r: self.tree.edges[edge].profile.grid()[k],
            })
            .collect()
    }

    fn cut_area(&self, cut: &[(usize, usize)]) -> f64 {
        cut.iter().map(|&(e, k)| self.tree.edges[e].areas[k]).sum()
    }

    /// Runs one component from its birth until it splits, leaves the grid or passes `t_max`.
    fn run(&mut self, id: usize, birth: &Birth, queue: &mut VecDeque<Birth>) -> Result<ComponentTrace, TreeError> {
        let tree = self.tree;
        let (e, t_b) = (birth.edge, birth.time);
        let edge = &tree.edges[e];
        let (grid, a) = (edge.profile.grid(), &edge.areas);
        let n = a.len();
        let l_b = a[birth.knot];
        let mut k = birth.knot;
        let mut t = t_b;
        self.mark(e, k..k + 1, t);
        let mut samples = vec![self.sample(t, e, grid[k], a[k])?];
        let end = loop {
            if t >= self.t_max {
                break ComponentEnd::Alive;
            }
            let (m, target) = if k + 1 < n {
                (self.env[e].m[k + 1], self.env[e].target[k + 1])
            } else if edge.is_leaf() {
                let (kind, end) = if edge.profile.escapes() {
                    (EventKind::Truncated, ComponentEnd::Truncated(t))
                } else {
                    (EventKind::Saturated, ComponentEnd::Saturated(t))
                };
                let here = samples[samples.len() - 1];
                self.events.push(FlowEvent {
                    time: t,
                    kind,
                    component: id,
                    old_cut: vec![CutPoint { edge: e, r: here.r }],
                    new_cut: Vec::new(),
                    area_before: here.area,
                    area_after: here.area,
                });
                break end;
            } else {
                (self.head_cut[e], Target::Downstream)
            };
            if target == Target::Knot(k + 1) {
                t = t_b + (a[k + 1] / l_b).ln();
                k += 1;
                self.mark(e, k..k + 1, t);
                samples.push(self.sample(t, e, grid[k], a[k])?);
                continue;
            }
            // the cut ahead undercuts the next knot: jump once the level reaches it
            let t_j = t_b + (m / l_b).ln();
            let r_pre = if k + 1 < n {
                area_crossing(&edge.profile, grid[k], grid[k + 1], m).map_err(|source| TreeError::Profile { edge: e, source })?
            } else {
                grid[k]
            };
            let pre = self.sample(t_j, e, r_pre, m)?;
            samples.push(pre);
            if t_j > self.t_max {
                break ComponentEnd::Alive;
            }
            match target {
                Target::Knot(l) => {
                    self.mark(e, k + 1..l + 1, t_j);
                    let post = self.sample(t_j, e, grid[l], a[l])?;
                    samples.push(post);
                    self.events.push(FlowEvent {
                        time: t_j,
                        kind: EventKind::Jump,
                        component: id,
                        old_cut: vec![CutPoint { edge: e, r: r_pre }],
                        new_cut: vec![CutPoint { edge: e, r: grid[l] }],
                        area_before: pre.area,
                        area_after: post.area,
                    });
                    k = l;
                    t = t_j;
                }
                Target::Downstream => {
                    self.mark(e, k + 1..n, t_j);
                    let mut cut = Vec::new();
                    self.descend(e, t_j, &mut cut);
                    let at_head = cut.len() == edge.children.len()
                        && cut.iter().zip(&edge.children).all(|(&(c, l), &ch)| c == ch && l == 0);
                    let mut area_after = 0.0;
                    for &(c, l) in &cut {
                        area_after += geometry_at(tree, c, tree.edges[c].profile.grid()[l])?.area;
                        queue.push_back(Birth {
                            parent: Some(id),
                            edge: c,
                            knot: l,
                            time: t_j,
                        });
                    }
                    self.events.push(FlowEvent {
                        time: t_j,
                        kind: if at_head { EventKind::JunctionCrossing } else { EventKind::Jump },
                        component: id,
                        old_cut: vec![CutPoint { edge: e, r: r_pre }],
                        new_cut: self.cut_points(&cut),
                        area_before: pre.area,
                        area_after,
                    });
                    break ComponentEnd::Split(t_j);
                }
            }
        };
        Ok(ComponentTrace {
            id,
            parent: birth.parent,
            birth_time: t_b,
            end,
            samples,
        })
    }
}

/// Runs the weak flow from the initial slice at the root tail up to `t_max`
/// (which may be infinite: the run then ends when a leaf grid is exhausted).
pub fn solve_tree_flow(tree: &TreeManifold, t_max: f64) -> Result<TreeFlowResult, TreeError> {
    if !(t_max > 0.0) {
        return Err(TreeError::InvalidInput(format!("t_max must be positive, got {t_max}")));
    }
    for (i, e) in tree.edges.iter().enumerate() {
        if let Some((k, &phi)) = e
            .profile
            .phi_knots()
            .iter()
            .enumerate()
            .find(|(_, p)| **p < PINCH_THRESHOLD)
        {
            return Err(TreeError::PinchedEdge {
                edge: i,
                r: e.profile.grid()[k],
                phi,
            });
        }
    }
    let (env, head_cut) = envelopes(tree);
    let mut solver = Solver {
        tree,
        env,
        head_cut,
        arrival: tree.edges.iter().map(|e| vec![f64::INFINITY; e.areas.len()]).collect(),
        events: Vec::new(),
        t_max,
    };

    // the initial slice is replaced by its least-area enclosure
    let root = tree.root_edge;
    let mut initial = Vec::new();
    match solver.env[root].target[0] {
        Target::Knot(l) => {
            solver.mark(root, 0..l, 0.0);
            initial.push((root, l));
        }
        Target::Downstream => {
            let n = tree.edges[root].areas.len();
            solver.mark(root, 0..n, 0.0);
            solver.descend(root, 0.0, &mut initial);
        }
    }
    if initial != [(root, 0)] {
        let r0 = tree.edges[root].profile.r_min();
        let mut area_after = 0.0;
        for &(c, l) in &initial {
            area_after += geometry_at(tree, c, tree.edges[c].profile.grid()[l])?.area;
        }
        solver.events.push(FlowEvent {
            time: 0.0,
            kind: EventKind::InitialHull,
            component: 0,
            old_cut: vec![CutPoint { edge: root, r: r0 }],
            new_cut: solver.cut_points(&initial),
            area_before: geometry_at(tree, root, r0)?.area,
            area_after,
        });
    }
    let hull_area = solver.cut_area(&initial);
    debug_assert!(hull_area > 0.0);

    let mut queue: VecDeque<Birth> = initial
        .into_iter()
        .map(|(edge, knot)| Birth {
            parent: None,
            edge,
            knot,
            time: 0.0,
        })
        .collect();
    let mut components = Vec::new();
    while let Some(birth) = queue.pop_front() {
        let id = components.len();
        components.push(solver.run(id, &birth, &mut queue)?);
    }
    // order events by time, keeping creation order for simultaneous ones
    solver.events.sort_by(|a, b| a.time.total_cmp(&b.time));

    let mut t_end = t_max;
    let mut saturation = None;
    for c in &components {
        match c.end {
            ComponentEnd::Truncated(t) => t_end = t_end.min(t),
            ComponentEnd::Saturated(t) if t <= t_max => {
                t_end = t_end.min(t);
                if saturation.is_none_or(|(s, _)| t < s) {
                    let last = c.samples[c.samples.len() - 1];
                    saturation = Some((t, (last.edge, last.area)));
                }
            }
            _ => {}
        }
    }
    if !t_end.is_finite() {
        return Err(TreeError::InvalidInput("flow never terminates; give a finite t_max".into()));
    }
    let t_split = components
        .iter()
        .map(|c| c.birth_time)
        .filter(|&t| t <= t_end)
        .fold(f64::INFINITY, |best, t| {
            let n = components.iter().filter(|c| c.alive_after(t)).count();
            if n >= 2 {
                best.min(t)
            } else {
                best
            }
        });
    let trace = assemble_trace(tree, &components, &solver.events, &solver.arrival, t_end)?;
    let result = TreeFlowResult {
        components,
        events: solver.events,
        arrival: solver.arrival,
        t_split,
        t_end,
        t_max,
        max_spacing: tree.max_spacing(),
        trace,
    };
    if let Some((time, (edge, saturation))) = saturation {
        return Err(TreeError::NonProper {
            edge,
            saturation,
            time,
            partial: Box::new(result),
        });
    }
    Ok(result)
}

/// Samples the whole front at every component sample time up to `t_end`,
/// with before/after pairs at events.
fn assemble_trace(
    tree: &TreeManifold,
    components: &[ComponentTrace],
    events: &[FlowEvent],
    arrival: &[Vec<f64>],
    t_end: f64,
) -> Result<FlowTrace, TreeError> {
    let mut times: Vec<f64> = components
        .iter()
        .flat_map(|c| c.samples.iter().map(|s| s.t))
        .filter(|&t| t <= t_end)
        .chain([0.0, t_end])
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    // knot curvatures in order of arrival, for the swept-region minimum
    let mut swept = Vec::new();
    for (e, u) in arrival.iter().enumerate() {
        for (k, &t) in u.iter().enumerate() {
            if t <= t_end {
                let r = tree.edges[e].profile.grid()[k];
                swept.push((t, geometry_at(tree, e, r)?.scalar_curvature_ambient));
            }
        }
    }
    swept.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut next_swept = 0;
    let mut min_r = f64::INFINITY;

    let mut samples = Vec::with_capacity(times.len() + 2 * events.len());
    for &t in &times {
        let event_here = t > 0.0
            && events
                .iter()
                .any(|e| e.time == t && matches!(e.kind, EventKind::Jump | EventKind::JunctionCrossing));
        if event_here {
            while next_swept < swept.len() && swept[next_swept].0 < t {
                min_r = min_r.min(swept[next_swept].1);
                next_swept += 1;
            }
            let front: Vec<(usize, f64)> = components
                .iter()
                .filter(|c| c.alive_before(t))
                .map(|c| c.position_before(tree, t))
                .collect();
            samples.push(front_sample(tree, t, &front, &mut min_r, false)?);
        }
        while next_swept < swept.len() && swept[next_swept].0 <= t {
            min_r = min_r.min(swept[next_swept].1);
            next_swept += 1;
        }
        let front: Vec<(usize, f64)> = components
            .iter()
            .filter(|c| c.alive_after(t))
            .map(|c| c.position_after(tree, t))
            .collect();
        samples.push(front_sample(tree, t, &front, &mut min_r, event_here)?);
    }
    Ok(FlowTrace::new(samples)?)
}

fn front_sample(
    tree: &TreeManifold,
    t: f64,
    front: &[(usize, f64)],
    min_r: &mut f64,
    is_jump: bool,
) -> Result<TraceSample, TreeError> {
    let (mut area, mut willmore, mut r_integral) = (0.0, 0.0, 0.0);
    for &(e, r) in front {
        let g = geometry_at(tree, e, r)?;
        area += g.area;
        willmore += g.willmore;
        r_integral += g.scalar_curvature_ambient * g.area;
        *min_r = min_r.min(g.scalar_curvature_ambient);
    }
    Ok(TraceSample {
        t,
        n_components: front.len(),
        total_area: area,
        chi: 2 * front.len() as i64,
        willmore,
        min_r: *min_r,
        hawking: hawking_mass(area, willmore),
        is_jump,
        r_integral: Some(r_integral),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn flat_edge(tail: usize, head: usize, r0: f64, r1: f64) -> EdgeSpec {
        EdgeSpec {
            tail,
            head,
            profile: WarpProfile::flat(r0, r1, 200).unwrap(),
            length: None,
        }
    }

    #[test]
    fn rejects_cycle_and_counts() {
        let mut spec = TreeSpec {
            vertices: vec![0, 1, 2],
            edges: vec![flat_edge(0, 1, 1.0, 2.0), flat_edge(1, 2, 2.0, 3.0), flat_edge(2, 1, 3.0, 4.0)],
            root_edge: 0,
            systole_floor: None,
            epsilon_junction: 1e-6,
        };
        assert!(matches!(build_tree(&spec), Err(TreeError::NotATree(_))));
        spec.edges.pop();
        spec.edges[1] = flat_edge(2, 1, 2.0, 3.0);
        assert!(matches!(build_tree(&spec), Err(TreeError::NotATree(_))));
    }

    #[test]
    fn path_graph_never_splits() {
        let spec = TreeSpec {
            vertices: vec![0, 1, 2],
            edges: vec![flat_edge(0, 1, 1.0, 2.0), flat_edge(1, 2, 2.0, 3.0)],
            root_edge: 0,
            systole_floor: None,
            epsilon_junction: 1e-6,
        };
        let tree = build_tree(&spec).unwrap();
        let res = solve_tree_flow(&tree, 3.0).unwrap();
        assert_eq!(res.t_split(), f64::INFINITY);
        assert!(res.trace().samples().iter().all(|s| s.chi == 2));
        assert_eq!(res.events().iter().filter(|e| e.kind == EventKind::JunctionCrossing).count(), 1);
        let u = res.arrival_times(1);
        assert!((u[u.len() - 1] - 2.0 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn text_round_trip() {
        let spec = TreeSpec {
            vertices: vec![4, 7],
            edges: vec![flat_edge(4, 7, 1.0, 2.0)],
            root_edge: 0,
            systole_floor: Some(4.0 * PI),
            epsilon_junction: 1e-6,
        };
        let back = TreeSpec::from_text(&spec.to_text()).unwrap();
        assert_eq!(back.vertices, spec.vertices);
        assert_eq!(back.systole_floor, spec.systole_floor);
        assert_eq!(back.edges[0].profile, spec.edges[0].profile);
        build_tree(&back).unwrap();
    }
}
