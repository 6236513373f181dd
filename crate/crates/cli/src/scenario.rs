//! Scenario files: a versioned TOML schema naming the run kind, its inputs,
//! numeric parameters and optional expectations.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use weak_imcf::geometry::{ProfileDoc, MIN_SAMPLED_INTERVALS};

use crate::ConfigError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    LineFlow,
    TreeFlow,
    AuditOnly,
    NeckBuild,
    GapCheck,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::LineFlow => "line-flow",
            Kind::TreeFlow => "tree-flow",
            Kind::AuditOnly => "audit-only",
            Kind::NeckBuild => "neck-build",
            Kind::GapCheck => "gap-check",
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    /// Grid intervals for generated models and closed-form profiles.
    pub intervals: Option<usize>,
    pub t_max: Option<f64>,
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub a0: Option<f64>,
    /// Barrier constant of the neck builder.
    pub c0: Option<f64>,
    pub tol_scale: Option<f64>,
    pub area_tol: Option<f64>,
    pub r_start: Option<f64>,
    /// Random competitors for the weak-solution certificate.
    pub trials: Option<usize>,
    /// Neck length.
    pub length: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Model {
    PscDumbbell {
        #[serde(default = "one")]
        start_phi: f64,
        #[serde(default = "default_slope")]
        slope: [f64; 2],
        #[serde(default = "default_length")]
        length: f64,
    },
    DumbbellTree,
    StarTree {
        a0: f64,
        branch_areas: Vec<f64>,
        branch_length: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn default_slope() -> [f64; 2] {
    [0.2, 0.32]
}

fn default_length() -> f64 {
    20.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SurfaceInput {
    Round { radius: f64 },
    Perturbed { radius: f64, amplitude: f64, mode: u32 },
    Sampled { a: Vec<f64> },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub profile: Option<ProfileDoc>,
    pub profile_file: Option<PathBuf>,
    pub tree: Option<toml::Table>,
    pub tree_file: Option<PathBuf>,
    pub trace_file: Option<PathBuf>,
    pub surface: Option<SurfaceInput>,
    pub surface_file: Option<PathBuf>,
    pub model: Option<Model>,
}

/// A named assertion: either a check must end with `status`, or a
/// reported quantity must lie in `[min, max]` (or within `tol` of `value`).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub check: Option<String>,
    pub status: Option<String>,
    pub quantity: Option<String>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub value: Option<f64>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub kind: Kind,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default)]
    pub expect: Vec<Expectation>,
    /// Directory that relative input paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Scenario {
    pub fn from_text(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut s: Scenario = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        s.base_dir = base_dir.to_path_buf();
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_text(&text, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {}", self.schema_version));
        }
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return bad(format!("name {:?} must be nonempty ASCII letters, digits, '-', '_' or '.'", self.name));
        }
        let p = &self.parameters;
        if let Some(n) = p.intervals.filter(|&n| n < MIN_SAMPLED_INTERVALS) {
            return bad(format!("intervals must be at least {MIN_SAMPLED_INTERVALS}, got {n}"));
        }
        for (key, v) in [("t_max", p.t_max), ("tol_scale", p.tol_scale), ("area_tol", p.area_tol), ("length", p.length)] {
            if let Some(v) = v.filter(|v| !(*v > 0.0)) {
                return bad(format!("{key} must be positive, got {v}"));
            }
        }
        let i = &self.inputs;
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{} scenario needs {what}", self.kind.name())))
            }
        };
        let one_of = |opts: &[bool], what: &str| need(opts.iter().filter(|&&b| b).count() == 1, what);
        match self.kind {
            Kind::LineFlow => one_of(
                &[
                    i.profile.is_some(),
                    i.profile_file.is_some(),
                    matches!(i.model, Some(Model::PscDumbbell { .. })),
                ],
                "exactly one of inputs.profile, inputs.profile_file or a psc-dumbbell model",
            )?,
            Kind::TreeFlow => one_of(
                &[
                    i.tree.is_some(),
                    i.tree_file.is_some(),
                    matches!(i.model, Some(Model::DumbbellTree | Model::StarTree { .. })),
                ],
                "exactly one of inputs.tree, inputs.tree_file or a tree model",
            )?,
            Kind::AuditOnly => need(i.trace_file.is_some(), "inputs.trace_file")?,
            Kind::NeckBuild => {
                one_of(&[i.surface.is_some(), i.surface_file.is_some()], "exactly one of inputs.surface or inputs.surface_file")?;
                need(p.lambda.is_some(), "parameters.lambda")?;
            }
            Kind::GapCheck => need(p.lambda.is_some() && p.a0.is_some(), "parameters.lambda and parameters.a0")?,
        }
        for e in &self.expect {
            let ok = match (&e.check, &e.quantity) {
                (Some(_), None) => matches!(e.status.as_deref(), Some("pass" | "fail" | "n/a")),
                (None, Some(_)) => e.status.is_none() && (e.min.is_some() || e.max.is_some() || e.value.is_some()),
                _ => false,
            };
            if !ok {
                return bad(format!(
                    "expectation {e:?} must be check + status (pass, fail or n/a) or quantity + min/max/value"
                ));
            }
        }
        Ok(())
    }
}
