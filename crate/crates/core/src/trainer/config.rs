use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fieldnet::Activation;
use crate::geometry::ReferenceDomain;
use crate::problems::{BoundaryCondition, Param, ParameterSpace, ProblemSpec, Source, Transform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Case {
    PdeSolve,
    LearnMap,
    ShapeDirichlet,
    ShapeRobin,
    Bernoulli,
    /// Evaluation of a saved checkpoint named by `[eval] checkpoint`.
    Eval,
}

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Case::PdeSolve => "pde-solve",
            Case::LearnMap => "learn-map",
            Case::ShapeDirichlet => "shape-dirichlet",
            Case::ShapeRobin => "shape-robin",
            Case::Bernoulli => "bernoulli",
            Case::Eval => "eval",
        }
    }

    pub fn trains_field(self) -> bool {
        !matches!(self, Case::LearnMap | Case::Eval)
    }

    pub fn trains_map(self) -> bool {
        matches!(
            self,
            Case::LearnMap | Case::ShapeDirichlet | Case::ShapeRobin | Case::Bernoulli
        )
    }
}

/// Fixed domain map, or the target map of the learn-map case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapConfig {
    Identity,
    Benchmark { lambda: Param },
}

impl MapConfig {
    pub fn transform(self) -> Transform {
        match self {
            MapConfig::Identity => Transform::Identity,
            MapConfig::Benchmark { lambda } => Transform::Benchmark { lambda },
        }
    }
}

fn default_volume() -> f64 {
    std::f64::consts::PI
}

fn default_bc() -> BoundaryCondition {
    BoundaryCondition::Dirichlet
}

fn default_source() -> Source {
    Source::Constant {
        value: Param::Fixed(1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default = "default_bc")]
    pub bc: BoundaryCondition,
    #[serde(default = "default_source")]
    pub source: Source,
    /// Area of the reference disk; ignored when `domain` is given.
    #[serde(default = "default_volume")]
    pub volume: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<ReferenceDomain>,
    #[serde(default, skip_serializing_if = "ParameterSpace::is_empty")]
    pub mu_space: ParameterSpace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<MapConfig>,
}

impl ProblemConfig {
    pub fn spec(&self) -> ProblemSpec {
        ProblemSpec {
            bc: self.bc,
            source: self.source,
            domain: self
                .domain
                .unwrap_or_else(|| ReferenceDomain::disk_with_volume(self.volume)),
            mu_space: self.mu_space.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldNetConfig {
    pub hidden: Vec<usize>,
    #[serde(default = "tanh")]
    pub activation: Activation,
    pub lr: f64,
}

fn tanh() -> Activation {
    Activation::Tanh
}

fn sigmoid() -> Activation {
    Activation::Sigmoid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SympNetConfig {
    /// Number of gradient modules, alternating up and down.
    pub modules: usize,
    pub width: usize,
    #[serde(default = "sigmoid")]
    pub activation: Activation,
    pub lr: f64,
}

fn default_penalty_weight() -> f64 {
    1.0
}

fn default_penalty_lr() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Interior collocation points per epoch.
    pub points: usize,
    /// Boundary samples per epoch; defaults to `points`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_points: Option<usize>,
    /// First epoch (zero-based) of the Bernoulli boundary penalty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_epoch: Option<usize>,
    #[serde(default = "default_penalty_weight")]
    pub penalty_weight: f64,
    /// Learning rate of both networks once the penalty is active.
    #[serde(default = "default_penalty_lr")]
    pub penalty_lr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
}

impl TrainConfig {
    pub fn boundary_points(&self) -> usize {
        self.boundary_points.unwrap_or(self.points)
    }

    pub fn checkpoint_every(&self) -> usize {
        self.checkpoint_every.unwrap_or((self.epochs / 20).max(1))
    }

    pub fn penalty_active(&self, epoch: usize) -> bool {
        self.penalty_epoch.is_some_and(|e| epoch >= e)
    }
}

fn d_boundary() -> usize {
    2000
}
fn d_mc() -> usize {
    20000
}
fn d_mu() -> usize {
    10
}
fn d_test() -> usize {
    1000
}
fn d_field() -> usize {
    2000
}
fn d_plot() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Points on each boundary curve for the Hausdorff and optimality metrics.
    #[serde(default = "d_boundary")]
    pub boundary_points: usize,
    /// Monte-Carlo points for the L2 error, energy and variational residual.
    #[serde(default = "d_mc")]
    pub mc_points: usize,
    /// Parameter samples for per-mu statistics.
    #[serde(default = "d_mu")]
    pub mu_samples: usize,
    #[serde(default = "d_test")]
    pub test_functions: usize,
    /// Field samples per plotted parameter in `field.csv`.
    #[serde(default = "d_field")]
    pub field_points: usize,
    /// Parameter values drawn in the plots and CSV files.
    #[serde(default = "d_plot")]
    pub plot_mu: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            boundary_points: d_boundary(),
            mc_points: d_mc(),
            mu_samples: d_mu(),
            test_functions: d_test(),
            field_points: d_field(),
            plot_mu: d_plot(),
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: Case,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub problem: ProblemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fieldnet: Option<FieldNetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sympnet: Option<SympNetConfig>,
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the configuration with the output directory and worker
    /// count cleared, which do not affect results.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        c.workers = None;
        let text = toml::to_string(&c).expect("configuration serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn spec(&self) -> ProblemSpec {
        self.problem.spec()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let spec = self.spec();
        spec.validate()?;
        if !(self.problem.volume > 0.0) {
            return bad("problem.volume must be positive".into());
        }
        let t = &self.train;
        if t.epochs == 0 {
            return bad("train.epochs must be at least 1".into());
        }
        if t.points == 0 || t.boundary_points == Some(0) {
            return bad("train.points must be at least 1".into());
        }
        if !(t.penalty_lr > 0.0) || !(t.penalty_weight >= 0.0) {
            return bad("train.penalty_lr must be positive and penalty_weight nonnegative".into());
        }
        if t.checkpoint_every == Some(0) {
            return bad("train.checkpoint_every must be at least 1".into());
        }
        let e = &self.eval;
        if e.boundary_points < 16 || e.mc_points == 0 || e.mu_samples == 0 || e.test_functions == 0
        {
            return bad("eval sample counts must be positive (boundary_points >= 16)".into());
        }
        let needs_field = self.case.trains_field();
        let needs_map = self.case.trains_map();
        match (&self.fieldnet, needs_field) {
            (None, true) => {
                return bad(format!(
                    "case {} needs a [fieldnet] section",
                    self.case.name()
                ))
            }
            (Some(f), _) => {
                if f.hidden.iter().any(|&w| w == 0) {
                    return bad("fieldnet.hidden widths must be positive".into());
                }
                if !(f.lr > 0.0) {
                    return bad("fieldnet.lr must be positive".into());
                }
            }
            _ => {}
        }
        match (&self.sympnet, needs_map) {
            (None, true) => {
                return bad(format!(
                    "case {} needs a [sympnet] section",
                    self.case.name()
                ))
            }
            (Some(s), _) => {
                if s.modules == 0 || s.width == 0 {
                    return bad("sympnet.modules and sympnet.width must be positive".into());
                }
                if !(s.lr > 0.0) {
                    return bad("sympnet.lr must be positive".into());
                }
            }
            _ => {}
        }
        let bc = spec.bc;
        let disk = matches!(spec.domain, ReferenceDomain::Disk { .. });
        match self.case {
            Case::PdeSolve => {
                if matches!(bc, BoundaryCondition::Bernoulli { .. }) {
                    return bad("pde-solve supports Dirichlet and Robin conditions".into());
                }
            }
            Case::LearnMap => {
                if !matches!(self.problem.transform, Some(MapConfig::Benchmark { .. })) {
                    return bad(
                        "learn-map needs problem.transform = { kind = \"benchmark\", ... }".into(),
                    );
                }
            }
            Case::ShapeDirichlet | Case::ShapeRobin | Case::Bernoulli => {
                let ok = matches!(
                    (self.case, bc),
                    (Case::ShapeDirichlet, BoundaryCondition::Dirichlet)
                        | (Case::ShapeRobin, BoundaryCondition::Robin { .. })
                        | (Case::Bernoulli, BoundaryCondition::Bernoulli { .. })
                );
                if !ok {
                    return bad(format!(
                        "case {} does not match problem.bc",
                        self.case.name()
                    ));
                }
                if self.problem.transform.is_some() {
                    return bad("shape cases learn the map; remove problem.transform".into());
                }
                if !disk {
                    return bad("shape cases use a disk reference domain".into());
                }
                if self.case == Case::Bernoulli && !spec.mu_space.is_empty() {
                    return bad("the Bernoulli case is not parametric".into());
                }
            }
            Case::Eval => {
                if e.checkpoint.is_none() {
                    return bad("case eval needs eval.checkpoint".into());
                }
            }
        }
        Ok(())
    }

    /// Transform used by fixed-domain cases.
    pub fn fixed_transform(&self) -> Transform {
        self.problem
            .transform
            .unwrap_or(MapConfig::Identity)
            .transform()
    }
}
