//! Scenario configuration files.

use collisionless::boundary::{AlphaField, DiffuseKernel, KernelSpec, PartlyDiffuseBoundary, ReflectionLaw};
use collisionless::geometry::{Domain, DomainKind, GeometryTolerances, StarShape};
use collisionless::pdmp::SimOptions;
use collisionless::spectral::{GridSpec, PhaseSpec, PowerOptions, ResolventOptions};
use collisionless::vmeasure::VelocityMeasure;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub domain: DomainConfig,
    pub measure: MeasureConfig,
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub grids: GridsConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub outputs: OutputsConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainConfig {
    Disk { radius: f64 },
    Ball { radius: f64 },
    Ellipse { a: f64, b: f64 },
    Annulus { inner: f64, outer: f64 },
    Star { r0: f64, #[serde(default)] cos: Vec<f64>, #[serde(default)] sin: Vec<f64> },
}

impl DomainConfig {
    fn kind(&self) -> DomainKind {
        match self {
            DomainConfig::Disk { radius } => DomainKind::Disk { radius: *radius },
            DomainConfig::Ball { radius } => DomainKind::Ball { radius: *radius },
            DomainConfig::Ellipse { a, b } => DomainKind::Ellipse { a: *a, b: *b },
            DomainConfig::Annulus { inner, outer } => DomainKind::Annulus { inner: *inner, outer: *outer },
            DomainConfig::Star { r0, cos, sin } => DomainKind::Star(StarShape { r0: *r0, cos: cos.clone(), sin: sin.clone() }),
        }
    }

    pub fn dimension(&self) -> usize {
        if matches!(self, DomainConfig::Ball { .. }) {
            3
        } else {
            2
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureConfig {
    /// Lebesgue measure on `rho_min <= |v| <= rho_max`.
    Lebesgue { rho_min: f64, rho_max: f64 },
    SingleSpeed { speed: f64, #[serde(default = "one")] mass: f64 },
    /// `(speed, mass)` pairs.
    Multigroup { groups: Vec<(f64, f64)> },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reflection {
    Specular,
    BounceBack,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub alpha: AlphaField,
    pub reflection: Reflection,
    pub kernel: KernelSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridsConfig {
    pub trace: GridSpec,
    /// Phase grid for the invariant density and the particle comparison.
    pub phase: PhaseSpec,
    /// Speed floors `2^-1 .. 2^-levels` of the additional condition.
    pub levels: u32,
    /// Refinements of the trace grid applied before solving.
    pub refinement: u32,
}

impl Default for GridsConfig {
    fn default() -> Self {
        GridsConfig { trace: GridSpec::default(), phase: PhaseSpec::default(), levels: 7, refinement: 0 }
    }
}

impl GridsConfig {
    pub fn trace_spec(&self) -> GridSpec {
        (0..self.refinement).fold(self.trace.clone(), |g, _| g.refined())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Initial {
    Uniform,
    /// Cell masses read from the `invariant` file.
    Invariant,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub particles: usize,
    pub t_end: f64,
    /// Spacing of the sample times `dt, 2 dt, ..` up to `t_end`.
    pub dt: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Upper speed of the compact set `F`.
    #[serde(default = "default_m")]
    pub m: f64,
    #[serde(default = "default_initial")]
    pub initial: Initial,
    /// `psi.csv` from a spectral run, relative to the configuration file; enables
    /// `l1_to_invariant`.
    #[serde(default)]
    pub invariant: Option<PathBuf>,
}

fn default_eps() -> f64 {
    0.1
}

fn default_m() -> f64 {
    4.0
}

fn default_initial() -> Initial {
    Initial::Uniform
}

impl RunConfig {
    pub fn times(&self) -> Vec<f64> {
        let n = (self.t_end / self.dt + 1e-9).floor() as usize;
        (1..=n).map(|k| k as f64 * self.dt).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsConfig {
    /// Relative to the configuration file.
    pub dir: PathBuf,
    /// Write `M0` and `H` in coordinate format.
    pub operators: bool,
    /// Operators with more entries are skipped.
    pub max_operator_nnz: usize,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        OutputsConfig { dir: PathBuf::from("out"), operators: true, max_operator_nnz: 20_000_000 }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub geometry: GeometryTolerances,
    pub power: PowerOptions,
    pub resolvent: ResolventOptions,
    pub simulation: SimOptions,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    Refinement,
    Particles,
    P,
    Alpha,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: Axis,
    pub values: Vec<f64>,
}

/// A configuration error with the offending location.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError(format!("{}: {e}", origin.display())))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), ConfigError> {
        let r = &self.run;
        if !(r.eps > 0.0 && r.eps < r.m) {
            return Err(ConfigError(format!("run.eps must satisfy 0 < eps < m, got eps = {} and m = {}", r.eps, r.m)));
        }
        if !(r.dt > 0.0 && r.t_end >= r.dt) {
            return Err(ConfigError(format!("run.dt must be positive and at most run.t_end, got {} and {}", r.dt, r.t_end)));
        }
        if r.particles == 0 {
            return Err(ConfigError("run.particles must be positive".into()));
        }
        if r.initial == Initial::Invariant && r.invariant.is_none() {
            return Err(ConfigError("run.initial = \"invariant\" needs run.invariant".into()));
        }
        self.domain().map_err(|e| ConfigError(format!("domain: {e}")))?;
        self.measure().map_err(|e| ConfigError(format!("measure: {e}")))?;
        self.boundary().map_err(|e| ConfigError(format!("boundary: {e}")))?;
        Ok(())
    }

    pub fn domain(&self) -> collisionless::Result<Domain> {
        Domain::with_tolerances(self.domain.kind(), self.tolerances.geometry)
    }

    pub fn measure(&self) -> collisionless::Result<VelocityMeasure> {
        let d = self.domain.dimension();
        match &self.measure {
            MeasureConfig::Lebesgue { rho_min, rho_max } => VelocityMeasure::lebesgue_annulus(d, *rho_min, *rho_max),
            MeasureConfig::SingleSpeed { speed, mass } => VelocityMeasure::single_speed(d, *speed, *mass),
            MeasureConfig::Multigroup { groups } => VelocityMeasure::multigroup(d, groups.clone()),
        }
    }

    pub fn boundary(&self) -> collisionless::Result<PartlyDiffuseBoundary> {
        self.boundary_with(self.boundary.alpha.clone(), self.boundary.kernel.clone())
    }

    pub fn boundary_with(&self, alpha: AlphaField, kernel: KernelSpec) -> collisionless::Result<PartlyDiffuseBoundary> {
        let k = DiffuseKernel::new(kernel, &self.measure()?)?;
        let law = match self.boundary.reflection {
            Reflection::Specular => ReflectionLaw::Specular,
            Reflection::BounceBack => ReflectionLaw::BounceBack,
        };
        PartlyDiffuseBoundary::new(alpha, law, k)
    }
}
