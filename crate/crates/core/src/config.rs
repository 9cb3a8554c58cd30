//! Case configurations and the shipped presets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collocation::Placement;
use crate::loss::WeightVector;
use crate::model::ArchSpec;
use crate::physics::{HeatFlux, PhysicalCase, PhysicsError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("malformed configuration: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Loss terms of the flow problem (3-D adds e19–e21).
pub const FLOW_TERMS: [usize; 8] = [1, 2, 3, 6, 7, 10, 13, 14];
pub const FLOW_TERMS_3D: [usize; 3] = [19, 20, 21];
pub const HEAT_TERMS: [usize; 8] = [4, 5, 8, 9, 11, 12, 15, 16];
pub const DATA_TERMS: [usize; 2] = [17, 18];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Flow,
    HeatStepwise,
    Joint,
    Inverse,
    Transfer,
}

/// Which problem size a preset is instantiated at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Desk,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub adam_epochs: u64,
    pub adam_lr: f64,
    pub lbfgs_max_iters: u64,
    pub mode: Mode,
    #[serde(default)]
    pub source_checkpoint: Option<String>,
    /// Components frozen before training. Empty means the mode's default.
    #[serde(default)]
    pub frozen_components: Vec<String>,
}

impl Schedule {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.adam_lr > 0.0 && self.adam_lr.is_finite()) {
            return Err(ConfigError::Invalid(format!("adam_lr = {}", self.adam_lr)));
        }
        if matches!(self.mode, Mode::Transfer | Mode::HeatStepwise) && self.source_checkpoint.is_none() {
            return Err(ConfigError::Invalid(format!(
                "mode {:?} needs a source checkpoint",
                self.mode
            )));
        }
        Ok(())
    }
}

/// Collocation point counts. `wall` is per wall facet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointCounts {
    pub interior: usize,
    pub inlet: usize,
    pub outlet: usize,
    pub wall: usize,
    #[serde(default)]
    pub placement: Placement,
}

/// Labeled outlet data for inverse runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSpec {
    pub n_points: usize,
    /// Relative amplitude of the multiplicative noise, e.g. 0.01 for 1 %.
    #[serde(default)]
    pub noise: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub id: String,
    pub physics: PhysicalCase,
    /// Weights of the full forward problem; modes select their subset.
    pub weights: WeightVector,
    pub points: PointCounts,
    pub arch: ArchSpec,
    pub schedule: Schedule,
    /// Oracle grid node counts `[nx, ny(, nz)]`.
    pub grid: Vec<usize>,
    #[serde(default)]
    pub labels: Option<LabelSpec>,
}

impl CaseConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.physics.validate()?;
        self.schedule.validate()?;
        self.arch
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.arch.input_dim != self.physics.dim {
            return Err(ConfigError::Invalid("network input dimension differs from case".into()));
        }
        if self.grid.len() != self.physics.dim || self.grid.iter().any(|&n| n < 3) {
            return Err(ConfigError::Invalid(format!("grid {:?}", self.grid)));
        }
        let p = &self.points;
        if p.interior == 0 || p.inlet == 0 || p.outlet == 0 || p.wall == 0 {
            return Err(ConfigError::Invalid("every point set needs at least one point".into()));
        }
        let outputs = self.arch.outputs();
        let need: &[&str] = match self.schedule.mode {
            Mode::Flow | Mode::Transfer if !self.is_heat() => &["u", "v", "p"],
            _ => &["u", "v", "p", "hk", "ts"],
        };
        for n in need {
            if !outputs.iter().any(|o| o == n) {
                return Err(ConfigError::Invalid(format!("network lacks output `{n}`")));
            }
        }
        if self.physics.dim == 3 && !outputs.iter().any(|o| o == "w") {
            return Err(ConfigError::Invalid("3-D case needs output `w`".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let c: CaseConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    /// Whether the weights include any heat-transfer term.
    pub fn is_heat(&self) -> bool {
        HEAT_TERMS.iter().any(|&j| self.weights.is_active(j))
    }

    /// Flow terms of this case's dimension.
    pub fn flow_terms(&self) -> Vec<usize> {
        let mut t = FLOW_TERMS.to_vec();
        if self.physics.dim == 3 {
            t.extend(FLOW_TERMS_3D);
        }
        t
    }

    /// The case weights restricted to `terms`.
    pub fn weights_for(&self, terms: &[usize]) -> WeightVector {
        let mut w = self.weights.clone();
        for j in 1..=w.lambda.len() {
            if !terms.contains(&j) {
                w.deactivate(j);
            }
        }
        w
    }
}

/// Names of every shipped preset.
pub const PRESETS: &[&str] = &[
    "A", "B", "C", "D", "E", "F", "inverse-D", "inverse-E", "inverse-F", "eps-0.4", "eps-0.5", "eps-0.9",
    "eps-0.9-K", "low-pressure-A", "low-pressure-B", "linear-q", "3d", "joint-1", "joint-2", "joint-3",
    "noise-0.1", "noise-0.2", "noise-0.5", "noise-1.0", "fnn-0.1", "fnn-0.5", "fnn-1.0", "fnn-2.0",
];

struct Sizes {
    trunk: (usize, usize),
    flow_branch: (usize, usize),
    heat_branch: (usize, usize),
    points: PointCounts,
    grid: Vec<usize>,
    adam: u64,
    lbfgs: u64,
}

fn sizes_2d(scale: Scale) -> Sizes {
    match scale {
        Scale::Full => Sizes {
            trunk: (4, 100),
            flow_branch: (2, 50),
            heat_branch: (4, 100),
            points: PointCounts {
                interior: 20000,
                inlet: 400,
                outlet: 400,
                wall: 100,
                placement: Placement::Random,
            },
            grid: vec![400, 500],
            adam: 100_000,
            lbfgs: 20_000,
        },
        Scale::Desk => Sizes {
            trunk: (4, 32),
            flow_branch: (2, 16),
            heat_branch: (3, 24),
            points: PointCounts {
                interior: 1000,
                inlet: 100,
                outlet: 100,
                wall: 50,
                placement: Placement::Random,
            },
            grid: vec![200, 250],
            adam: 20_000,
            lbfgs: 2_000,
        },
    }
}

fn sizes_3d(scale: Scale) -> Sizes {
    match scale {
        Scale::Full => Sizes {
            trunk: (5, 150),
            flow_branch: (3, 50),
            heat_branch: (3, 50),
            points: PointCounts {
                interior: 100_000,
                inlet: 5000,
                outlet: 5000,
                wall: 1000,
                placement: Placement::Random,
            },
            grid: vec![80, 100, 80],
            adam: 100_000,
            lbfgs: 20_000,
        },
        Scale::Desk => Sizes {
            trunk: (4, 32),
            flow_branch: (2, 16),
            heat_branch: (2, 16),
            points: PointCounts {
                interior: 1500,
                inlet: 150,
                outlet: 150,
                wall: 60,
                placement: Placement::Random,
            },
            grid: vec![40, 50, 40],
            adam: 10_000,
            lbfgs: 2_000,
        },
    }
}

fn arch(dim: usize, s: &Sizes, heat: bool) -> ArchSpec {
    let (fd, fw) = s.flow_branch;
    let (hd, hw) = s.heat_branch;
    let mut branches: Vec<(&str, usize, usize, bool)> = vec![("u", fd, fw, false), ("v", fd, fw, false)];
    if dim == 3 {
        branches.push(("w", fd, fw, false));
    }
    branches.push(("p", fd, fw, false));
    if heat {
        branches.push(("hk", hd, hw, true));
        branches.push(("ts", hd, hw, true));
    }
    ArchSpec::standard(dim, s.trunk, &branches)
}

fn flow_weights(lambda_momentum: f64, dim: usize) -> WeightVector {
    let mut w = WeightVector::from_pairs(&[
        (1, 1.0),
        (2, lambda_momentum),
        (3, lambda_momentum),
        (6, 1e2),
        (7, 1.0),
        (10, 1.0),
        (13, 1.0),
        (14, 1.0),
    ]);
    if dim == 3 {
        w.set(19, lambda_momentum);
        w.set(20, 1.0);
        w.set(21, 1.0);
    }
    w
}

fn heat_weights(lambda11: f64) -> WeightVector {
    let mut w = flow_weights(1e-10, 2);
    for (j, l) in [
        (4, 1e-22),
        (5, 1e-22),
        (8, 1e-4),
        (9, 1e-4),
        (11, lambda11),
        (12, 1e1),
        (15, 1.0),
        (16, 1.0),
    ] {
        w.set(j, l);
    }
    w
}

fn schedule(mode: Mode, adam: u64, lr: f64, lbfgs: u64) -> Schedule {
    Schedule {
        adam_epochs: adam,
        adam_lr: lr,
        lbfgs_max_iters: lbfgs,
        mode,
        source_checkpoint: None,
        frozen_components: Vec::new(),
    }
}

fn flow_case(id: &str, mass_flux: f64, lambda_momentum: f64, scale: Scale) -> CaseConfig {
    let s = sizes_2d(scale);
    CaseConfig {
        id: id.into(),
        physics: PhysicalCase::channel_2d(mass_flux, HeatFlux::Constant { value: 0.0 }),
        weights: flow_weights(lambda_momentum, 2),
        points: s.points,
        arch: arch(2, &s, false),
        schedule: schedule(Mode::Flow, s.adam, 1e-4, s.lbfgs),
        grid: s.grid,
        labels: None,
    }
}

fn heat_case(id: &str, heat_flux: HeatFlux, lambda11: f64, scale: Scale) -> CaseConfig {
    let s = sizes_2d(scale);
    CaseConfig {
        id: id.into(),
        physics: PhysicalCase::channel_2d(0.5, heat_flux),
        weights: heat_weights(lambda11),
        points: s.points,
        arch: arch(2, &s, true),
        schedule: Schedule {
            source_checkpoint: Some("B".into()),
            ..schedule(Mode::HeatStepwise, s.adam, 1e-4, s.lbfgs)
        },
        grid: s.grid,
        labels: None,
    }
}

fn inverse(mut c: CaseConfig, id: &str, n_points: usize, noise: f64) -> CaseConfig {
    c.id = id.into();
    c.schedule.mode = Mode::Inverse;
    c.weights.deactivate(11);
    c.weights.deactivate(12);
    c.weights.set(17, 1e2);
    c.weights.set(18, 1e2);
    c.labels = Some(LabelSpec { n_points, noise });
    c
}

fn transfer(mut c: CaseConfig, id: &str, source: &str) -> CaseConfig {
    c.id = id.into();
    c.schedule.mode = Mode::Transfer;
    c.schedule.source_checkpoint = Some(source.into());
    c
}

/// Instantiates a named preset at the given scale.
pub fn preset(name: &str, scale: Scale) -> Result<CaseConfig, ConfigError> {
    let flow_a = || flow_case("A", 0.1, 1e-8, scale);
    let flow_b = || flow_case("B", 0.5, 1e-10, scale);
    let heat_d = || heat_case("D", HeatFlux::Constant { value: 5e4 }, 1e-7, scale);
    let heat_e = || heat_case("E", HeatFlux::Constant { value: 1e5 }, 1e-10, scale);
    let heat_f = || heat_case("F", HeatFlux::Constant { value: 1.5e5 }, 1e-10, scale);
    let with_porosity = |eps: f64, permeability: Option<f64>, id: &str| {
        let mut c = transfer(flow_b(), id, "B");
        c.physics.porous.eps = eps;
        if let Some(k) = permeability {
            c.physics.porous.permeability = k;
        }
        c.schedule.adam_epochs = c.schedule.adam_epochs * 2 / 5;
        c
    };
    let joint = |id: &str, adam: u64, lr: f64| {
        let mut c = heat_d();
        c.id = id.into();
        c.schedule = schedule(Mode::Joint, adam, lr, 10_000);
        if scale == Scale::Desk {
            c.schedule.lbfgs_max_iters = 1_000;
        }
        c
    };
    let noisy = |id: &str, level: f64| inverse(heat_d(), id, 50, level);
    let fnn = |id: &str, mass_flux: f64| {
        let lambda = if mass_flux <= 0.1 { 1e-8 } else { 1e-10 };
        flow_case(id, mass_flux, lambda, scale)
    };
    let c = match name {
        "A" => flow_a(),
        "B" => flow_b(),
        "C" => flow_case("C", 1.0, 1e-10, scale),
        "D" => heat_d(),
        "E" => heat_e(),
        "F" => heat_f(),
        "inverse-D" => inverse(heat_d(), name, 20, 0.0),
        "inverse-E" => inverse(heat_e(), name, 20, 0.0),
        "inverse-F" => inverse(heat_f(), name, 20, 0.0),
        "eps-0.4" => with_porosity(0.4, None, name),
        "eps-0.5" => with_porosity(0.5, None, name),
        "eps-0.9" => with_porosity(0.9, None, name),
        "eps-0.9-K" => with_porosity(0.9, Some(4.86e-9), name),
        "low-pressure-A" | "low-pressure-B" => {
            let base = if name.ends_with('A') { flow_a() } else { flow_b() };
            let mut c = transfer(base, name, if name.ends_with('A') { "A" } else { "B" });
            c.physics.boundary.outlet_pressure = 5e4;
            c.schedule.adam_epochs = c.schedule.adam_epochs * 2 / 5;
            c
        }
        "linear-q" => {
            let mut c = inverse(heat_e(), name, 20, 0.0);
            c.physics.boundary.heat_flux = HeatFlux::decreasing_linear();
            c.weights.set(11, 1e-10);
            c.weights.set(12, 1e1);
            c
        }
        "3d" => {
            let s = sizes_3d(scale);
            CaseConfig {
                id: "3d".into(),
                physics: PhysicalCase::cube_3d(0.5),
                weights: flow_weights(1e-10, 3),
                points: s.points,
                arch: arch(3, &s, false),
                schedule: schedule(Mode::Flow, s.adam, 1e-4, s.lbfgs),
                grid: s.grid,
                labels: None,
            }
        }
        "joint-1" => joint(name, 5_000, 1e-4),
        "joint-2" => joint(name, 5_000, 5e-5),
        "joint-3" => joint(name, 20_000, 5e-5),
        "noise-0.1" => noisy(name, 0.001),
        "noise-0.2" => noisy(name, 0.002),
        "noise-0.5" => noisy(name, 0.005),
        "noise-1.0" => noisy(name, 0.01),
        "fnn-0.1" => fnn(name, 0.1),
        "fnn-0.5" => fnn(name, 0.5),
        "fnn-1.0" => fnn(name, 1.0),
        "fnn-2.0" => fnn(name, 2.0),
        other => return Err(ConfigError::UnknownPreset(other.to_string())),
    };
    c.validate()?;
    Ok(c)
}
