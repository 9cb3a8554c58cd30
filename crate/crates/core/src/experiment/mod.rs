//! End-to-end runs: reference solves, training dispatch by mode, evaluation
//! against the reference, and the on-disk artifact tree of one run.

mod artifacts;
mod tables;

pub use artifacts::{RunDir, RunSummary, Timing, KDE_RESOLUTION, PLOT_SAMPLES, RE_EDGES};
pub use tables::{
    architecture_row, inverse_row, transfer_row, weight_row, write_rows, ArchitectureRow, InverseRow, TransferRow,
    WeightRow,
};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{preset, CaseConfig, ConfigError, LabelSpec, Mode, Scale, Schedule};
use crate::metrics::{relative_l2, EvalReport, MetricsError, Slice, VariableMetrics};
use crate::model::{Checkpoint, FnnBaseline, ModelError, ModelSpec, Network, TBNet};
use crate::oracle::{add_noise, config_hash, solve_energy_ltne, solve_flow, Grid, OracleError, ReferenceDataset};
use crate::physics::{Nondim, Primary};
use crate::trainer::{
    sub_seed, train_fnn_flow, train_forward_flow, train_forward_heat, train_inverse, train_joint, train_transfer,
    LabeledData, Observer, TrainError, TrainingTrace,
};
use crate::collocation::{PointSet, Role};

/// Convergence tolerance of reference flow solves.
pub const FLOW_TOL: f64 = 1e-9;
/// Convergence tolerance of reference energy solves.
pub const ENERGY_TOL: f64 = 1e-10;
/// Seed of runs that do not set one.
pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

impl ExperimentError {
    /// Whether the error comes from bad input rather than a failed computation.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            ExperimentError::Config(_)
                | ExperimentError::Invalid(_)
                | ExperimentError::Json(_)
                | ExperimentError::Train(TrainError::TooManyLabels { .. })
                | ExperimentError::Train(TrainError::Config(_))
                | ExperimentError::Train(TrainError::Mode(_))
        )
    }
}

/// One run as described in a config file. Exactly one of `preset` and
/// `case` is set; the optional fields override the case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub case: Option<CaseConfig>,
    #[serde(default)]
    pub scale: Scale,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub schedule: Option<Schedule>,
    #[serde(default)]
    pub labels: Option<LabelSpec>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Source checkpoint file for modes that continue a trained network.
    #[serde(default)]
    pub source: Option<PathBuf>,
    /// Reference dataset CSV; solved afresh when absent.
    #[serde(default)]
    pub reference: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl ExperimentConfig {
    pub fn from_preset(name: &str, scale: Scale) -> Self {
        ExperimentConfig {
            preset: Some(name.to_string()),
            case: None,
            scale,
            mode: None,
            schedule: None,
            labels: None,
            seed: DEFAULT_SEED,
            source: None,
            reference: None,
            out: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let c: ExperimentConfig = serde_json::from_str(text)?;
        c.resolve()?;
        Ok(c)
    }

    /// The validated case this config describes.
    pub fn resolve(&self) -> Result<CaseConfig, ExperimentError> {
        let mut case = match (&self.preset, &self.case) {
            (Some(name), None) => preset(name, self.scale)?,
            (None, Some(c)) => c.clone(),
            _ => {
                return Err(ExperimentError::Invalid(
                    "exactly one of `preset` and `case` must be given".into(),
                ))
            }
        };
        if let Some(s) = &self.schedule {
            case.schedule = s.clone();
        }
        if let Some(m) = self.mode {
            case.schedule.mode = m;
        }
        if let Some(l) = self.labels {
            case.labels = Some(l);
        }
        if let Some(src) = &self.source {
            case.schedule.source_checkpoint = Some(src.display().to_string());
        }
        case.validate()?;
        Ok(case)
    }
}

/// Oracle grid of a case.
pub fn grid_of(case: &CaseConfig) -> Result<Grid, ExperimentError> {
    Ok(Grid::for_case(&case.physics, &case.grid)?)
}

/// Reference fields of a case: flow always, energy for heat cases.
pub fn reference(case: &CaseConfig) -> Result<ReferenceDataset, ExperimentError> {
    let grid = grid_of(case)?;
    let mut ds = solve_flow(&case.physics, &grid, FLOW_TOL)?;
    if case.is_heat() {
        ds = solve_energy_ltne(&case.physics, &ds, ENERGY_TOL)?;
    }
    ds.case_id = case.id.clone();
    ds.config_hash = config_hash(&case.physics);
    Ok(ds)
}

/// Checks that a dataset was produced for this case's physics and grid.
pub fn check_reference(case: &CaseConfig, ds: &ReferenceDataset) -> Result<(), ExperimentError> {
    if ds.grid.n != case.grid {
        return Err(ExperimentError::Invalid(format!(
            "reference grid {:?} differs from case grid {:?}",
            ds.grid.n, case.grid
        )));
    }
    if ds.config_hash != config_hash(&case.physics) {
        return Err(ExperimentError::Invalid(format!(
            "reference `{}` was solved for different physics",
            ds.case_id
        )));
    }
    if case.is_heat() && !ds.has_energy() {
        return Err(ExperimentError::Invalid("heat case needs a reference with temperatures".into()));
    }
    Ok(())
}

/// Network predictions at every grid node, in SI units.
pub fn predict<N: Network>(net: &N, case: &CaseConfig, grid: &Grid) -> Result<Vec<Primary>, ExperimentError> {
    let l = case.physics.length;
    let idx = |name: &str| net.output_index(name);
    let (iu, iv, iw, ip, ih, it) = (idx("u"), idx("v"), idx("w"), idx("p"), idx("hk"), idx("ts"));
    let pick = |out: &[f64], i: Option<usize>| i.map(|k| out[k]).unwrap_or(0.0);
    (0..grid.len())
        .map(|n| {
            let x: Vec<f64> = grid.coord(n).iter().map(|c| c / l).collect();
            let out = net.forward_eval(&x)?;
            Ok(case.physics.redim(&Nondim {
                u: pick(&out, iu),
                v: pick(&out, iv),
                w: pick(&out, iw),
                p: pick(&out, ip),
                hk: pick(&out, ih),
                ts: pick(&out, it),
            }))
        })
        .collect()
}

/// Slices reported for a case: the full field plus x̃ lines in 2-D or x̃
/// planes in 3-D.
pub fn slices_of(case: &CaseConfig) -> Vec<Slice> {
    let mut s = vec![Slice::Full];
    if case.physics.dim == 3 {
        s.extend([0.3, 0.7].map(|value| Slice::Plane { axis: 0, value }));
    } else {
        s.extend([0.2, 0.5, 0.8].map(|value| Slice::Line { value }));
    }
    s
}

/// Nodes of `slice`, using the grid column nearest to the requested x̃.
pub fn slice_nodes(case: &CaseConfig, grid: &Grid, slice: Slice) -> Vec<usize> {
    let column = |axis: usize, value: f64| {
        let x = value * case.physics.length;
        (x / grid.spacing[axis]).round().clamp(0.0, (grid.n[axis] - 1) as f64) as usize
    };
    match slice {
        Slice::Full => (0..grid.len()).collect(),
        Slice::Line { value } => {
            let i = column(0, value);
            (0..grid.len()).filter(|&n| grid.multi(n)[0] == i).collect()
        }
        Slice::Plane { axis, value } => {
            let i = column(axis, value);
            (0..grid.len()).filter(|&n| grid.multi(n)[axis] == i).collect()
        }
    }
}

/// Variables reported for a case. Velocity excludes wall nodes, where the
/// reference imposes no-slip on a field that is otherwise plug flow.
fn variables(case: &CaseConfig) -> Vec<&'static str> {
    let mut v = vec!["v", "p"];
    if case.is_heat() {
        v.extend(["Ts", "Tf"]);
    }
    v
}

fn value_of(q: &Primary, variable: &str) -> f64 {
    match variable {
        "u" => q.u,
        "v" => q.v,
        "w" => q.w,
        "p" => q.p,
        "Ts" => q.t_s,
        "Tf" => q.t_f,
        _ => unreachable!("unknown variable {variable}"),
    }
}

/// Metrics of every reported variable and slice; temperatures in kelvin.
pub fn evaluate<N: Network>(net: &N, case: &CaseConfig, ds: &ReferenceDataset) -> Result<EvalReport, ExperimentError> {
    check_reference(case, ds)?;
    let pred = predict(net, case, &ds.grid)?;
    evaluate_predictions(case, ds, &pred)
}

/// [`evaluate`] on precomputed predictions.
pub fn evaluate_predictions(
    case: &CaseConfig,
    ds: &ReferenceDataset,
    pred: &[Primary],
) -> Result<EvalReport, ExperimentError> {
    let grid = &ds.grid;
    let mut rows = Vec::new();
    for slice in slices_of(case) {
        let nodes = slice_nodes(case, grid, slice);
        for var in variables(case) {
            let exact_field = ds
                .field(var)
                .ok_or_else(|| ExperimentError::Invalid(format!("reference lacks `{var}`")))?;
            let keep: Vec<usize> = nodes
                .iter()
                .copied()
                .filter(|&n| var != "v" || !grid.is_wall(n))
                .collect();
            let p: Vec<f64> = keep.iter().map(|&n| value_of(&pred[n], var)).collect();
            let e: Vec<f64> = keep.iter().map(|&n| exact_field[n]).collect();
            rows.push(VariableMetrics::compute(var, slice, &p, &e)?);
        }
    }
    Ok(EvalReport {
        case_id: case.id.clone(),
        rows,
    })
}

/// Relative L2 of the predicted inlet-row velocity against the reference.
pub fn inlet_v_error<N: Network>(net: &N, case: &CaseConfig, ds: &ReferenceDataset) -> Result<f64, ExperimentError> {
    let grid = &ds.grid;
    let l = case.physics.length;
    let iv = net
        .output_index("v")
        .ok_or_else(|| ExperimentError::Invalid("network has no `v` output".into()))?;
    let nodes: Vec<usize> = (0..grid.len()).filter(|&n| grid.is_inlet(n)).collect();
    let mut pred = Vec::with_capacity(nodes.len());
    for &n in &nodes {
        let x: Vec<f64> = grid.coord(n).iter().map(|c| c / l).collect();
        pred.push(net.forward_eval(&x)?[iv] * case.physics.velocity());
    }
    let exact: Vec<f64> = nodes.iter().map(|&n| ds.v[n]).collect();
    Ok(relative_l2(&pred, &exact)?)
}

/// `n` labeled samples drawn without replacement from the reference outlet
/// row, converted to non-dimensional `h̃_k` and `T̃_s`, with multiplicative
/// noise of relative amplitude `noise` on the kelvin values.
pub fn outlet_labels(
    case: &CaseConfig,
    ds: &ReferenceDataset,
    n: usize,
    noise: f64,
    seed: u64,
) -> Result<LabeledData, ExperimentError> {
    let (ts, tf) = match (&ds.t_s, &ds.t_f) {
        (Some(s), Some(f)) => (s, f),
        _ => return Err(ExperimentError::Invalid("labels need a reference with temperatures".into())),
    };
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(ExperimentError::Invalid(format!("noise level {noise}")));
    }
    let outlet = ds.outlet_nodes();
    if n > outlet.len() {
        return Err(TrainError::TooManyLabels {
            requested: n,
            available: outlet.len(),
        }
        .into());
    }
    let picked = crate::metrics::sample_eval_points(n, outlet.len(), sub_seed(seed, 100))?;
    let nodes: Vec<usize> = picked.iter().map(|&k| outlet[k]).collect();
    let l = case.physics.length;
    let coords: Vec<f64> = nodes
        .iter()
        .flat_map(|&k| ds.grid.coord(k).into_iter().map(move |c| c / l))
        .collect();
    let ts_k = add_noise(&nodes.iter().map(|&k| ts[k]).collect::<Vec<_>>(), noise, sub_seed(seed, 101));
    let tf_k = add_noise(&nodes.iter().map(|&k| tf[k]).collect::<Vec<_>>(), noise, sub_seed(seed, 102));
    let nd: Vec<Nondim> = ts_k
        .iter()
        .zip(&tf_k)
        .map(|(&t_s, &t_f)| {
            case.physics.nondim(&Primary {
                t_s,
                t_f,
                ..Primary::default()
            })
        })
        .collect();
    Ok(LabeledData {
        points: PointSet {
            role: Role::Outlet,
            dim: case.physics.dim,
            coords,
            seed,
        },
        hk: nd.iter().map(|q| q.hk).collect(),
        ts: nd.iter().map(|q| q.ts).collect(),
    })
}

/// A trained network of either architecture.
#[derive(Clone, Debug)]
pub enum TrainedNet {
    TrunkBranch(TBNet),
    Fnn(FnnBaseline),
}

impl TrainedNet {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, ExperimentError> {
        Ok(match ckpt.model {
            ModelSpec::TrunkBranch { .. } => TrainedNet::TrunkBranch(ckpt.to_tbnet()?),
            ModelSpec::Fnn { .. } => TrainedNet::Fnn(ckpt.to_fnn()?),
        })
    }

    pub fn checkpoint(&self, case_id: &str, epoch: u64, seed: u64) -> Checkpoint {
        match self {
            TrainedNet::TrunkBranch(n) => Checkpoint::from_tbnet(n, case_id, epoch, seed),
            TrainedNet::Fnn(n) => Checkpoint::from_fnn(n, case_id, epoch, seed),
        }
    }

    pub fn trainable_count(&self) -> usize {
        match self {
            TrainedNet::TrunkBranch(n) => n.trainable_flat().len(),
            TrainedNet::Fnn(n) => n.trainable_flat().len(),
        }
    }

    pub fn evaluate(&self, case: &CaseConfig, ds: &ReferenceDataset) -> Result<EvalReport, ExperimentError> {
        match self {
            TrainedNet::TrunkBranch(n) => evaluate(n, case, ds),
            TrainedNet::Fnn(n) => evaluate(n, case, ds),
        }
    }

    pub fn predict(&self, case: &CaseConfig, grid: &Grid) -> Result<Vec<Primary>, ExperimentError> {
        match self {
            TrainedNet::TrunkBranch(n) => predict(n, case, grid),
            TrainedNet::Fnn(n) => predict(n, case, grid),
        }
    }

    pub fn inlet_v_error(&self, case: &CaseConfig, ds: &ReferenceDataset) -> Result<f64, ExperimentError> {
        match self {
            TrainedNet::TrunkBranch(n) => inlet_v_error(n, case, ds),
            TrainedNet::Fnn(n) => inlet_v_error(n, case, ds),
        }
    }
}

/// Which network a run trains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    #[default]
    TrunkBranch,
    Fnn,
}

/// Result of one training run plus its evaluation.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub net: TrainedNet,
    pub trace: TrainingTrace,
    pub report: EvalReport,
    pub labels: Option<LabeledData>,
    /// Relative L2 of the inlet-row velocity.
    pub inlet_v_error: f64,
}

impl RunOutcome {
    pub fn summary(&self, case: &CaseConfig, seed: u64, architecture: Architecture) -> RunSummary {
        RunSummary::new(case, seed, architecture, &self.trace, self.net.trainable_count(), self.inlet_v_error)
    }
}

/// Trains `case` in its configured mode and evaluates the result against
/// `ds`. Modes that continue a network need `source`.
pub fn train_case(
    case: &CaseConfig,
    architecture: Architecture,
    source: Option<&Checkpoint>,
    ds: &ReferenceDataset,
    seed: u64,
    observer: Observer,
) -> Result<RunOutcome, ExperimentError> {
    case.validate()?;
    check_reference(case, ds)?;
    let need_source = || {
        source.ok_or_else(|| {
            ExperimentError::Invalid(format!("mode {:?} needs a source checkpoint", case.schedule.mode))
        })
    };
    let labels = match case.labels {
        Some(spec) if spec.n_points > 0 || case.schedule.mode == Mode::Inverse => {
            Some(outlet_labels(case, ds, spec.n_points, spec.noise, seed)?)
        }
        _ => None,
    };
    let (net, trace) = if architecture == Architecture::Fnn {
        if case.schedule.mode != Mode::Flow {
            return Err(ExperimentError::Invalid("the plain baseline only trains flow cases".into()));
        }
        let (n, t) = train_fnn_flow(case, seed, observer)?;
        (TrainedNet::Fnn(n), t)
    } else {
        let out = match case.schedule.mode {
            Mode::Flow => train_forward_flow(case, seed, observer)?,
            Mode::Joint => train_joint(case, seed, observer)?,
            Mode::HeatStepwise => train_forward_heat(case, need_source()?, seed, observer)?,
            Mode::Inverse => {
                let l = labels.as_ref().expect("inverse cases build labels");
                train_inverse(case, need_source()?, l, seed, observer)?
            }
            Mode::Transfer => train_transfer(case, need_source()?, seed, labels.as_ref(), observer)?,
        };
        (TrainedNet::TrunkBranch(out.net), out.trace)
    };
    let report = net.evaluate(case, ds)?;
    let inlet_v_error = net.inlet_v_error(case, ds)?;
    Ok(RunOutcome {
        net,
        trace,
        report,
        labels,
        inlet_v_error,
    })
}

/// Scratch counterpart of a transfer case: same physics and schedule, fresh
/// initialization, nothing frozen.
pub fn scratch_counterpart(case: &CaseConfig) -> CaseConfig {
    let mut c = case.clone();
    c.id = format!("{}-scratch", case.id);
    if !case.is_heat() {
        c.schedule.mode = Mode::Flow;
        c.schedule.source_checkpoint = None;
    }
    c.schedule.frozen_components.clear();
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(name: &str) -> CaseConfig {
        let mut c = preset(name, Scale::Desk).unwrap();
        c.grid = vec![21, 11];
        c
    }

    #[test]
    fn slices_pick_nearest_column() {
        let c = tiny("B");
        let g = grid_of(&c).unwrap();
        let nodes = slice_nodes(&c, &g, Slice::Line { value: 0.5 });
        assert_eq!(nodes.len(), 11);
        assert!(nodes.iter().all(|&n| g.multi(n)[0] == 10));
        assert_eq!(slice_nodes(&c, &g, Slice::Full).len(), g.len());
    }

    #[test]
    fn labels_are_outlet_samples_in_nondim_units() {
        let c = tiny("inverse-D");
        let ds = reference(&c).unwrap();
        let l = outlet_labels(&c, &ds, 5, 0.0, 3).unwrap();
        assert_eq!(l.points.len(), 5);
        for i in 0..5 {
            assert!((l.points.point(i)[1] - 0.2).abs() < 1e-12);
            assert!(l.ts[i] > 1.0 && l.hk[i] > 1.0);
        }
        assert_eq!(l, outlet_labels(&c, &ds, 5, 0.0, 3).unwrap());
        let too_many = outlet_labels(&c, &ds, 22, 0.0, 3);
        assert!(matches!(too_many, Err(ExperimentError::Train(TrainError::TooManyLabels { .. }))));
        let noisy = outlet_labels(&c, &ds, 5, 0.01, 3).unwrap();
        assert_ne!(noisy.ts, l.ts);
        for (a, b) in noisy.ts.iter().zip(&l.ts) {
            assert!((a / b - 1.0).abs() <= 0.01 + 1e-12);
        }
    }

    #[test]
    fn config_requires_exactly_one_case_source() {
        let mut e = ExperimentConfig::from_preset("A", Scale::Desk);
        assert!(e.resolve().is_ok());
        e.case = Some(preset("A", Scale::Desk).unwrap());
        assert!(e.resolve().is_err());
        assert!(ExperimentConfig::from_json(r#"{"preset":"A","bogus":1}"#).is_err());
        let parsed = ExperimentConfig::from_json(r#"{"preset":"B","scale":"desk","seed":3}"#).unwrap();
        assert_eq!(parsed.seed, 3);
    }

    #[test]
    fn exact_predictions_score_zero() {
        let c = tiny("D");
        let ds = reference(&c).unwrap();
        let pred: Vec<Primary> = (0..ds.grid.len())
            .map(|n| Primary {
                u: ds.u[n],
                v: ds.v[n],
                w: 0.0,
                p: ds.p[n],
                t_s: ds.t_s.as_ref().unwrap()[n],
                t_f: ds.t_f.as_ref().unwrap()[n],
            })
            .collect();
        let r = evaluate_predictions(&c, &ds, &pred).unwrap();
        assert_eq!(r.rows.len(), 4 * 4);
        assert!(r.rows.iter().all(|m| m.error.relative_l2 == 0.0));
    }
}
