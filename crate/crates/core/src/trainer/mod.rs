//! Training modes: forward flow, step-wise heat, joint, inverse and transfer.

mod run;

pub use run::{
    divergence_guard, loss_and_grad, optimize, Divergence, DivergenceGuard, GuardDecision, Observer, OptimPlan,
    Phase, Status, TraceRow, TrainingTrace,
};

use thiserror::Error;

use crate::autodiff::TapeError;
use crate::collocation::{boundary_points_with, lhs_interior_with, CollocationError, Facet, PointSet, Role};
use crate::config::{CaseConfig, ConfigError, Mode, DATA_TERMS, HEAT_TERMS};
use crate::loss::{GroupPoints, LossError, LossProblem, WeightVector};
use crate::model::{Checkpoint, FnnBaseline, FnnSpec, ModelError, Network, TBNet};
use crate::physics::{Group, PhysicsError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Collocation(#[from] CollocationError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("requested {requested} labeled points but only {available} outlet samples exist")]
    TooManyLabels { requested: usize, available: usize },
    #[error("{0}")]
    Mode(String),
}

/// Non-dimensional labeled outlet samples.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledData {
    pub points: PointSet,
    pub hk: Vec<f64>,
    pub ts: Vec<f64>,
}

/// Seed of the `k`-th independent stream derived from a run seed.
pub fn sub_seed(seed: u64, k: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k.wrapping_mul(0xBF58_476D_1CE4_E5B9))
}

/// Collocation sets of a case, one per boundary role plus the interior.
pub fn collocation_sets(case: &CaseConfig, seed: u64) -> Result<Vec<PointSet>, TrainError> {
    let bounds = case.physics.bounds();
    let dim = case.physics.dim;
    let p = &case.points;
    let interior = lhs_interior_with(p.interior, &bounds, sub_seed(seed, 1), p.placement)?;
    let inlet = boundary_points_with(Facet::Inlet, p.inlet, &bounds, sub_seed(seed, 2), p.placement)?;
    let outlet = boundary_points_with(Facet::Outlet, p.outlet, &bounds, sub_seed(seed, 3), p.placement)?;
    let walls = Facet::walls(dim)
        .iter()
        .enumerate()
        .map(|(k, &f)| boundary_points_with(f, p.wall, &bounds, sub_seed(seed, 4 + k as u64), p.placement))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(vec![interior, inlet, outlet, PointSet::concat(Role::Wall, &walls)])
}

/// Loss problem of `case` with the given weights.
pub fn build_problem(
    case: &CaseConfig,
    weights: WeightVector,
    seed: u64,
    labels: Option<&LabeledData>,
) -> Result<LossProblem, TrainError> {
    let sets = collocation_sets(case, seed)?;
    let mut groups: Vec<GroupPoints> = [Group::Pde, Group::Inlet, Group::Outlet, Group::Wall]
        .into_iter()
        .zip(sets)
        .map(|(group, points)| GroupPoints {
            group,
            points,
            labels: None,
        })
        .collect();
    if let Some(l) = labels {
        groups.push(GroupPoints {
            group: Group::Data,
            points: l.points.clone(),
            labels: Some((l.hk.clone(), l.ts.clone())),
        });
    }
    Ok(LossProblem {
        coefficients: case.physics.coefficients()?,
        weights,
        groups,
    })
}

fn plan_of(case: &CaseConfig) -> OptimPlan {
    OptimPlan {
        adam_epochs: case.schedule.adam_epochs,
        adam_lr: case.schedule.adam_lr,
        lbfgs_max_iters: case.schedule.lbfgs_max_iters,
        lbfgs: None,
    }
}

/// A trained network and its trace.
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub net: TBNet,
    pub trace: TrainingTrace,
}

impl TrainOutput {
    pub fn checkpoint(&self, case: &CaseConfig, seed: u64) -> Checkpoint {
        let epoch = self.trace.rows.last().map(|r| r.epoch).unwrap_or(0);
        self.net.checkpoint(&case.id, epoch, seed)
    }
}

fn run(
    case: &CaseConfig,
    net: TBNet,
    weights: WeightVector,
    seed: u64,
    labels: Option<&LabeledData>,
    observer: Observer,
) -> Result<TrainOutput, TrainError> {
    let (net, trace) = run_generic(case, net, weights, seed, labels, observer)?;
    Ok(TrainOutput { net, trace })
}

fn run_generic<N: Network>(
    case: &CaseConfig,
    mut net: N,
    weights: WeightVector,
    seed: u64,
    labels: Option<&LabeledData>,
    observer: Observer,
) -> Result<(N, TrainingTrace), TrainError> {
    let problem = build_problem(case, weights, seed, labels)?;
    let trace = optimize(&mut net, &problem, &plan_of(case), observer)?;
    Ok((net, trace))
}

fn freeze_defaults(net: &mut TBNet, case: &CaseConfig, default: &[&str]) -> Result<(), TrainError> {
    let names: Vec<&str> = if case.schedule.frozen_components.is_empty() {
        default.to_vec()
    } else {
        case.schedule.frozen_components.iter().map(|s| s.as_str()).collect()
    };
    net.freeze(&names)?;
    Ok(())
}

fn flow_components(case: &CaseConfig) -> Vec<&'static str> {
    let mut c = vec!["trunk", "u", "v", "p"];
    if case.physics.dim == 3 {
        c.push("w");
    }
    c
}

/// Adam then L-BFGS on the flow terms from a fresh initialization.
pub fn train_forward_flow(case: &CaseConfig, seed: u64, observer: Observer) -> Result<TrainOutput, TrainError> {
    let net = TBNet::init(&case.arch, seed)?;
    run(case, net, case.weights_for(&case.flow_terms()), seed, None, observer)
}

/// Heat branches only, on the heat terms, with everything the flow
/// checkpoint provides frozen.
pub fn train_forward_heat(
    case: &CaseConfig,
    flow: &Checkpoint,
    seed: u64,
    observer: Observer,
) -> Result<TrainOutput, TrainError> {
    let mut net = flow.into_arch(&case.arch, seed)?;
    freeze_defaults(&mut net, case, &flow_components(case))?;
    run(case, net, case.weights_for(&HEAT_TERMS), seed, None, observer)
}

/// Every flow and heat term at once, from scratch, nothing frozen.
pub fn train_joint(case: &CaseConfig, seed: u64, observer: Observer) -> Result<TrainOutput, TrainError> {
    let net = TBNet::init(&case.arch, seed)?;
    let mut terms = case.flow_terms();
    terms.extend(HEAT_TERMS);
    run(case, net, case.weights_for(&terms), seed, None, observer)
}

/// Flow training of the fully connected baseline with the neuron layout of
/// the case's trunk-branch net.
pub fn train_fnn_flow(
    case: &CaseConfig,
    seed: u64,
    observer: Observer,
) -> Result<(FnnBaseline, TrainingTrace), TrainError> {
    let spec = FnnSpec::matching(&case.arch);
    let net = FnnBaseline::init(&spec, seed)?;
    run_generic(case, net, case.weights_for(&case.flow_terms()), seed, None, observer)
}

/// Step-wise heat training with labeled outlet data replacing the outlet
/// heat-flux terms. With no labels the data terms are dropped too.
pub fn train_inverse(
    case: &CaseConfig,
    flow: &Checkpoint,
    labels: &LabeledData,
    seed: u64,
    observer: Observer,
) -> Result<TrainOutput, TrainError> {
    let mut net = flow.into_arch(&case.arch, seed)?;
    freeze_defaults(&mut net, case, &flow_components(case))?;
    let mut terms: Vec<usize> = HEAT_TERMS.iter().copied().filter(|&j| case.weights.is_active(j)).collect();
    let has_labels = !labels.points.is_empty();
    if has_labels {
        terms.extend(DATA_TERMS);
    }
    let weights = case.weights_for(&terms);
    run(case, net, weights, seed, has_labels.then_some(labels), observer)
}

/// Continues from `source`, retraining only the unfrozen components. Flow
/// targets freeze the trunk; heat targets freeze the trunk and flow branches.
pub fn train_transfer(
    case: &CaseConfig,
    source: &Checkpoint,
    seed: u64,
    labels: Option<&LabeledData>,
    observer: Observer,
) -> Result<TrainOutput, TrainError> {
    let mut net = source.into_arch(&case.arch, seed)?;
    let heat = case.is_heat();
    let default: Vec<&str> = if heat { flow_components(case) } else { vec!["trunk"] };
    freeze_defaults(&mut net, case, &default)?;
    let mut terms: Vec<usize> = if heat {
        HEAT_TERMS.iter().copied().filter(|&j| case.weights.is_active(j)).collect()
    } else {
        case.flow_terms()
    };
    let labels = labels.filter(|l| !l.points.is_empty());
    if labels.is_some() {
        terms.extend(DATA_TERMS);
    }
    run(case, net, case.weights_for(&terms), seed, labels, observer)
}

/// Scratch training for any mode that does not need a source network.
pub fn train_scratch(case: &CaseConfig, seed: u64, observer: Observer) -> Result<TrainOutput, TrainError> {
    match case.schedule.mode {
        Mode::Flow => train_forward_flow(case, seed, observer),
        Mode::Joint => train_joint(case, seed, observer),
        m => Err(TrainError::Mode(format!("mode {m:?} needs a source checkpoint"))),
    }
}
