//! Adam then L-BFGS on a fixed loss problem, with divergence detection.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::autodiff::Tape;
use crate::loss::{assemble_loss, LossBreakdown, LossCaches, LossError, LossProblem};
use crate::model::{slot_of, Network};
use crate::optim::{adam_step, lbfgs_step, AdamConfig, AdamState, LbfgsConfig, LbfgsState, StepOutcome};
use crate::physics::{Group, TERM_COUNT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Adam,
    Lbfgs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: u64,
    pub phase: Phase,
    pub loss: LossBreakdown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Converged,
    Diverged,
    Stalled,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Converged => 0,
            Status::Diverged => 2,
            Status::Stalled => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub epoch: u64,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub rows: Vec<TraceRow>,
    pub divergence: Option<Divergence>,
    /// Wall-clock seconds per phase, in run order.
    pub phase_seconds: Vec<(Phase, f64)>,
    pub status: Option<Status>,
    pub checkpoint: Option<String>,
}

impl TrainingTrace {
    pub fn status(&self) -> Status {
        self.status.unwrap_or(Status::Converged)
    }

    pub fn first(&self) -> Option<&LossBreakdown> {
        self.rows.first().map(|r| &r.loss)
    }

    pub fn last(&self) -> Option<&LossBreakdown> {
        self.rows.last().map(|r| &r.loss)
    }

    pub fn seconds(&self, phase: Phase) -> f64 {
        self.phase_seconds.iter().filter(|(p, _)| *p == phase).map(|(_, s)| s).sum()
    }

    /// Header `epoch,phase,total,L_PDE,…,L_Data,e1,…,e21`.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["epoch".to_string(), "phase".into(), "total".into()];
        header.extend(Group::ALL.iter().map(|g| format!("L_{}", g.name())));
        header.extend((1..=TERM_COUNT).map(|j| format!("e{j}")));
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.epoch.to_string(),
                match r.phase {
                    Phase::Adam => "adam".into(),
                    Phase::Lbfgs => "lbfgs".into(),
                },
                format!("{:e}", r.loss.total),
            ];
            rec.extend(r.loss.groups.iter().map(|v| format!("{v:e}")));
            rec.extend(r.loss.terms.iter().map(|v| format!("{v:e}")));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GuardDecision {
    Ok,
    Halt,
}

/// Flags a run whose loss is non-finite or has grown by more than 10⁶ over
/// the minimum of the last 100 epochs.
#[derive(Clone, Debug)]
pub struct DivergenceGuard {
    window: VecDeque<f64>,
    pub span: usize,
    pub factor: f64,
}

impl Default for DivergenceGuard {
    fn default() -> Self {
        DivergenceGuard {
            window: VecDeque::new(),
            span: 100,
            factor: 1e6,
        }
    }
}

impl DivergenceGuard {
    pub fn check(&mut self, total: f64) -> GuardDecision {
        if !total.is_finite() {
            return GuardDecision::Halt;
        }
        let min = self.window.iter().copied().fold(f64::INFINITY, f64::min);
        if min.is_finite() && min > 0.0 && total > self.factor * min {
            return GuardDecision::Halt;
        }
        self.window.push_back(total);
        if self.window.len() > self.span {
            self.window.pop_front();
        }
        GuardDecision::Ok
    }
}

/// Trace-row check for a single loss value.
pub fn divergence_guard(guard: &mut DivergenceGuard, row: &LossBreakdown) -> GuardDecision {
    if !row.is_finite() {
        return GuardDecision::Halt;
    }
    guard.check(row.total)
}

/// Optimizer settings of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimPlan {
    pub adam_epochs: u64,
    pub adam_lr: f64,
    pub lbfgs_max_iters: u64,
    #[serde(default)]
    pub lbfgs: Option<LbfgsConfig>,
}

/// Loss and gradient with respect to the unfrozen parameters, flattened in
/// the order of `Network::trainable_flat`.
pub fn loss_and_grad<N: Network>(
    net: &N,
    problem: &LossProblem,
    caches: &mut LossCaches,
) -> Result<(LossBreakdown, Vec<f64>), TrainError> {
    let tape = Tape::new(1 << 22);
    let (total, breakdown) = assemble_loss(net, &tape, problem, Some(caches))?;
    tape.finalize(total)?;
    let grads = tape.param_gradient()?;
    let comps = net.components();
    let mut flat = Vec::new();
    for (ci, c) in comps.iter().enumerate() {
        if c.frozen {
            continue;
        }
        for (li, l) in c.layers.iter().enumerate() {
            let slot = slot_of(comps, ci, li);
            for (s, len) in [(slot, l.weight.len()), (slot + 1, l.bias.len())] {
                match grads.get(s) {
                    Some(g) => flat.extend_from_slice(g),
                    None => flat.extend(std::iter::repeat(0.0).take(len)),
                }
            }
        }
    }
    Ok((breakdown, flat))
}

/// Whether an error means the iterate left the finite region.
fn is_divergent(e: &TrainError) -> bool {
    matches!(
        e,
        TrainError::Loss(LossError::NonFinite { .. })
            | TrainError::Tape(crate::autodiff::TapeError::NonFinite(_))
    )
}

/// Optional per-row callback, used for progress output.
pub type Observer<'a> = Option<&'a mut dyn FnMut(&TraceRow)>;

/// Adam for `plan.adam_epochs`, then L-BFGS for at most
/// `plan.lbfgs_max_iters` iterations. Each row records the loss of the
/// parameters before that epoch's update. On divergence the net keeps the last
/// parameters with a finite loss.
pub fn optimize<N: Network>(
    net: &mut N,
    problem: &LossProblem,
    plan: &OptimPlan,
    mut observer: Observer,
) -> Result<TrainingTrace, TrainError> {
    let mut trace = TrainingTrace::default();
    let mut caches = LossCaches::default();
    let mut guard = DivergenceGuard::default();
    let mut params = net.trainable_flat();
    let mut push = |trace: &mut TrainingTrace, row: TraceRow| {
        if let Some(f) = observer.as_deref_mut() {
            f(&row);
        }
        trace.rows.push(row);
    };
    let halt = |trace: &mut TrainingTrace, epoch: u64, reason: String| {
        trace.divergence = Some(Divergence { epoch, reason });
        trace.status = Some(Status::Diverged);
    };

    let start = Instant::now();
    let mut adam = AdamState::new(AdamConfig::with_lr(plan.adam_lr), params.len());
    let mut epoch = 0u64;
    // Parameters of the most recent evaluation with a finite, accepted loss.
    let mut last_valid = params.clone();
    while epoch < plan.adam_epochs {
        let (row, grad) = match loss_and_grad(net, problem, &mut caches) {
            Ok(v) => v,
            Err(e) if is_divergent(&e) => {
                halt(&mut trace, epoch, e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        let decision = divergence_guard(&mut guard, &row);
        push(&mut trace, TraceRow { epoch, phase: Phase::Adam, loss: row });
        if decision == GuardDecision::Halt {
            halt(&mut trace, epoch, "loss non-finite or exploding".into());
            break;
        }
        last_valid.copy_from_slice(&params);
        if let Err(e) = adam_step(&mut adam, &mut params, &grad) {
            halt(&mut trace, epoch, e.to_string());
            break;
        }
        net.set_trainable_flat(&params);
        epoch += 1;
    }
    if trace.divergence.is_some() {
        params = last_valid;
        net.set_trainable_flat(&params);
    }
    trace.phase_seconds.push((Phase::Adam, start.elapsed().as_secs_f64()));
    if trace.divergence.is_some() || plan.lbfgs_max_iters == 0 {
        if trace.status.is_none() {
            trace.status = Some(Status::Converged);
        }
        return Ok(trace);
    }

    let start = Instant::now();
    let cfg = plan.lbfgs.unwrap_or_default();
    let failure: RefCell<Option<TrainError>> = RefCell::new(None);
    let last: RefCell<Option<LossBreakdown>> = RefCell::new(None);
    let mut eval = |x: &[f64]| -> Result<(f64, Vec<f64>), ()> {
        net.set_trainable_flat(x);
        match loss_and_grad(net, problem, &mut caches) {
            Ok((b, g)) if b.is_finite() => {
                let total = b.total;
                *last.borrow_mut() = Some(b);
                Ok((total, g))
            }
            Ok(_) => Err(()),
            Err(e) if is_divergent(&e) => Err(()),
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                Err(())
            }
        }
    };
    let mut state = LbfgsState::new(cfg, params.clone(), &mut eval);
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }
    let mut status = Status::Converged;
    match last.borrow_mut().take() {
        Some(b) => push(&mut trace, TraceRow { epoch, phase: Phase::Lbfgs, loss: b }),
        None => status = Status::Diverged,
    }
    let mut history: VecDeque<f64> = VecDeque::from([state.f]);
    let mut accepted = 0u64;
    while status == Status::Converged && accepted < plan.lbfgs_max_iters {
        let outcome = lbfgs_step(&mut state, &mut eval);
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        match outcome {
            StepOutcome::Accepted => {
                accepted += 1;
                epoch += 1;
                let b = last.borrow_mut().take().expect("accepted step was evaluated");
                push(&mut trace, TraceRow { epoch, phase: Phase::Lbfgs, loss: b });
                history.push_back(state.f);
                if history.len() > 11 {
                    history.pop_front();
                }
                if history.len() == 11 && history[0] - state.f <= 1e-12 * history[0].abs() {
                    break;
                }
            }
            StepOutcome::Converged => break,
            StepOutcome::Stalled => {
                if accepted == 0 {
                    status = Status::Stalled;
                }
                break;
            }
            StepOutcome::Diverged => status = Status::Diverged,
        }
    }
    drop(eval);
    net.set_trainable_flat(&state.x);
    trace.phase_seconds.push((Phase::Lbfgs, start.elapsed().as_secs_f64()));
    if status == Status::Diverged {
        halt(&mut trace, epoch, "line search found no finite point".into());
    } else {
        trace.status = Some(status);
    }
    Ok(trace)
}
