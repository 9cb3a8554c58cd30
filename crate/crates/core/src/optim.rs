//! Adam and L-BFGS on flat parameter vectors.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient entry at index {0}")]
    NonFiniteGradient(usize),
    #[error("parameter and gradient lengths differ ({0} vs {1})")]
    Shape(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, n: usize) -> Self {
        AdamState {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. A non-finite gradient refuses the step and
/// leaves both the parameters and the state untouched.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<(), OptimError> {
    if params.len() != grads.len() || state.m.len() != grads.len() {
        return Err(OptimError::Shape(params.len(), grads.len()));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(OptimError::NonFiniteGradient(i));
    }
    let c = state.config;
    state.step += 1;
    let bc1 = 1.0 - c.beta1.powi(state.step as i32);
    let bc2 = 1.0 - c.beta2.powi(state.step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
        let mh = state.m[i] / bc1;
        let vh = state.v[i] / bc2;
        params[i] -= c.lr * mh / (vh.sqrt() + c.eps);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub c1: f64,
    pub c2: f64,
    pub max_trials: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 50,
            c1: 1e-4,
            c2: 0.9,
            max_trials: 25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepOutcome {
    /// A step satisfying the line-search conditions was taken.
    Accepted,
    /// Gradient is exactly zero.
    Converged,
    /// Neither the quasi-Newton nor the steepest-descent search made progress.
    Stalled,
    /// Every trial (or the starting point) was non-finite; parameters rolled
    /// back to the last valid state.
    Diverged,
}

#[derive(Clone, Debug)]
pub struct LbfgsState {
    pub config: LbfgsConfig,
    s: VecDeque<Vec<f64>>,
    y: VecDeque<Vec<f64>>,
    pub iter: u64,
    pub evaluations: u64,
    pub x: Vec<f64>,
    pub f: f64,
    pub g: Vec<f64>,
    valid: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn finite(f: f64, g: &[f64]) -> bool {
    f.is_finite() && g.iter().all(|x| x.is_finite())
}

struct Trial {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    dphi: f64,
}

impl LbfgsState {
    /// Starts from `x0`, evaluating the loss once.
    pub fn new<E>(
        config: LbfgsConfig,
        x0: Vec<f64>,
        eval: &mut dyn FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
    ) -> Self {
        let (f, g, valid) = match eval(&x0) {
            Ok((f, g)) if finite(f, &g) => (f, g, true),
            _ => (f64::NAN, vec![f64::NAN; x0.len()], false),
        };
        LbfgsState {
            config,
            s: VecDeque::new(),
            y: VecDeque::new(),
            iter: 0,
            evaluations: 1,
            x: x0,
            f,
            g,
            valid,
        }
    }

    pub fn history_len(&self) -> usize {
        self.s.len()
    }

    /// Two-loop recursion: `−H·g`.
    fn direction(&self) -> Vec<f64> {
        let k = self.s.len();
        let mut q = self.g.clone();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&self.y[i], &self.s[i]);
            alpha[i] = rho * dot(&self.s[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        if k > 0 {
            let gamma = dot(&self.s[k - 1], &self.y[k - 1]) / dot(&self.y[k - 1], &self.y[k - 1]);
            for qj in &mut q {
                *qj *= gamma;
            }
        }
        for i in 0..k {
            let rho = 1.0 / dot(&self.y[i], &self.s[i]);
            let beta = rho * dot(&self.y[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += sj * (alpha[i] - beta);
            }
        }
        q.iter().map(|x| -x).collect()
    }

    fn accept(&mut self, t: Trial, d: &[f64]) {
        let s: Vec<f64> = d.iter().map(|di| t.alpha * di).collect();
        let y: Vec<f64> = t.g.iter().zip(&self.g).map(|(a, b)| a - b).collect();
        for (xi, si) in self.x.iter_mut().zip(&s) {
            *xi += si;
        }
        let sy = dot(&s, &y);
        if self.config.memory > 0 && sy > 0.0 && sy.is_finite() {
            self.s.push_back(s);
            self.y.push_back(y);
            while self.s.len() > self.config.memory {
                self.s.pop_front();
                self.y.pop_front();
            }
        }
        self.f = t.f;
        self.g = t.g;
    }
}

/// Evaluates `φ(α) = f(x + α d)` and its slope; `None` when non-finite.
fn probe<E>(
    state: &mut LbfgsState,
    d: &[f64],
    alpha: f64,
    eval: &mut dyn FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
) -> Option<Trial> {
    state.evaluations += 1;
    let xt: Vec<f64> = state.x.iter().zip(d).map(|(x, di)| x + alpha * di).collect();
    match eval(&xt) {
        Ok((f, g)) if finite(f, &g) => {
            let dphi = dot(&g, d);
            Some(Trial { alpha, f, g, dphi })
        }
        _ => None,
    }
}

/// Minimizer of the cubic through (a, fa, da) and (b, fb, db), if it exists.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    t.is_finite().then_some(t)
}

enum Search {
    Found(Trial),
    Failed { any_finite: bool },
}

/// Strong-Wolfe line search with zoom and cubic interpolation.
fn wolfe_search<E>(
    state: &mut LbfgsState,
    d: &[f64],
    alpha0: f64,
    eval: &mut dyn FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
) -> Search {
    let cfg = state.config;
    let f0 = state.f;
    let dphi0 = dot(&state.g, d);
    let mut trials = 0;
    let mut any_finite = false;

    // (alpha, f, dphi) of the previous bracket end.
    let mut prev = (0.0, f0, dphi0);
    let mut alpha = alpha0;
    let mut bracket: Option<((f64, f64, f64), (f64, f64, f64))> = None;

    while trials < cfg.max_trials {
        trials += 1;
        match probe(state, d, alpha, eval) {
            None => {
                // Treat as an infinitely high value: the minimizer lies before.
                bracket = Some((prev, (alpha, f64::INFINITY, f64::NAN)));
                break;
            }
            Some(t) => {
                any_finite = true;
                if t.f > f0 + cfg.c1 * alpha * dphi0 || (trials > 1 && t.f >= prev.1) {
                    bracket = Some((prev, (t.alpha, t.f, t.dphi)));
                    break;
                }
                if t.dphi.abs() <= -cfg.c2 * dphi0 {
                    return Search::Found(t);
                }
                if t.dphi >= 0.0 {
                    bracket = Some(((t.alpha, t.f, t.dphi), prev));
                    break;
                }
                prev = (t.alpha, t.f, t.dphi);
                alpha *= 2.0;
            }
        }
    }
    let Some((mut lo, mut hi)) = bracket else {
        return Search::Failed { any_finite };
    };
    while trials < cfg.max_trials {
        trials += 1;
        let (a, b) = (lo.0, hi.0);
        let width = (b - a).abs();
        let (left, right) = (a.min(b), a.max(b));
        let mut aj = if hi.1.is_finite() && hi.2.is_finite() {
            cubic_min(lo.0, lo.1, lo.2, hi.0, hi.1, hi.2).unwrap_or(0.5 * (a + b))
        } else {
            0.5 * (a + b)
        };
        if !(aj > left + 0.1 * width && aj < right - 0.1 * width) {
            aj = 0.5 * (a + b);
        }
        if width <= f64::EPSILON * right.max(1e-300) {
            break;
        }
        match probe(state, d, aj, eval) {
            None => hi = (aj, f64::INFINITY, f64::NAN),
            Some(t) => {
                any_finite = true;
                if t.f > f0 + cfg.c1 * aj * dphi0 || t.f >= lo.1 {
                    hi = (t.alpha, t.f, t.dphi);
                } else {
                    if t.dphi.abs() <= -cfg.c2 * dphi0 {
                        return Search::Found(t);
                    }
                    if t.dphi * (hi.0 - lo.0) >= 0.0 {
                        hi = lo;
                    }
                    lo = (t.alpha, t.f, t.dphi);
                }
            }
        }
    }
    Search::Failed { any_finite }
}

/// Armijo backtracking along the steepest-descent direction.
fn backtrack<E>(
    state: &mut LbfgsState,
    d: &[f64],
    alpha0: f64,
    eval: &mut dyn FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
) -> (Option<Trial>, bool) {
    let dphi0 = dot(&state.g, d);
    let mut alpha = alpha0;
    let mut any_finite = false;
    for _ in 0..state.config.max_trials {
        if let Some(t) = probe(state, d, alpha, eval) {
            any_finite = true;
            if t.f <= state.f + state.config.c1 * alpha * dphi0 {
                return (Some(t), true);
            }
        }
        alpha *= 0.5;
    }
    (None, any_finite)
}

/// One L-BFGS iteration.
pub fn lbfgs_step<E>(
    state: &mut LbfgsState,
    eval: &mut dyn FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
) -> StepOutcome {
    if !state.valid {
        return StepOutcome::Diverged;
    }
    let gnorm = dot(&state.g, &state.g).sqrt();
    if gnorm == 0.0 {
        return StepOutcome::Converged;
    }
    state.iter += 1;
    let mut d = state.direction();
    if !(dot(&d, &state.g) < 0.0) {
        state.s.clear();
        state.y.clear();
        d = state.g.iter().map(|x| -x).collect();
    }
    let alpha0 = if state.s.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };
    let mut any_finite = false;
    match wolfe_search(state, &d, alpha0, eval) {
        Search::Found(t) => {
            state.accept(t, &d);
            return StepOutcome::Accepted;
        }
        Search::Failed { any_finite: f } => any_finite |= f,
    }
    let sd: Vec<f64> = state.g.iter().map(|x| -x).collect();
    let (trial, f) = backtrack(state, &sd, (1.0 / gnorm).min(1.0), eval);
    any_finite |= f;
    match trial {
        Some(t) => {
            state.s.clear();
            state.y.clear();
            state.accept(t, &sd);
            StepOutcome::Accepted
        }
        None if any_finite => StepOutcome::Stalled,
        None => StepOutcome::Diverged,
    }
}
