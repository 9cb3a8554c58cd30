//! Weighted loss assembly and order-of-magnitude weight suggestion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Layout, Tape, Var};
use crate::collocation::PointSet;
use crate::model::{ForwardCache, ModelError, Network};
use crate::physics::{residual, Coefficients, Group, PointFields, Term, TERM_COUNT};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("non-finite residual e{term} at point {point} of the {group} set")]
    NonFinite {
        term: usize,
        point: usize,
        group: &'static str,
    },
    #[error("active group `{0}` has no points")]
    EmptyGroup(&'static str),
    #[error("no active loss term")]
    NoActiveTerms,
    #[error("term e{0} is inactive or unknown")]
    UnknownTerm(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// λ₁…λ₂₁ with an activity mask. Serialized as a map `"e<j>" → λ_j` that
/// lists exactly the active terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct WeightVector {
    pub lambda: [f64; TERM_COUNT],
    pub active: [bool; TERM_COUNT],
}

impl Default for WeightVector {
    fn default() -> Self {
        WeightVector {
            lambda: [1.0; TERM_COUNT],
            active: [false; TERM_COUNT],
        }
    }
}

impl WeightVector {
    pub fn from_pairs(pairs: &[(usize, f64)]) -> Self {
        let mut w = WeightVector::default();
        for &(j, l) in pairs {
            w.set(j, l);
        }
        w
    }

    pub fn set(&mut self, term: usize, lambda: f64) {
        self.lambda[term - 1] = lambda;
        self.active[term - 1] = true;
    }

    pub fn deactivate(&mut self, term: usize) {
        self.active[term - 1] = false;
    }

    pub fn is_active(&self, term: usize) -> bool {
        self.active[term - 1]
    }

    pub fn get(&self, term: usize) -> f64 {
        self.lambda[term - 1]
    }

    pub fn active_terms(&self) -> impl Iterator<Item = Term> + '_ {
        Term::all().filter(|t| self.active[t.index()])
    }

    pub fn active_groups(&self) -> Vec<Group> {
        let mut g: Vec<Group> = self.active_terms().map(|t| t.group()).collect();
        g.sort();
        g.dedup();
        g
    }

    /// Every active weight multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut w = self.clone();
        for (l, a) in w.lambda.iter_mut().zip(self.active) {
            if a {
                *l *= c;
            }
        }
        w
    }
}

impl TryFrom<BTreeMap<String, f64>> for WeightVector {
    type Error = String;
    fn try_from(map: BTreeMap<String, f64>) -> Result<Self, String> {
        let mut w = WeightVector::default();
        for (k, v) in map {
            let j: usize = k
                .strip_prefix('e')
                .and_then(|s| s.parse().ok())
                .filter(|j| (1..=TERM_COUNT).contains(j))
                .ok_or_else(|| format!("unknown loss term `{k}`"))?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("weight for {k} must be finite and non-negative"));
            }
            w.set(j, v);
        }
        if !w.active.iter().any(|&a| a) {
            return Err("at least one loss term must be active".into());
        }
        Ok(w)
    }
}

impl From<WeightVector> for BTreeMap<String, f64> {
    fn from(w: WeightVector) -> Self {
        w.active_terms()
            .map(|t| (format!("e{}", t.0), w.lambda[t.index()]))
            .collect()
    }
}

/// `λ = 10^(−2·⌊log10 m⌋)` for each positive magnitude; zero (or absent)
/// magnitudes keep weight 1.
pub fn suggest_weights(magnitudes: &[f64]) -> WeightVector {
    let mut w = WeightVector::default();
    for (j, &m) in magnitudes.iter().enumerate().take(TERM_COUNT) {
        let lambda = if m > 0.0 && m.is_finite() {
            10f64.powi(-2 * m.log10().floor() as i32)
        } else {
            1.0
        };
        w.set(j + 1, lambda);
    }
    w
}

/// Point set of one loss group, with labels for the data group.
#[derive(Clone, Debug)]
pub struct GroupPoints {
    pub group: Group,
    pub points: PointSet,
    /// Non-dimensional (h̃_k, T̃_s) labels, one pair per point.
    pub labels: Option<(Vec<f64>, Vec<f64>)>,
}

/// Everything the loss needs besides the network.
#[derive(Clone, Debug)]
pub struct LossProblem {
    pub coefficients: Coefficients,
    pub weights: WeightVector,
    pub groups: Vec<GroupPoints>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// Weighted group sums in `Group::ALL` order.
    pub groups: [f64; 5],
    /// Unweighted mean squares of e1…e21 (zero for inactive terms).
    pub terms: [f64; TERM_COUNT],
}

impl LossBreakdown {
    pub fn group(&self, g: Group) -> f64 {
        self.groups[Group::ALL.iter().position(|x| *x == g).expect("known group")]
    }

    pub fn term(&self, j: usize) -> f64 {
        self.terms[j - 1]
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
            && self.groups.iter().all(|x| x.is_finite())
            && self.terms.iter().all(|x| x.is_finite())
    }
}

/// Per-group caches of frozen sub-network activations.
#[derive(Default, Debug, Clone)]
pub struct LossCaches {
    pub groups: BTreeMap<Group, ForwardCache>,
}

impl LossProblem {
    pub fn points(&self, g: Group) -> Option<&GroupPoints> {
        self.groups.iter().find(|p| p.group == g)
    }

    /// Active terms of one group.
    pub fn terms_of(&self, g: Group) -> Vec<Term> {
        self.weights.active_terms().filter(|t| t.group() == g).collect()
    }
}

/// Outputs and derivative order required for a set of terms.
fn requirements(terms: &[Term], dim: usize) -> (Vec<&'static str>, u8) {
    let mut names: Vec<&'static str> = Vec::new();
    let mut order = 0;
    for t in terms {
        let extra = if dim == 3 { t.needs_3d() } else { &[] };
        for &(n, o) in t.needs().iter().chain(extra) {
            if !names.contains(&n) {
                names.push(n);
            }
            order = order.max(o);
        }
    }
    (names, order)
}

/// Residual values of the active terms of one group, on the tape.
pub fn group_residuals<'t, N: Network>(
    net: &N,
    tape: &'t Tape,
    problem: &LossProblem,
    gp: &GroupPoints,
    cache: Option<&mut ForwardCache>,
) -> Result<Vec<(Term, Var<'t>)>, LossError> {
    let terms = problem.terms_of(gp.group);
    if terms.is_empty() {
        return Ok(Vec::new());
    }
    if gp.points.is_empty() {
        return Err(LossError::EmptyGroup(gp.group.name()));
    }
    let dim = net.input_dim();
    let (names, order) = requirements(&terms, dim);
    let layout = Layout::new(dim, order);
    let outs = net.record(tape, &gp.points.coords, layout, &names, cache)?;
    let mut fields = PointFields::empty();
    for (name, jet) in net.output_names().iter().zip(outs) {
        if let Some(j) = jet {
            fields.set(name, j);
        }
    }
    if terms.iter().any(|t| t.0 == 11) {
        fields.x = Some(tape.leaf(gp.points.axis(0)));
    }
    if let Some((hk, ts)) = &gp.labels {
        fields.hk_data = Some(tape.leaf(hk.clone()));
        fields.ts_data = Some(tape.leaf(ts.clone()));
    }
    let mut out = Vec::with_capacity(terms.len());
    for t in terms {
        let e = residual(t, &problem.coefficients, &fields);
        if let Some(point) = e.values().iter().position(|v| !v.is_finite()) {
            return Err(LossError::NonFinite {
                term: t.0,
                point,
                group: gp.group.name(),
            });
        }
        out.push((t, e));
    }
    Ok(out)
}

/// Records the full weighted loss. Each group is the mean over its points of
/// the weighted squared residuals; the total is the sum of the groups.
pub fn assemble_loss<'t, N: Network>(
    net: &N,
    tape: &'t Tape,
    problem: &LossProblem,
    mut caches: Option<&mut LossCaches>,
) -> Result<(Var<'t>, LossBreakdown), LossError> {
    let mut breakdown = LossBreakdown {
        total: 0.0,
        groups: [0.0; 5],
        terms: [0.0; TERM_COUNT],
    };
    let mut total: Option<Var<'t>> = None;
    for g in problem.weights.active_groups() {
        let gp = problem
            .points(g)
            .ok_or(LossError::EmptyGroup(g.name()))?;
        let cache = caches
            .as_deref_mut()
            .map(|c| c.groups.entry(g).or_default());
        let res = group_residuals(net, tape, problem, gp, cache)?;
        let mut group_sum: Option<Var<'t>> = None;
        for (t, e) in res {
            let ms = e.square().mean();
            breakdown.terms[t.index()] = ms.value();
            let weighted = ms * problem.weights.lambda[t.index()];
            group_sum = Some(match group_sum {
                None => weighted,
                Some(s) => s + weighted,
            });
        }
        if let Some(s) = group_sum {
            let gi = Group::ALL.iter().position(|x| *x == g).expect("known group");
            breakdown.groups[gi] = s.value();
            total = Some(match total {
                None => s,
                Some(t) => t + s,
            });
        }
    }
    let total = total.ok_or(LossError::NoActiveTerms)?;
    breakdown.total = total.value();
    Ok((total, breakdown))
}

/// Median absolute value of every active term over the problem's points,
/// for the untrained net. Inactive terms report 0.
pub fn probe_magnitudes<N: Network>(net: &N, problem: &LossProblem) -> Result<[f64; TERM_COUNT], LossError> {
    let mut out = [0.0; TERM_COUNT];
    for gp in &problem.groups {
        let tape = Tape::default();
        for (t, e) in group_residuals(net, &tape, problem, gp, None)? {
            let mut v: Vec<f64> = e.values().iter().map(|x| x.abs()).collect();
            v.sort_by(|a, b| a.partial_cmp(b).expect("finite residuals"));
            let m = v.len();
            out[t.index()] = if m % 2 == 1 {
                v[m / 2]
            } else {
                0.5 * (v[m / 2 - 1] + v[m / 2])
            };
        }
    }
    Ok(out)
}
