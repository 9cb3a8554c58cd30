//! Finite-difference audit of the derivative engine.

use super::{rel_dev, Layout, Tape};
use crate::model::Network;

pub const D1_TOL: f64 = 1e-6;
pub const D2_TOL: f64 = 1e-4;
pub const PARAM_TOL: f64 = 1e-5;

/// Largest parameter count audited exhaustively; bigger nets are sampled on
/// an even stride.
const MAX_AUDITED_PARAMS: usize = 2000;

#[derive(Clone, Debug, PartialEq)]
pub struct FdReport {
    pub max_d1: f64,
    pub max_d2: f64,
    pub max_param: f64,
    pub params_checked: usize,
    /// Any deviation above its tolerance.
    pub flagged: bool,
}

/// Compares tape derivatives with central differences.
///
/// First derivatives are differenced from forward values, second derivatives
/// from the straight-line first derivatives, both with `step`. The parameter
/// gradient of a fixed functional of values, gradients and Hessians is
/// differenced per parameter with step `max(1e-6, 1e-6·|θ|)`.
pub fn fd_check<N: Network + Clone>(net: &N, points: &[f64], step: f64) -> FdReport {
    assert!(step > 0.0, "step must be positive");
    let dim = net.input_dim();
    let n = points.len() / dim;
    let layout = Layout::new(dim, 2);
    let names: Vec<&str> = net.output_names().iter().map(|s| s.as_str()).collect();

    let tape = Tape::default();
    let outs = net
        .record(&tape, points, layout, &names, None)
        .expect("dimensions validated by caller");
    let outs: Vec<_> = outs.into_iter().map(|o| o.expect("all outputs requested")).collect();

    let mut max_d1: f64 = 0.0;
    let mut max_d2: f64 = 0.0;
    let vals = |v: &super::Var<'_>| v.values();
    for (k, jet) in outs.iter().enumerate() {
        let d1: Vec<Vec<f64>> = jet.d1.iter().map(vals).collect();
        let d2: Vec<Vec<f64>> = jet.d2.iter().map(vals).collect();
        for p in 0..n {
            let x = &points[p * dim..(p + 1) * dim];
            for i in 0..dim {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += step;
                xm[i] -= step;
                let fp = net.forward_eval(&xp).expect("finite net")[k];
                let fm = net.forward_eval(&xm).expect("finite net")[k];
                let fd = (fp - fm) / (2.0 * step);
                max_d1 = max_d1.max(rel_dev(d1[i][p], fd));

                let jp = net.input_derivatives(&xp).expect("finite net");
                let jm = net.input_derivatives(&xm).expect("finite net");
                for j in 0..dim {
                    let fd2 = (jp[k].d1[j] - jm[k].d1[j]) / (2.0 * step);
                    let idx = super::tri_index(i, j, dim);
                    max_d2 = max_d2.max(rel_dev(d2[idx][p], fd2));
                }
            }
        }
    }

    // Parameter gradient of the audit functional, on a fresh tape.
    let tape = Tape::default();
    let outs = net.record(&tape, points, layout, &names, None).expect("validated");
    let mut total = None;
    for jet in outs.into_iter().flatten() {
        let mut acc = jet.value.square();
        for c in jet.d1.iter().chain(&jet.d2) {
            acc = acc + c.square();
        }
        let term = acc.mean() * 0.5;
        total = Some(match total {
            None => term,
            Some(t) => t + term,
        });
    }
    let loss = total.expect("at least one output");
    tape.finalize(loss).expect("scalar loss");
    let grads = tape.param_gradient().expect("finite gradient");

    let mut probe = net.clone();
    let mut max_param: f64 = 0.0;
    let mut checked = 0;
    let sizes: Vec<usize> = net.param_arrays().iter().map(|a| a.len()).collect();
    let mask = net.freeze_mask();
    let total_params: usize = sizes.iter().sum();
    let stride = total_params.div_ceil(MAX_AUDITED_PARAMS).max(1);
    let mut flat = 0usize;
    for (slot, &len) in sizes.iter().enumerate() {
        for e in 0..len {
            let this = flat;
            flat += 1;
            if this % stride != 0 {
                continue;
            }
            let ad = grads.get(slot).map(|g| g[e]).unwrap_or(0.0);
            if mask[slot] {
                max_param = max_param.max(ad.abs());
                checked += 1;
                continue;
            }
            let theta = get_param(&probe, slot, e);
            let h = (1e-6 * theta.abs()).max(1e-6);
            set_param(&mut probe, slot, e, theta + h);
            let lp = audit_functional(&probe, points);
            set_param(&mut probe, slot, e, theta - h);
            let lm = audit_functional(&probe, points);
            set_param(&mut probe, slot, e, theta);
            let fd = (lp - lm) / (2.0 * h);
            max_param = max_param.max(rel_dev(ad, fd));
            checked += 1;
        }
    }

    FdReport {
        max_d1,
        max_d2,
        max_param,
        params_checked: checked,
        flagged: max_d1 > D1_TOL || max_d2 > D2_TOL || max_param > PARAM_TOL,
    }
}

/// Same functional as recorded on the tape, through the straight-line path.
fn audit_functional<N: Network>(net: &N, points: &[f64]) -> f64 {
    let dim = net.input_dim();
    let n = points.len() / dim;
    let mut sums = vec![0.0; net.output_names().len()];
    for p in 0..n {
        let jets = net
            .input_derivatives(&points[p * dim..(p + 1) * dim])
            .expect("finite net");
        for (s, j) in sums.iter_mut().zip(&jets) {
            *s += j.value * j.value
                + j.d1.iter().map(|x| x * x).sum::<f64>()
                + j.d2.iter().map(|x| x * x).sum::<f64>();
        }
    }
    sums.iter().map(|s| 0.5 * s / n as f64).sum()
}

fn locate<N: Network>(net: &N, slot: usize) -> (usize, usize, bool) {
    let mut k = slot / 2;
    for (ci, c) in net.components().iter().enumerate() {
        if k < c.layers.len() {
            return (ci, k, slot % 2 == 0);
        }
        k -= c.layers.len();
    }
    panic!("slot {slot} out of range")
}

fn get_param<N: Network>(net: &N, slot: usize, e: usize) -> f64 {
    let (c, l, w) = locate(net, slot);
    let layer = &net.components()[c].layers[l];
    if w {
        layer.weight[e]
    } else {
        layer.bias[e]
    }
}

fn set_param<N: Network>(net: &mut N, slot: usize, e: usize, v: f64) {
    let (c, l, w) = locate(net, slot);
    let layer = &mut net.components_mut()[c].layers[l];
    if w {
        layer.weight[e] = v;
    } else {
        layer.bias[e] = v;
    }
}
