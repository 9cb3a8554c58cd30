//! Tensor-level Wengert tape.
//!
//! Every node holds a flat buffer of values (a whole collocation batch, or a
//! layer's activations for all derivative channels at once). Network layers are
//! recorded as single `Dense`/`Act` nodes whose backward rules are written out
//! by hand, so second input-derivatives and the parameter gradient come from a
//! single reverse sweep.

use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::jet::{tri_index, tri_len};
use super::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TapeError {
    #[error("tape has no finalized scalar loss")]
    NotFinalized,
    #[error("loss node must hold exactly one value, found {0}")]
    NotScalar(usize),
    #[error("node budget of {0} exceeded")]
    BudgetExceeded(usize),
    #[error("non-finite adjoint at node {0}")]
    NonFinite(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sine,
    Tanh,
    Linear,
}

impl Activation {
    /// σ, σ', σ'', σ''' at `z`.
    #[inline]
    pub fn derivs(self, z: f64) -> (f64, f64, f64, f64) {
        match self {
            Activation::Sine => {
                let (s, c) = z.sin_cos();
                (s, c, -s, -c)
            }
            Activation::Tanh => {
                let t = z.tanh();
                let s = 1.0 - t * t;
                (t, s, -2.0 * t * s, s * (6.0 * t * t - 2.0))
            }
            Activation::Linear => (z, 1.0, 0.0, 0.0),
        }
    }

    /// σ', σ'', σ''' at `z`, reusing the already computed `h = σ(z)`.
    pub fn derivs_given(self, z: f64, h: f64) -> (f64, f64, f64) {
        match self {
            Activation::Sine => {
                let c = z.cos();
                (c, -h, -c)
            }
            Activation::Tanh => {
                let s = 1.0 - h * h;
                (s, -2.0 * h * s, s * (6.0 * h * h - 2.0))
            }
            Activation::Linear => (1.0, 0.0, 0.0),
        }
    }

    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sine => z.sin(),
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }
}

/// Channel layout of a batched jet buffer: value, then `dim` first
/// derivatives, then (order 2) the packed upper-triangular Hessian.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Layout {
    pub dim: usize,
    pub order: u8,
}

impl Layout {
    pub fn new(dim: usize, order: u8) -> Self {
        assert!(order <= 2, "only orders 0..=2 are supported");
        Layout { dim, order }
    }

    pub fn channels(&self) -> usize {
        1 + if self.order >= 1 { self.dim } else { 0 }
            + if self.order >= 2 { tri_len(self.dim) } else { 0 }
    }

    pub fn d1_channel(&self, i: usize) -> usize {
        debug_assert!(self.order >= 1);
        1 + i
    }

    pub fn d2_channel(&self, i: usize, j: usize) -> usize {
        debug_assert!(self.order >= 2);
        1 + self.dim + tri_index(i, j, self.dim)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    AddConst(usize),
    MulConst(usize, f64),
    Sin(usize),
    Cos(usize),
    Tanh(usize),
    Recip(usize),
    Sum(usize),
    Mean(usize),
    Slice {
        src: usize,
        offset: usize,
    },
    Dense {
        w: usize,
        b: usize,
        x: usize,
        rows_out: usize,
        rows_in: usize,
        cols: usize,
        bias_cols: usize,
    },
    Act {
        z: usize,
        act: Activation,
        layout: Layout,
        n: usize,
        rows: usize,
    },
}

struct Node {
    op: Op,
    value: Vec<f64>,
    needs_grad: bool,
}

struct ParamEntry {
    slot: usize,
    node: usize,
    len: usize,
    trainable: bool,
}

/// Append-only record of a computation.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<Vec<ParamEntry>>,
    budget: usize,
    overflowed: Cell<bool>,
    loss: Cell<Option<usize>>,
}

/// Handle to a tape node.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}", self.id)
    }
}

/// Parameter gradients keyed by slot.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    pub by_slot: BTreeMap<usize, Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, slot: usize) -> Option<&[f64]> {
        self.by_slot.get(&slot).map(|v| v.as_slice())
    }

    /// All slots concatenated in slot order.
    pub fn flatten(&self) -> Vec<f64> {
        self.by_slot.values().flatten().copied().collect()
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new(1 << 20)
    }
}

fn broadcast_len(a: usize, b: usize) -> usize {
    if a == b || b == 1 {
        a
    } else if a == 1 {
        b
    } else {
        panic!("incompatible operand lengths {a} and {b}")
    }
}

#[inline]
fn at(v: &[f64], i: usize) -> f64 {
    if v.len() == 1 {
        v[0]
    } else {
        v[i]
    }
}

fn binary(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let n = broadcast_len(a.len(), b.len());
    if a.len() == n && b.len() == n {
        a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
    } else {
        (0..n).map(|i| f(at(a, i), at(b, i))).collect()
    }
}

/// Accumulates `g` (length n) into an adjoint of length `len` (n or 1).
fn accumulate(target: &mut [f64], g: impl Iterator<Item = f64>) {
    if target.len() == 1 {
        target[0] += g.sum::<f64>();
    } else {
        for (t, x) in target.iter_mut().zip(g) {
            *t += x;
        }
    }
}

impl Tape {
    pub fn new(budget: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            params: RefCell::new(Vec::new()),
            budget,
            overflowed: Cell::new(false),
            loss: Cell::new(None),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn overflowed(&self) -> bool {
        self.overflowed.get()
    }

    fn push(&self, op: Op, value: Vec<f64>, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        if nodes.len() >= self.budget {
            self.overflowed.set(true);
        }
        nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes.borrow()[id].needs_grad
    }

    pub fn leaf(&self, values: Vec<f64>) -> Var<'_> {
        self.push(Op::Leaf, values, false)
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        self.leaf(vec![value])
    }

    /// Registers a parameter array. Frozen arrays are recorded but never
    /// receive adjoints; their gradient is reported as exact zeros.
    pub fn param(&self, slot: usize, values: Vec<f64>, trainable: bool) -> Var<'_> {
        let len = values.len();
        let v = self.push(Op::Param, values, trainable);
        self.params.borrow_mut().push(ParamEntry {
            slot,
            node: v.id,
            len,
            trainable,
        });
        v
    }

    pub fn values(&self, v: Var<'_>) -> Vec<f64> {
        self.nodes.borrow()[v.id].value.clone()
    }

    fn unary(&self, a: Var<'_>, op: Op, f: impl Fn(f64) -> f64) -> Var<'_> {
        let value: Vec<f64> = self.nodes.borrow()[a.id].value.iter().map(|&x| f(x)).collect();
        let ng = self.needs(a.id);
        self.push(op, value, ng)
    }

    fn bin(&self, a: Var<'_>, b: Var<'_>, op: Op, f: impl Fn(f64, f64) -> f64) -> Var<'_> {
        let value = {
            let nodes = self.nodes.borrow();
            binary(&nodes[a.id].value, &nodes[b.id].value, f)
        };
        let ng = self.needs(a.id) || self.needs(b.id);
        self.push(op, value, ng)
    }

    /// `Z = W·X`, plus `b` on the first `bias_cols` columns (the value channel).
    /// `W` is `rows_out × rows_in`, `X` is `rows_in × cols`, all row-major.
    #[allow(clippy::too_many_arguments)]
    pub fn dense<'t>(
        &'t self,
        w: Var<'t>,
        b: Var<'t>,
        x: Var<'t>,
        rows_out: usize,
        rows_in: usize,
        cols: usize,
        bias_cols: usize,
    ) -> Var<'t> {
        let value = {
            let nodes = self.nodes.borrow();
            let (wv, bv, xv) = (&nodes[w.id].value, &nodes[b.id].value, &nodes[x.id].value);
            assert_eq!(wv.len(), rows_out * rows_in, "weight shape");
            assert_eq!(bv.len(), rows_out, "bias shape");
            assert_eq!(xv.len(), rows_in * cols, "input shape");
            let mut z = vec![0.0; rows_out * cols];
            gemm(
                rows_out, rows_in, cols, wv, rows_in as isize, 1, xv, cols as isize, 1, &mut z,
                false,
            );
            for r in 0..rows_out {
                let row = &mut z[r * cols..r * cols + bias_cols];
                for v in row {
                    *v += bv[r];
                }
            }
            z
        };
        let ng = self.needs(w.id) || self.needs(b.id) || self.needs(x.id);
        self.push(
            Op::Dense {
                w: w.id,
                b: b.id,
                x: x.id,
                rows_out,
                rows_in,
                cols,
                bias_cols,
            },
            value,
            ng,
        )
    }

    /// Applies `act` to every row of a batched jet buffer laid out as
    /// `rows × (channels · n)`, propagating the derivative channels.
    pub fn activate<'t>(&'t self, z: Var<'t>, act: Activation, layout: Layout, n: usize) -> Var<'t> {
        let value = {
            let nodes = self.nodes.borrow();
            let zv = &nodes[z.id].value;
            let cols = layout.channels() * n;
            assert_eq!(zv.len() % cols, 0, "activation input shape");
            let rows = zv.len() / cols;
            let mut h = vec![0.0; zv.len()];
            let mut f1 = vec![0.0; n];
            let mut f2 = vec![0.0; n];
            for r in 0..rows {
                let zr = &zv[r * cols..(r + 1) * cols];
                let hr = &mut h[r * cols..(r + 1) * cols];
                for p in 0..n {
                    let (s, d1, d2, _) = act.derivs(zr[p]);
                    hr[p] = s;
                    f1[p] = d1;
                    f2[p] = d2;
                }
                act_forward_channels(zr, hr, &f1, &f2, layout, n);
            }
            h
        };
        let ng = self.needs(z.id);
        let rows = value.len() / (layout.channels() * n);
        self.push(
            Op::Act {
                z: z.id,
                act,
                layout,
                n,
                rows,
            },
            value,
            ng,
        )
    }

    pub fn finalize(&self, loss: Var<'_>) -> Result<(), TapeError> {
        let len = self.nodes.borrow()[loss.id].value.len();
        if len != 1 {
            return Err(TapeError::NotScalar(len));
        }
        self.loss.set(Some(loss.id));
        Ok(())
    }

    /// Reverse sweep from the finalized loss. Every registered parameter slot
    /// appears in the result; frozen ones hold zeros.
    pub fn param_gradient(&self) -> Result<Gradients, TapeError> {
        let loss = self.loss.get().ok_or(TapeError::NotFinalized)?;
        if self.overflowed.get() {
            return Err(TapeError::BudgetExceeded(self.budget));
        }
        let nodes = self.nodes.borrow();
        let mut adj: Vec<Option<Vec<f64>>> = Vec::with_capacity(loss + 1);
        adj.resize_with(loss + 1, || None);
        if nodes[loss].needs_grad {
            adj[loss] = Some(vec![1.0]);
        }
        for id in (0..=loss).rev() {
            let Some(g) = adj[id].take() else { continue };
            if g.iter().any(|x| !x.is_finite()) {
                return Err(TapeError::NonFinite(id));
            }
            let node = &nodes[id];
            backward(&nodes, node, &g, &mut adj);
            if let Op::Param = node.op {
                adj[id] = Some(g);
            }
        }
        let mut out = Gradients::default();
        for p in self.params.borrow().iter() {
            let g = if p.trainable && p.node <= loss {
                adj[p.node].take().unwrap_or_else(|| vec![0.0; p.len])
            } else {
                vec![0.0; p.len]
            };
            match out.by_slot.get_mut(&p.slot) {
                Some(acc) => {
                    for (a, x) in acc.iter_mut().zip(&g) {
                        *a += x;
                    }
                }
                None => {
                    out.by_slot.insert(p.slot, g);
                }
            }
        }
        Ok(out)
    }
}

fn act_forward_channels(zr: &[f64], hr: &mut [f64], f1: &[f64], f2: &[f64], layout: Layout, n: usize) {
    if layout.order == 0 {
        return;
    }
    let dim = layout.dim;
    for i in 0..dim {
        let c = layout.d1_channel(i) * n;
        for p in 0..n {
            hr[c + p] = f1[p] * zr[c + p];
        }
    }
    if layout.order < 2 {
        return;
    }
    for i in 0..dim {
        for j in i..dim {
            let c = layout.d2_channel(i, j) * n;
            let ci = layout.d1_channel(i) * n;
            let cj = layout.d1_channel(j) * n;
            for p in 0..n {
                hr[c + p] = f2[p] * zr[ci + p] * zr[cj + p] + f1[p] * zr[c + p];
            }
        }
    }
}

/// C (m×n) (+)= A (m×k) · B (k×n) with explicit strides for A and B.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: callers pass buffers whose lengths match the stated shapes
    // (checked when the node was recorded), and `c` does not alias `a`/`b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn adj_slot<'a>(adj: &'a mut [Option<Vec<f64>>], nodes: &[Node], id: usize) -> Option<&'a mut Vec<f64>> {
    if !nodes[id].needs_grad {
        return None;
    }
    let len = nodes[id].value.len();
    Some(adj[id].get_or_insert_with(|| vec![0.0; len]))
}

fn backward(nodes: &[Node], node: &Node, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
    let n = g.len();
    match node.op {
        Op::Leaf | Op::Param => {}
        Op::Add(a, b) => {
            if let Some(t) = adj_slot(adj, nodes, a) {
                accumulate(t, g.iter().copied());
            }
            if let Some(t) = adj_slot(adj, nodes, b) {
                accumulate(t, g.iter().copied());
            }
        }
        Op::Sub(a, b) => {
            if let Some(t) = adj_slot(adj, nodes, a) {
                accumulate(t, g.iter().copied());
            }
            if let Some(t) = adj_slot(adj, nodes, b) {
                accumulate(t, g.iter().map(|x| -x));
            }
        }
        Op::Mul(a, b) => {
            let (av, bv) = (&nodes[a].value, &nodes[b].value);
            if let Some(t) = adj_slot(adj, nodes, a) {
                accumulate(t, (0..n).map(|i| g[i] * at(bv, i)));
            }
            if let Some(t) = adj_slot(adj, nodes, b) {
                accumulate(t, (0..n).map(|i| g[i] * at(av, i)));
            }
        }
        Op::Neg(a) => {
            if let Some(t) = adj_slot(adj, nodes, a) {
                accumulate(t, g.iter().map(|x| -x));
            }
        }
        Op::AddConst(a) => {
            if let Some(t) = adj_slot(adj, nodes, a) {
                accumulate(t, g.iter().copied());
            }
        }
        Op::MulConst(a, c) => {
            if let Some(t) = adj_slot(adj, nodes, a) {
                accumulate(t, g.iter().map(|x| x * c));
            }
        }
        Op::Sin(a) => {
            let av = &nodes[a].value;
            if let Some(t) = adj_slot(adj, nodes, a) {
                accumulate(t, (0..n).map(|i| g[i] * av[i].cos()));
            }
        }
        Op::Cos(a) => {
            let av = &nodes[a].value;
            if let Some(t) = adj_slot(adj, nodes, a) {
                accumulate(t, (0..n).map(|i| -g[i] * av[i].sin()));
            }
        }
        Op::Tanh(a) => {
            let y = &node.value;
            if let Some(t) = adj_slot(adj, nodes, a) {
                accumulate(t, (0..n).map(|i| g[i] * (1.0 - y[i] * y[i])));
            }
        }
        Op::Recip(a) => {
            let y = &node.value;
            if let Some(t) = adj_slot(adj, nodes, a) {
                accumulate(t, (0..n).map(|i| -g[i] * y[i] * y[i]));
            }
        }
        Op::Sum(a) => {
            let len = nodes[a].value.len();
            if let Some(t) = adj_slot(adj, nodes, a) {
                accumulate(t, std::iter::repeat(g[0]).take(len));
            }
        }
        Op::Mean(a) => {
            let len = nodes[a].value.len();
            let s = g[0] / len as f64;
            if let Some(t) = adj_slot(adj, nodes, a) {
                accumulate(t, std::iter::repeat(s).take(len));
            }
        }
        Op::Slice { src, offset } => {
            if let Some(t) = adj_slot(adj, nodes, src) {
                for (x, y) in t[offset..offset + n].iter_mut().zip(g) {
                    *x += y;
                }
            }
        }
        Op::Dense {
            w,
            b,
            x,
            rows_out,
            rows_in,
            cols,
            bias_cols,
        } => {
            let wv = &nodes[w].value;
            let xv = &nodes[x].value;
            if let Some(t) = adj_slot(adj, nodes, w) {
                // gW += gZ · Xᵀ
                gemm(
                    rows_out, cols, rows_in, g, cols as isize, 1, xv, 1, cols as isize, t, true,
                );
            }
            if let Some(t) = adj_slot(adj, nodes, b) {
                for r in 0..rows_out {
                    t[r] += g[r * cols..r * cols + bias_cols].iter().sum::<f64>();
                }
            }
            if let Some(t) = adj_slot(adj, nodes, x) {
                // gX += Wᵀ · gZ
                gemm(
                    rows_in, rows_out, cols, wv, 1, rows_in as isize, g, cols as isize, 1, t, true,
                );
            }
        }
        Op::Act {
            z,
            act,
            layout,
            n: np,
            rows,
        } => {
            if let Some(t) = adj_slot(adj, nodes, z) {
                act_backward(&nodes[z].value, &node.value, g, t, act, layout, np, rows);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn act_backward(
    zv: &[f64],
    hv: &[f64],
    g: &[f64],
    out: &mut [f64],
    act: Activation,
    layout: Layout,
    n: usize,
    rows: usize,
) {
    let cols = layout.channels() * n;
    let dim = layout.dim;
    let mut f1 = vec![0.0; n];
    let mut f2 = vec![0.0; n];
    let mut f3 = vec![0.0; n];
    for r in 0..rows {
        let zr = &zv[r * cols..(r + 1) * cols];
        let hr = &hv[r * cols..r * cols + n];
        let gr = &g[r * cols..(r + 1) * cols];
        let or = &mut out[r * cols..(r + 1) * cols];
        for p in 0..n {
            let (d1, d2, d3) = act.derivs_given(zr[p], hr[p]);
            f1[p] = d1;
            f2[p] = d2;
            f3[p] = d3;
        }
        for p in 0..n {
            or[p] += f1[p] * gr[p];
        }
        if layout.order == 0 {
            continue;
        }
        for i in 0..dim {
            let c = layout.d1_channel(i) * n;
            for p in 0..n {
                or[c + p] += f1[p] * gr[c + p];
                or[p] += f2[p] * gr[c + p] * zr[c + p];
            }
        }
        if layout.order < 2 {
            continue;
        }
        for i in 0..dim {
            for j in i..dim {
                let c = layout.d2_channel(i, j) * n;
                let ci = layout.d1_channel(i) * n;
                let cj = layout.d1_channel(j) * n;
                for p in 0..n {
                    let gh = gr[c + p];
                    or[c + p] += f1[p] * gh;
                    or[p] += gh * (f3[p] * zr[ci + p] * zr[cj + p] + f2[p] * zr[c + p]);
                    if i == j {
                        or[ci + p] += 2.0 * f2[p] * gh * zr[ci + p];
                    } else {
                        or[ci + p] += f2[p] * gh * zr[cj + p];
                        or[cj + p] += f2[p] * gh * zr[ci + p];
                    }
                }
            }
        }
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn len(&self) -> usize {
        self.tape.nodes.borrow()[self.id].value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First (for scalars: the only) value.
    pub fn value(&self) -> f64 {
        self.tape.nodes.borrow()[self.id].value[0]
    }

    pub fn values(&self) -> Vec<f64> {
        self.tape.values(*self)
    }

    pub fn sum(self) -> Var<'t> {
        let s = self.tape.nodes.borrow()[self.id].value.iter().sum::<f64>();
        let ng = self.tape.needs(self.id);
        self.tape.push(Op::Sum(self.id), vec![s], ng)
    }

    pub fn mean(self) -> Var<'t> {
        let m = {
            let nodes = self.tape.nodes.borrow();
            let v = &nodes[self.id].value;
            v.iter().sum::<f64>() / v.len() as f64
        };
        let ng = self.tape.needs(self.id);
        self.tape.push(Op::Mean(self.id), vec![m], ng)
    }

    pub fn slice(self, offset: usize, len: usize) -> Var<'t> {
        let v = self.tape.nodes.borrow()[self.id].value[offset..offset + len].to_vec();
        let ng = self.tape.needs(self.id);
        self.tape.push(
            Op::Slice {
                src: self.id,
                offset,
            },
            v,
            ng,
        )
    }

    pub fn square(self) -> Var<'t> {
        self * self
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        self.tape.bin(self, rhs, Op::Add(self.id, rhs.id), |a, b| a + b)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        self.tape.bin(self, rhs, Op::Sub(self.id, rhs.id), |a, b| a - b)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        self.tape.bin(self, rhs, Op::Mul(self.id, rhs.id), |a, b| a * b)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.tape.unary(self, Op::Neg(self.id), |a| -a)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Self {
        self.tape.unary(self, Op::AddConst(self.id), |a| a + c)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Self {
        self.tape.unary(self, Op::AddConst(self.id), |a| a - c)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Self {
        self.tape.unary(self, Op::MulConst(self.id, c), |a| a * c)
    }
}

impl<'t> Scalar for Var<'t> {
    fn sin(&self) -> Self {
        self.tape.unary(*self, Op::Sin(self.id), f64::sin)
    }
    fn cos(&self) -> Self {
        self.tape.unary(*self, Op::Cos(self.id), f64::cos)
    }
    fn tanh(&self) -> Self {
        self.tape.unary(*self, Op::Tanh(self.id), f64::tanh)
    }
    fn recip(&self) -> Self {
        self.tape.unary(*self, Op::Recip(self.id), |a| 1.0 / a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn square_gradient() {
        let tape = Tape::default();
        let t = tape.param(0, vec![3.0], true);
        let l = t * t;
        tape.finalize(l).unwrap();
        let g = tape.param_gradient().unwrap();
        assert_eq!(g.get(0).unwrap(), &[6.0]);
    }

    #[test]
    fn frozen_parameters_get_zero() {
        let tape = Tape::default();
        let w = tape.param(0, vec![1.0, 2.0], false);
        let x = tape.leaf(vec![0.5, -0.5]);
        let l = (w * x).square().sum();
        tape.finalize(l).unwrap();
        let g = tape.param_gradient().unwrap();
        assert_eq!(g.get(0).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn unfinalized_tape_is_rejected() {
        let tape = Tape::default();
        let _ = tape.param(0, vec![1.0], true);
        assert_eq!(tape.param_gradient(), Err(TapeError::NotFinalized));
    }

    #[test]
    fn budget_overflow_is_reported() {
        let tape = Tape::new(3);
        let a = tape.param(0, vec![1.0], true);
        let mut l = a;
        for _ in 0..5 {
            l = l + a;
        }
        tape.finalize(l).unwrap();
        assert_eq!(tape.param_gradient(), Err(TapeError::BudgetExceeded(3)));
    }

    #[test]
    fn nan_adjoint_reports_node() {
        let tape = Tape::default();
        let a = tape.param(0, vec![0.0], true);
        let r = a.recip(); // inf
        let l = r * 0.0 + a;
        tape.finalize(l).unwrap();
        // d(l)/d(r) = 0, so the adjoint of r is 0 and of a is 0 * (-inf) = NaN
        match tape.param_gradient() {
            Err(TapeError::NonFinite(id)) => assert_eq!(id, 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ignored_parameter_has_exact_zero() {
        let tape = Tape::default();
        let a = tape.param(0, vec![2.0], true);
        let _b = tape.param(1, vec![5.0], true);
        let l = a.sin();
        tape.finalize(l).unwrap();
        let g = tape.param_gradient().unwrap();
        assert_eq!(g.get(1).unwrap(), &[0.0]);
        assert_relative_eq!(g.get(0).unwrap()[0], 2.0f64.cos(), max_relative = 1e-15);
    }

    #[test]
    fn broadcast_scalar_times_vector() {
        let tape = Tape::default();
        let s = tape.param(0, vec![2.0], true);
        let v = tape.param(1, vec![1.0, 2.0, 3.0], true);
        let l = (s * v).sum();
        tape.finalize(l).unwrap();
        let g = tape.param_gradient().unwrap();
        assert_eq!(g.get(0).unwrap(), &[6.0]);
        assert_eq!(g.get(1).unwrap(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn dense_matches_manual_product() {
        let tape = Tape::default();
        let w = tape.param(0, vec![1.0, 2.0, 3.0, 4.0], true);
        let b = tape.param(1, vec![0.5, -0.5], true);
        let x = tape.leaf(vec![1.0, 0.0, 2.0, 1.0]); // 2x2, cols 2
        let z = tape.dense(w, b, x, 2, 2, 2, 1);
        // row0 = [1*1+2*2 + .5, 1*0+2*1] ; row1 = [3*1+4*2 - .5, 4]
        assert_eq!(z.values(), vec![5.5, 2.0, 10.5, 4.0]);
        let l = z.sum();
        tape.finalize(l).unwrap();
        let g = tape.param_gradient().unwrap();
        assert_eq!(g.get(0).unwrap(), &[1.0, 3.0, 1.0, 3.0]);
        assert_eq!(g.get(1).unwrap(), &[1.0, 1.0]);
    }
}
