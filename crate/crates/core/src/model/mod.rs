//! Trunk-branch network, the plain fully connected baseline, and checkpoints.

mod checkpoint;
mod fnn;
mod layers;
mod tbnet;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::autodiff::{Jet2, Layout, Tape, Var};

pub use checkpoint::{load_checkpoint, save_checkpoint, ArrayHeader, Checkpoint, ModelSpec};
pub use fnn::{FnnBaseline, FnnSpec};
pub use layers::{Component, DenseLayer, LayerSpec};
pub use tbnet::{ArchSpec, BranchSpec, TBNet};

pub use crate::autodiff::Activation;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("expected {expected} inputs, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite parameter in {0}")]
    NonFiniteParameter(String),
    #[error("inconsistent architecture: {0}")]
    Inconsistent(String),
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint version {found} unsupported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("shape mismatch for {0}")]
    Shape(String),
}

/// Reusable activations of frozen sub-networks for one fixed point set.
#[derive(Default, Debug, Clone)]
pub struct ForwardCache {
    pub(crate) entries: BTreeMap<(String, usize, u8), Vec<f64>>,
}

impl ForwardCache {
    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// What the trainer and evaluation code need from a network.
pub trait Network {
    fn input_dim(&self) -> usize;
    fn output_names(&self) -> &[String];

    fn components(&self) -> &[Component];
    fn components_mut(&mut self) -> &mut [Component];

    /// Records the outputs for a batch of points (row-major `n × input_dim`)
    /// on the tape. Only the outputs listed in `wanted` are computed; the rest
    /// come back as `None`.
    fn record<'t>(
        &self,
        tape: &'t Tape,
        points: &[f64],
        layout: Layout,
        wanted: &[&str],
        cache: Option<&mut ForwardCache>,
    ) -> Result<Vec<Option<Jet2<Var<'t>>>>, ModelError>;

    /// Straight-line evaluation of value, gradient and Hessian at one point.
    fn input_derivatives(&self, x: &[f64]) -> Result<Vec<Jet2<f64>>, ModelError>;

    fn forward_eval(&self, x: &[f64]) -> Result<Vec<f64>, ModelError>;

    fn output_index(&self, name: &str) -> Option<usize> {
        self.output_names().iter().position(|n| n == name)
    }

    /// Parameter arrays in canonical order (component, layer, weight then bias).
    fn param_arrays(&self) -> Vec<&[f64]> {
        self.components()
            .iter()
            .flat_map(|c| c.layers.iter())
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn freeze_mask(&self) -> Vec<bool> {
        self.components()
            .iter()
            .flat_map(|c| c.layers.iter().flat_map(move |_| [c.frozen, c.frozen]))
            .collect()
    }

    fn param_count(&self) -> usize {
        self.param_arrays().iter().map(|a| a.len()).sum()
    }

    /// Flat vector of every unfrozen parameter, canonical order.
    fn trainable_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for c in self.components().iter().filter(|c| !c.frozen) {
            for l in &c.layers {
                out.extend_from_slice(&l.weight);
                out.extend_from_slice(&l.bias);
            }
        }
        out
    }

    fn set_trainable_flat(&mut self, flat: &[f64]) {
        let mut k = 0;
        for c in self.components_mut().iter_mut().filter(|c| !c.frozen) {
            for l in &mut c.layers {
                let n = l.weight.len();
                l.weight.copy_from_slice(&flat[k..k + n]);
                k += n;
                let n = l.bias.len();
                l.bias.copy_from_slice(&flat[k..k + n]);
                k += n;
            }
        }
        assert_eq!(k, flat.len(), "flat parameter length mismatch");
    }

    /// Freezes the named components; unknown names are an error and leave the
    /// net untouched.
    fn freeze(&mut self, names: &[&str]) -> Result<(), ModelError> {
        self.set_frozen(names, true)
    }

    fn unfreeze(&mut self, names: &[&str]) -> Result<(), ModelError> {
        self.set_frozen(names, false)
    }

    fn set_frozen(&mut self, names: &[&str], frozen: bool) -> Result<(), ModelError> {
        for n in names {
            if !self.components().iter().any(|c| c.name == *n) {
                return Err(ModelError::UnknownComponent(n.to_string()));
            }
        }
        for c in self.components_mut() {
            if names.contains(&c.name.as_str()) {
                c.frozen = frozen;
            }
        }
        Ok(())
    }

    fn check_finite(&self) -> Result<(), ModelError> {
        for c in self.components() {
            if !c.is_finite() {
                return Err(ModelError::NonFiniteParameter(c.name.clone()));
            }
        }
        Ok(())
    }
}

/// Tape slot of a (component, layer) weight; the bias uses the next slot.
pub(crate) fn slot_of(components: &[Component], comp: usize, layer: usize) -> usize {
    let before: usize = components[..comp].iter().map(|c| c.layers.len()).sum();
    2 * (before + layer)
}

/// Input coordinates as a batched jet buffer (`dim × channels·n`).
pub fn input_buffer(points: &[f64], dim: usize, layout: Layout) -> Vec<f64> {
    assert_eq!(points.len() % dim, 0);
    let n = points.len() / dim;
    let cols = layout.channels() * n;
    let mut x = vec![0.0; dim * cols];
    for i in 0..dim {
        let row = &mut x[i * cols..(i + 1) * cols];
        for p in 0..n {
            row[p] = points[p * dim + i];
        }
        if layout.order >= 1 {
            let c = layout.d1_channel(i) * n;
            row[c..c + n].fill(1.0);
        }
    }
    x
}

/// Splits row `row` of a final-layer buffer into a jet of tape variables.
pub(crate) fn jet_from_rows<'t>(out: Var<'t>, row: usize, layout: Layout, n: usize) -> Jet2<Var<'t>> {
    let cols = layout.channels() * n;
    let ch = |c: usize| out.slice(row * cols + c * n, n);
    let value = ch(0);
    let d1 = if layout.order >= 1 {
        (0..layout.dim).map(|i| ch(layout.d1_channel(i))).collect()
    } else {
        Vec::new()
    };
    let d2 = if layout.order >= 2 {
        let mut v = Vec::new();
        for i in 0..layout.dim {
            for j in i..layout.dim {
                v.push(ch(layout.d2_channel(i, j)));
            }
        }
        v
    } else {
        Vec::new()
    };
    Jet2 { value, d1, d2 }
}
