use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Jet2, Layout, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(width: usize, activation: Activation) -> Self {
        LayerSpec { width, activation }
    }

    pub fn sine(width: usize) -> Self {
        Self::new(width, Activation::Sine)
    }

    pub fn tanh(width: usize) -> Self {
        Self::new(width, Activation::Tanh)
    }

    pub fn linear(width: usize) -> Self {
        Self::new(width, Activation::Linear)
    }
}

/// Fully connected layer; `weight` is `fan_out × fan_in`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    /// Glorot-uniform weights, zero biases.
    pub fn glorot(fan_in: usize, spec: LayerSpec, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (fan_in + spec.width) as f64).sqrt();
        let weight = (0..fan_in * spec.width)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        DenseLayer {
            fan_in,
            fan_out: spec.width,
            activation: spec.activation,
            weight,
            bias: vec![0.0; spec.width],
        }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::new(self.fan_out, self.activation)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (0..self.fan_out)
            .map(|o| {
                let row = &self.weight[o * self.fan_in..(o + 1) * self.fan_in];
                let z = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias[o];
                self.activation.apply(z)
            })
            .collect()
    }

    pub fn eval_jet(&self, x: &[Jet2<f64>]) -> Vec<Jet2<f64>> {
        let dim = x[0].dim();
        (0..self.fan_out)
            .map(|o| {
                let row = &self.weight[o * self.fan_in..(o + 1) * self.fan_in];
                let mut z = Jet2::constant(self.bias[o], dim);
                for (w, xi) in row.iter().zip(x) {
                    z.value += w * xi.value;
                    for (a, b) in z.d1.iter_mut().zip(&xi.d1) {
                        *a += w * b;
                    }
                    for (a, b) in z.d2.iter_mut().zip(&xi.d2) {
                        *a += w * b;
                    }
                }
                match self.activation {
                    Activation::Sine => z.sin(),
                    Activation::Tanh => z.tanh(),
                    Activation::Linear => z,
                }
            })
            .collect()
    }
}

/// A named stack of layers (the trunk, one branch, or the whole baseline).
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub name: String,
    pub layers: Vec<DenseLayer>,
    pub frozen: bool,
}

impl Component {
    pub fn build(name: &str, fan_in: usize, specs: &[LayerSpec], rng: &mut impl Rng) -> Self {
        let mut layers = Vec::with_capacity(specs.len());
        let mut width = fan_in;
        for s in specs {
            layers.push(DenseLayer::glorot(width, *s, rng));
            width = s.width;
        }
        Component {
            name: name.to_string(),
            layers,
            frozen: false,
        }
    }

    pub fn out_width(&self) -> usize {
        self.layers.last().map(|l| l.fan_out).unwrap_or(0)
    }

    pub fn in_width(&self) -> usize {
        self.layers.first().map(|l| l.fan_in).unwrap_or(0)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|x| x.is_finite()))
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for l in &self.layers {
            h = l.eval(&h);
        }
        h
    }

    pub fn eval_jet(&self, x: &[Jet2<f64>]) -> Vec<Jet2<f64>> {
        let mut h = x.to_vec();
        for l in &self.layers {
            h = l.eval_jet(&h);
        }
        h
    }

    /// Records the stack on the tape; `first_slot` is the weight slot of the
    /// first layer. Returns the `out_width × channels·n` activation buffer.
    pub fn record<'t>(
        &self,
        tape: &'t Tape,
        input: Var<'t>,
        first_slot: usize,
        layout: Layout,
        n: usize,
    ) -> Var<'t> {
        let cols = layout.channels() * n;
        let mut h = input;
        for (k, l) in self.layers.iter().enumerate() {
            let slot = first_slot + 2 * k;
            let w = tape.param(slot, l.weight.clone(), !self.frozen);
            let b = tape.param(slot + 1, l.bias.clone(), !self.frozen);
            let z = tape.dense(w, b, h, l.fan_out, l.fan_in, cols, n);
            h = match l.activation {
                Activation::Linear => z,
                act => tape.activate(z, act, layout, n),
            };
        }
        h
    }
}
