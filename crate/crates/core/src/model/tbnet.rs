use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Component, LayerSpec};
use super::{input_buffer, jet_from_rows, slot_of, ForwardCache, ModelError, Network};
use crate::autodiff::{Jet2, Layout, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub output: String,
    pub layers: Vec<LayerSpec>,
}

/// Trunk plus one single-output branch per primary variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub input_dim: usize,
    pub trunk: Vec<LayerSpec>,
    pub branches: Vec<BranchSpec>,
    /// When set, a branch's listed depth includes its linear output neuron,
    /// so the last listed layer is replaced by the head.
    #[serde(default)]
    pub head_in_depth: bool,
}

impl ArchSpec {
    /// `trunk_depth × trunk_width` trunk whose first layer is sine and the
    /// rest tanh; each named branch gets `depth × width` tanh layers (first
    /// layer sine when `sine_first`) plus a linear head.
    pub fn standard(
        input_dim: usize,
        trunk: (usize, usize),
        branches: &[(&str, usize, usize, bool)],
    ) -> Self {
        let stack = |depth: usize, width: usize, sine_first: bool| -> Vec<LayerSpec> {
            (0..depth)
                .map(|i| {
                    if i == 0 && sine_first {
                        LayerSpec::sine(width)
                    } else {
                        LayerSpec::tanh(width)
                    }
                })
                .collect()
        };
        ArchSpec {
            input_dim,
            trunk: stack(trunk.0, trunk.1, true),
            branches: branches
                .iter()
                .map(|&(name, depth, width, sine)| BranchSpec {
                    output: name.to_string(),
                    layers: stack(depth, width, sine),
                })
                .collect(),
            head_in_depth: false,
        }
    }

    /// Layers actually instantiated for a branch, head included.
    pub fn branch_layers(&self, b: &BranchSpec) -> Vec<LayerSpec> {
        let mut layers = b.layers.clone();
        if self.head_in_depth {
            layers.pop();
        }
        layers.push(LayerSpec::linear(1));
        layers
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(1..=3).contains(&self.input_dim) {
            return Err(ModelError::Inconsistent(format!(
                "input dimension {}",
                self.input_dim
            )));
        }
        if self.branches.is_empty() {
            return Err(ModelError::Inconsistent("no branches".into()));
        }
        if self.trunk.is_empty() {
            return Err(ModelError::Inconsistent("empty trunk".into()));
        }
        let widths = self.trunk.iter().chain(self.branches.iter().flat_map(|b| &b.layers));
        if widths.clone().any(|l| l.width == 0) {
            return Err(ModelError::Inconsistent("zero-width layer".into()));
        }
        for (i, b) in self.branches.iter().enumerate() {
            if b.output == "trunk" {
                return Err(ModelError::Inconsistent("branch named `trunk`".into()));
            }
            if self.branches[..i].iter().any(|o| o.output == b.output) {
                return Err(ModelError::Inconsistent(format!(
                    "output `{}` declared twice",
                    b.output
                )));
            }
            if self.head_in_depth && b.layers.is_empty() {
                return Err(ModelError::Inconsistent(format!(
                    "branch `{}` has no layers to replace with a head",
                    b.output
                )));
            }
        }
        Ok(())
    }

    pub fn outputs(&self) -> Vec<String> {
        self.branches.iter().map(|b| b.output.clone()).collect()
    }
}

/// Trunk-branch network. Component 0 is the trunk; the rest are branches in
/// declaration order, each named after its output.
#[derive(Clone, Debug, PartialEq)]
pub struct TBNet {
    pub arch: ArchSpec,
    pub components: Vec<Component>,
    pub output_order: Vec<String>,
}

impl TBNet {
    pub fn init(arch: &ArchSpec, seed: u64) -> Result<Self, ModelError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trunk = Component::build("trunk", arch.input_dim, &arch.trunk, &mut rng);
        let width = trunk.out_width();
        let mut components = vec![trunk];
        for b in &arch.branches {
            components.push(Component::build(
                &b.output,
                width,
                &arch.branch_layers(b),
                &mut rng,
            ));
        }
        Ok(TBNet {
            arch: arch.clone(),
            components,
            output_order: arch.outputs(),
        })
    }

    /// Rebuilds a net from already-initialized components.
    pub fn from_components(
        arch: ArchSpec,
        components: Vec<Component>,
        output_order: Vec<String>,
    ) -> Result<Self, ModelError> {
        arch.validate()?;
        let trunk_w = components
            .first()
            .filter(|c| c.name == "trunk")
            .ok_or_else(|| ModelError::Inconsistent("missing trunk".into()))?
            .out_width();
        for c in &components[1..] {
            if c.in_width() != trunk_w {
                return Err(ModelError::Inconsistent(format!(
                    "branch `{}` expects width {}, trunk gives {}",
                    c.name,
                    c.in_width(),
                    trunk_w
                )));
            }
            if c.out_width() != 1 {
                return Err(ModelError::Inconsistent(format!(
                    "branch `{}` must end in one neuron",
                    c.name
                )));
            }
        }
        let mut names: Vec<&str> = components[1..].iter().map(|c| c.name.as_str()).collect();
        let mut ordered: Vec<&str> = output_order.iter().map(|s| s.as_str()).collect();
        names.sort_unstable();
        ordered.sort_unstable();
        if names != ordered {
            return Err(ModelError::Inconsistent(
                "output order does not match branches".into(),
            ));
        }
        Ok(TBNet {
            arch,
            components,
            output_order,
        })
    }

    pub fn trunk(&self) -> &Component {
        &self.components[0]
    }

    pub fn branch(&self, output: &str) -> Option<&Component> {
        self.components[1..].iter().find(|c| c.name == output)
    }

    fn branch_index(&self, output: &str) -> Option<usize> {
        self.components[1..]
            .iter()
            .position(|c| c.name == output)
            .map(|i| i + 1)
    }

    /// Copies every component of `source` whose name and shape match, leaving
    /// the remaining components as initialized.
    pub fn adopt(&mut self, source: &TBNet) -> Result<Vec<String>, ModelError> {
        let mut taken = Vec::new();
        for c in &source.components {
            if let Some(dst) = self.components.iter_mut().find(|d| d.name == c.name) {
                if dst.specs() != c.specs() || dst.in_width() != c.in_width() {
                    return Err(ModelError::Shape(c.name.clone()));
                }
                for (a, b) in dst.layers.iter_mut().zip(&c.layers) {
                    a.weight.clone_from(&b.weight);
                    a.bias.clone_from(&b.bias);
                }
                taken.push(c.name.clone());
            }
        }
        Ok(taken)
    }
}

impl Network for TBNet {
    fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    fn output_names(&self) -> &[String] {
        &self.output_order
    }

    fn components(&self) -> &[Component] {
        &self.components
    }

    fn components_mut(&mut self) -> &mut [Component] {
        &mut self.components
    }

    fn record<'t>(
        &self,
        tape: &'t Tape,
        points: &[f64],
        layout: Layout,
        wanted: &[&str],
        mut cache: Option<&mut ForwardCache>,
    ) -> Result<Vec<Option<Jet2<Var<'t>>>>, ModelError> {
        let dim = self.input_dim();
        if layout.dim != dim || points.len() % dim != 0 {
            return Err(ModelError::DimensionMismatch {
                expected: dim,
                got: layout.dim,
            });
        }
        let n = points.len() / dim;
        let trunk = &self.components[0];
        let key = |name: &str| (name.to_string(), n, layout.order);
        let trunk_out = match cache.as_deref().and_then(|c| c.entries.get(&key("trunk"))) {
            Some(buf) if trunk.frozen => tape.leaf(buf.clone()),
            _ => {
                let x = tape.leaf(input_buffer(points, dim, layout));
                let h = trunk.record(tape, x, 0, layout, n);
                if trunk.frozen {
                    if let Some(c) = cache.as_deref_mut() {
                        c.entries.insert(key("trunk"), h.values());
                    }
                }
                h
            }
        };
        let mut out = vec![None; self.output_order.len()];
        for (k, name) in self.output_order.iter().enumerate() {
            if !wanted.contains(&name.as_str()) {
                continue;
            }
            let ci = self.branch_index(name).expect("validated output order");
            let comp = &self.components[ci];
            let reuse = trunk.frozen && comp.frozen;
            let cached = if reuse {
                cache.as_deref().and_then(|c| c.entries.get(&key(name))).cloned()
            } else {
                None
            };
            let buf = match cached {
                Some(b) => tape.leaf(b),
                None => {
                    let h = comp.record(tape, trunk_out, slot_of(&self.components, ci, 0), layout, n);
                    if reuse {
                        if let Some(c) = cache.as_deref_mut() {
                            c.entries.insert(key(name), h.values());
                        }
                    }
                    h
                }
            };
            out[k] = Some(jet_from_rows(buf, 0, layout, n));
        }
        Ok(out)
    }

    fn input_derivatives(&self, x: &[f64]) -> Result<Vec<Jet2<f64>>, ModelError> {
        let dim = self.input_dim();
        if x.len() != dim {
            return Err(ModelError::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        self.check_finite()?;
        let inputs: Vec<Jet2<f64>> = (0..dim).map(|i| Jet2::variable(x[i], i, dim)).collect();
        let h = self.components[0].eval_jet(&inputs);
        Ok(self
            .output_order
            .iter()
            .map(|name| {
                let ci = self.branch_index(name).expect("validated output order");
                self.components[ci].eval_jet(&h).remove(0)
            })
            .collect())
    }

    fn forward_eval(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        let dim = self.input_dim();
        if x.len() != dim {
            return Err(ModelError::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        self.check_finite()?;
        let h = self.components[0].eval(x);
        Ok(self
            .output_order
            .iter()
            .map(|name| {
                let ci = self.branch_index(name).expect("validated output order");
                self.components[ci].eval(&h)[0]
            })
            .collect())
    }
}
