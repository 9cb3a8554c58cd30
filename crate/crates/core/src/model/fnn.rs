use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Component, LayerSpec};
use super::tbnet::ArchSpec;
use super::{input_buffer, jet_from_rows, ForwardCache, ModelError, Network};
use crate::autodiff::{Jet2, Layout, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FnnSpec {
    pub input_dim: usize,
    /// Hidden layers; a linear head with one neuron per output is appended.
    pub hidden: Vec<LayerSpec>,
    pub outputs: Vec<String>,
}

impl FnnSpec {
    /// Same neuron layout as a trunk-branch net: the trunk layers, then the
    /// branch layers placed side by side and fully connected to each other.
    pub fn matching(arch: &ArchSpec) -> Self {
        let mut hidden = arch.trunk.clone();
        let per_branch: Vec<Vec<LayerSpec>> = arch
            .branches
            .iter()
            .map(|b| {
                let mut l = arch.branch_layers(b);
                l.pop();
                l
            })
            .collect();
        let depth = per_branch.iter().map(|l| l.len()).max().unwrap_or(0);
        for d in 0..depth {
            let width: usize = per_branch.iter().filter_map(|l| l.get(d)).map(|s| s.width).sum();
            let act = per_branch
                .iter()
                .find_map(|l| l.get(d))
                .map(|s| s.activation)
                .expect("depth bounded by the deepest branch");
            hidden.push(LayerSpec::new(width, act));
        }
        FnnSpec {
            input_dim: arch.input_dim,
            hidden,
            outputs: arch.outputs(),
        }
    }
}

/// Plain fully connected baseline with a multi-output linear head.
#[derive(Clone, Debug, PartialEq)]
pub struct FnnBaseline {
    pub spec: FnnSpec,
    pub components: Vec<Component>,
}

impl FnnBaseline {
    pub fn init(spec: &FnnSpec, seed: u64) -> Result<Self, ModelError> {
        if spec.outputs.is_empty() || spec.hidden.iter().any(|l| l.width == 0) {
            return Err(ModelError::Inconsistent("empty output set or zero width".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = spec.hidden.clone();
        layers.push(LayerSpec::linear(spec.outputs.len()));
        let net = Component::build("fnn", spec.input_dim, &layers, &mut rng);
        Ok(FnnBaseline {
            spec: spec.clone(),
            components: vec![net],
        })
    }

    pub fn output_dim(&self) -> usize {
        self.spec.outputs.len()
    }
}

impl Network for FnnBaseline {
    fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    fn output_names(&self) -> &[String] {
        &self.spec.outputs
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
        _cache: Option<&mut ForwardCache>,
    ) -> Result<Vec<Option<Jet2<Var<'t>>>>, ModelError> {
        let dim = self.input_dim();
        if layout.dim != dim || points.len() % dim != 0 {
            return Err(ModelError::DimensionMismatch {
                expected: dim,
                got: layout.dim,
            });
        }
        let n = points.len() / dim;
        let x = tape.leaf(input_buffer(points, dim, layout));
        let h = self.components[0].record(tape, x, 0, layout, n);
        Ok(self
            .spec
            .outputs
            .iter()
            .enumerate()
            .map(|(k, name)| wanted.contains(&name.as_str()).then(|| jet_from_rows(h, k, layout, n)))
            .collect())
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
        Ok(self.components[0].eval_jet(&inputs))
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
        Ok(self.components[0].eval(x))
    }
}
