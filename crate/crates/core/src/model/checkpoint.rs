//! Binary checkpoint: magic, header length (u64 LE), JSON header, then every
//! parameter array as little-endian f64 in canonical order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fnn::{FnnBaseline, FnnSpec};
use super::layers::Component;
use super::tbnet::{ArchSpec, TBNet};
use super::ModelError;

const MAGIC: &[u8; 8] = b"PPINNCK\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    TrunkBranch { arch: ArchSpec, output_order: Vec<String> },
    Fnn { spec: FnnSpec },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayHeader {
    pub component: String,
    pub layer: usize,
    /// "weight" or "bias"
    pub role: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    case_id: String,
    model: ModelSpec,
    arrays: Vec<ArrayHeader>,
    freeze_mask: Vec<bool>,
    epoch: u64,
    seed: u64,
}

/// In-memory checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub case_id: String,
    pub model: ModelSpec,
    pub components: Vec<Component>,
    pub epoch: u64,
    pub seed: u64,
}

impl Checkpoint {
    pub fn from_tbnet(net: &TBNet, case_id: &str, epoch: u64, seed: u64) -> Self {
        Checkpoint {
            case_id: case_id.to_string(),
            model: ModelSpec::TrunkBranch {
                arch: net.arch.clone(),
                output_order: net.output_order.clone(),
            },
            components: net.components.clone(),
            epoch,
            seed,
        }
    }

    pub fn from_fnn(net: &FnnBaseline, case_id: &str, epoch: u64, seed: u64) -> Self {
        Checkpoint {
            case_id: case_id.to_string(),
            model: ModelSpec::Fnn {
                spec: net.spec.clone(),
            },
            components: net.components.clone(),
            epoch,
            seed,
        }
    }

    pub fn freeze_mask(&self) -> Vec<bool> {
        self.components
            .iter()
            .flat_map(|c| c.layers.iter().flat_map(move |_| [c.frozen, c.frozen]))
            .collect()
    }

    pub fn to_tbnet(&self) -> Result<TBNet, ModelError> {
        match &self.model {
            ModelSpec::TrunkBranch { arch, output_order } => {
                let reference = TBNet::init(arch, 0)?;
                check_shapes(&reference.components, &self.components)?;
                TBNet::from_components(arch.clone(), self.components.clone(), output_order.clone())
            }
            ModelSpec::Fnn { .. } => Err(ModelError::Shape("checkpoint holds a plain network".into())),
        }
    }

    pub fn to_fnn(&self) -> Result<FnnBaseline, ModelError> {
        match &self.model {
            ModelSpec::Fnn { spec } => {
                let reference = FnnBaseline::init(spec, 0)?;
                check_shapes(&reference.components, &self.components)?;
                Ok(FnnBaseline {
                    spec: spec.clone(),
                    components: self.components.clone(),
                })
            }
            ModelSpec::TrunkBranch { .. } => {
                Err(ModelError::Shape("checkpoint holds a trunk-branch network".into()))
            }
        }
    }

    /// Loads into a net built for `arch`: components present in the
    /// checkpoint are copied (shapes must agree), new ones keep their fresh
    /// initialization from `seed`.
    pub fn into_arch(&self, arch: &ArchSpec, seed: u64) -> Result<TBNet, ModelError> {
        let source = self.to_tbnet()?;
        let mut net = TBNet::init(arch, seed)?;
        net.adopt(&source)?;
        Ok(net)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut arrays = Vec::new();
        let mut data: Vec<u8> = Vec::new();
        let mut offset = 0;
        for c in &self.components {
            for (k, l) in c.layers.iter().enumerate() {
                for (role, buf, shape) in [
                    ("weight", &l.weight, vec![l.fan_out, l.fan_in]),
                    ("bias", &l.bias, vec![l.fan_out]),
                ] {
                    arrays.push(ArrayHeader {
                        component: c.name.clone(),
                        layer: k,
                        role: role.to_string(),
                        shape,
                        offset,
                    });
                    for x in buf.iter() {
                        data.extend_from_slice(&x.to_le_bytes());
                    }
                    offset += buf.len();
                }
            }
        }
        let header = Header {
            version: FORMAT_VERSION,
            case_id: self.case_id.clone(),
            model: self.model.clone(),
            arrays,
            freeze_mask: self.freeze_mask(),
            epoch: self.epoch,
            seed: self.seed,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&data);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(ModelError::Corrupt("bad magic".into()));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if body.len() < hlen {
            return Err(ModelError::Corrupt("truncated header".into()));
        }
        // Peek at the version before committing to the full header layout.
        let raw: serde_json::Value = serde_json::from_slice(&body[..hlen])
            .map_err(|e| ModelError::Corrupt(e.to_string()))?;
        let version = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != FORMAT_VERSION {
            return Err(ModelError::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let header: Header =
            serde_json::from_value(raw).map_err(|e| ModelError::Corrupt(e.to_string()))?;
        let data = &body[hlen..];
        let total: usize = header.arrays.iter().map(|a| a.shape.iter().product::<usize>()).sum();
        if data.len() != total * 8 {
            return Err(ModelError::Corrupt(format!(
                "expected {} data bytes, found {}",
                total * 8,
                data.len()
            )));
        }
        let read = |a: &ArrayHeader| -> Vec<f64> {
            let n: usize = a.shape.iter().product();
            data[a.offset * 8..(a.offset + n) * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect()
        };

        let reference = match &header.model {
            ModelSpec::TrunkBranch { arch, .. } => TBNet::init(arch, 0)?.components,
            ModelSpec::Fnn { spec } => FnnBaseline::init(spec, 0)?.components,
        };
        let mut components = reference;
        let mut k = 0;
        for c in &mut components {
            for (li, l) in c.layers.iter_mut().enumerate() {
                for (role, dst, shape) in [
                    ("weight", &mut l.weight, vec![l.fan_out, l.fan_in]),
                    ("bias", &mut l.bias, vec![l.fan_out]),
                ] {
                    let a = header
                        .arrays
                        .get(k)
                        .ok_or_else(|| ModelError::Corrupt("missing array".into()))?;
                    if a.component != c.name || a.layer != li || a.role != role || a.shape != shape {
                        return Err(ModelError::Shape(format!(
                            "{}[{}].{}",
                            a.component, a.layer, a.role
                        )));
                    }
                    if a.offset + dst.len() > total {
                        return Err(ModelError::Corrupt("array offset out of range".into()));
                    }
                    *dst = read(a);
                    k += 1;
                }
            }
        }
        if k != header.arrays.len() || header.freeze_mask.len() != k {
            return Err(ModelError::Corrupt("array count mismatch".into()));
        }
        let mut idx = 0;
        for c in &mut components {
            c.frozen = header.freeze_mask[idx];
            idx += 2 * c.layers.len();
        }
        Ok(Checkpoint {
            case_id: header.case_id,
            model: header.model,
            components,
            epoch: header.epoch,
            seed: header.seed,
        })
    }
}

fn check_shapes(reference: &[Component], got: &[Component]) -> Result<(), ModelError> {
    if reference.len() != got.len() {
        return Err(ModelError::Shape("component count".into()));
    }
    for (a, b) in reference.iter().zip(got) {
        if a.name != b.name || a.specs() != b.specs() || a.in_width() != b.in_width() {
            return Err(ModelError::Shape(b.name.clone()));
        }
    }
    Ok(())
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), ModelError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&ckpt.to_bytes())?;
    f.sync_all()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let bytes = fs::read(path)?;
    Checkpoint::from_bytes(&bytes)
}

impl TBNet {
    pub fn checkpoint(&self, case_id: &str, epoch: u64, seed: u64) -> Checkpoint {
        Checkpoint::from_tbnet(self, case_id, epoch, seed)
    }
}
