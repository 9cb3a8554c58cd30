//! Structured-grid reference solver: steady porous flow by pressure
//! correction, LTNE energy by block-line Gauss-Seidel, and dataset I/O.

mod energy;
mod flow;
mod linalg;

use std::fs;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use energy::{energy_audit, interphase_totals, solve_energy_ltne, EnergyAudit};
pub use flow::{solve_flow, solve_flow_2d, solve_flow_3d};

use crate::physics::{PhysicalCase, PhysicsError};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("grid needs at least 3 nodes per axis, got {0:?}")]
    GridTooSmall(Vec<usize>),
    #[error("grid extent must be positive, got {0:?}")]
    BadExtent(Vec<f64>),
    #[error("grid dimension {grid} does not match case dimension {case}")]
    Dimension { grid: usize, case: usize },
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
    #[error("{solver} did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("dataset has no flow fields")]
    MissingFlow,
    #[error("malformed dataset: {0}")]
    Malformed(String),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Uniform vertex-centred grid on `[0, extent_d]` per axis. Axis 1 is the
/// injection direction; axes 0 and 2 end on walls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: Vec<usize>,
    pub extent: Vec<f64>,
    pub spacing: Vec<f64>,
}

impl Grid {
    pub fn new(n: &[usize], extent: &[f64]) -> Result<Self, OracleError> {
        if n.len() != extent.len() || !(2..=3).contains(&n.len()) || n.iter().any(|&k| k < 3) {
            return Err(OracleError::GridTooSmall(n.to_vec()));
        }
        if extent.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(OracleError::BadExtent(extent.to_vec()));
        }
        let spacing = n.iter().zip(extent).map(|(&k, &e)| e / (k - 1) as f64).collect();
        Ok(Grid {
            n: n.to_vec(),
            extent: extent.to_vec(),
            spacing,
        })
    }

    /// Grid over the physical box of `case`.
    pub fn for_case(case: &PhysicalCase, n: &[usize]) -> Result<Self, OracleError> {
        let mut extent = vec![case.width, case.height];
        if let Some(d) = case.depth {
            extent.push(d);
        }
        if extent.len() != n.len() {
            return Err(OracleError::Dimension {
                grid: n.len(),
                case: extent.len(),
            });
        }
        Grid::new(n, &extent)
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.n[..axis].iter().product()
    }

    /// Per-axis indices of a node.
    pub fn multi(&self, idx: usize) -> [usize; 3] {
        let mut m = [0; 3];
        let mut r = idx;
        for (d, &k) in self.n.iter().enumerate() {
            m[d] = r % k;
            r /= k;
        }
        m
    }

    pub fn index(&self, m: &[usize]) -> usize {
        m.iter().enumerate().map(|(d, &i)| i * self.stride(d)).sum()
    }

    /// Coordinate of a node in metres.
    pub fn coord(&self, idx: usize) -> Vec<f64> {
        let m = self.multi(idx);
        (0..self.dim()).map(|d| m[d] as f64 * self.spacing[d]).collect()
    }

    /// Control-volume width along `axis` at index `i` (half at the ends).
    pub fn cv(&self, axis: usize, i: usize) -> f64 {
        let h = self.spacing[axis];
        if i == 0 || i + 1 == self.n[axis] {
            h / 2.0
        } else {
            h
        }
    }

    pub fn volume(&self, idx: usize) -> f64 {
        let m = self.multi(idx);
        (0..self.dim()).map(|d| self.cv(d, m[d])).product()
    }

    /// Area of the control-volume face normal to `axis` at node `idx`.
    pub fn face_area(&self, axis: usize, idx: usize) -> f64 {
        let m = self.multi(idx);
        (0..self.dim()).filter(|&d| d != axis).map(|d| self.cv(d, m[d])).product()
    }

    pub fn is_inlet(&self, idx: usize) -> bool {
        self.multi(idx)[1] == 0
    }

    pub fn is_outlet(&self, idx: usize) -> bool {
        self.multi(idx)[1] + 1 == self.n[1]
    }

    /// On a side wall (x or z boundary), excluding the inlet row.
    pub fn is_wall(&self, idx: usize) -> bool {
        let m = self.multi(idx);
        m[1] > 0 && [0, 2].iter().any(|&d| d < self.dim() && (m[d] == 0 || m[d] + 1 == self.n[d]))
    }
}

/// Final residual norms of the solves that produced a dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverResiduals {
    /// Max continuity imbalance over pressure cells, relative to the inlet flux of one cell.
    pub continuity: f64,
    /// Max momentum residual relative to the Darcy drag of the inlet velocity.
    pub momentum: f64,
    pub flow_iterations: usize,
    /// Relative 2-norm residual of the energy system.
    pub energy: Option<f64>,
    pub energy_sweeps: Option<usize>,
}

/// Nodal fields in SI units, node `i + nx (j + ny k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceDataset {
    pub case_id: String,
    pub config_hash: String,
    pub grid: Grid,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Option<Vec<f64>>,
    pub p: Vec<f64>,
    pub t_s: Option<Vec<f64>>,
    pub t_f: Option<Vec<f64>>,
    pub residuals: SolverResiduals,
}

impl ReferenceDataset {
    pub fn field(&self, name: &str) -> Option<&[f64]> {
        match name {
            "u" => Some(&self.u),
            "v" => Some(&self.v),
            "w" => self.w.as_deref(),
            "p" => Some(&self.p),
            "Ts" | "ts" => self.t_s.as_deref(),
            "Tf" | "tf" => self.t_f.as_deref(),
            _ => None,
        }
    }

    pub fn has_energy(&self) -> bool {
        self.t_s.is_some() && self.t_f.is_some()
    }

    pub fn all_finite(&self) -> bool {
        let mut fields: Vec<&[f64]> = vec![&self.u, &self.v, &self.p];
        fields.extend(self.w.as_deref());
        fields.extend(self.t_s.as_deref());
        fields.extend(self.t_f.as_deref());
        fields.iter().all(|f| f.iter().all(|x| x.is_finite()))
    }

    /// Nodes on the outlet row, in index order.
    pub fn outlet_nodes(&self) -> Vec<usize> {
        (0..self.grid.len()).filter(|&i| self.grid.is_outlet(i)).collect()
    }
}

/// Hex SHA-256 of the case's JSON form.
pub fn config_hash(case: &PhysicalCase) -> String {
    let json = serde_json::to_string(case).expect("physical case serializes");
    Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Multiplies each value by `1 + δ`, `δ` uniform on `[−level, level]`.
pub fn add_noise(values: &[f64], level: f64, seed: u64) -> Vec<f64> {
    assert!(level >= 0.0 && level.is_finite(), "noise level must be non-negative");
    if level == 0.0 {
        return values.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-level, level);
    values.iter().map(|&x| x * (1.0 + dist.sample(&mut rng))).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    case_id: String,
    config_hash: String,
    grid: Grid,
    residuals: SolverResiduals,
}

/// `<stem>.json` next to the CSV.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn header(dim: usize) -> Vec<&'static str> {
    if dim == 3 {
        vec!["x", "y", "z", "u", "v", "w", "p", "Ts", "Tf"]
    } else {
        vec!["x", "y", "u", "v", "p", "Ts", "Tf"]
    }
}

/// Writes the CSV and its JSON sidecar. Absent temperature fields are empty cells.
pub fn export_dataset(ds: &ReferenceDataset, path: &Path) -> Result<(), OracleError> {
    let mut w = csv::Writer::from_path(path)?;
    let dim = ds.grid.dim();
    w.write_record(header(dim))?;
    let opt = |f: &Option<Vec<f64>>, i: usize| f.as_ref().map(|v| format!("{:e}", v[i])).unwrap_or_default();
    for i in 0..ds.grid.len() {
        let mut rec: Vec<String> = ds.grid.coord(i).iter().map(|c| format!("{c:e}")).collect();
        rec.push(format!("{:e}", ds.u[i]));
        rec.push(format!("{:e}", ds.v[i]));
        if dim == 3 {
            rec.push(opt(&ds.w, i));
        }
        rec.push(format!("{:e}", ds.p[i]));
        rec.push(opt(&ds.t_s, i));
        rec.push(opt(&ds.t_f, i));
        w.write_record(&rec)?;
    }
    w.flush()?;
    let side = Sidecar {
        case_id: ds.case_id.clone(),
        config_hash: ds.config_hash.clone(),
        grid: ds.grid.clone(),
        residuals: ds.residuals.clone(),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

pub fn import_dataset(path: &Path) -> Result<ReferenceDataset, OracleError> {
    let side: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let grid = Grid::new(&side.grid.n, &side.grid.extent)?;
    let dim = grid.dim();
    let mut r = csv::Reader::from_path(path)?;
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found != header(dim) {
        return Err(OracleError::Malformed(format!(
            "header {found:?}, expected {:?}",
            header(dim)
        )));
    }
    let ncol = found.len();
    let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(grid.len()); ncol];
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != ncol {
            return Err(OracleError::Malformed(format!("row {row} has {} cells", rec.len())));
        }
        for (c, cell) in rec.iter().enumerate() {
            let v = if cell.is_empty() {
                None
            } else {
                Some(cell.parse::<f64>().map_err(|e| OracleError::Malformed(format!("row {row}: {e}")))?)
            };
            cols[c].push(v);
        }
    }
    if cols[0].len() != grid.len() {
        return Err(OracleError::Malformed(format!(
            "{} rows for a grid of {} nodes",
            cols[0].len(),
            grid.len()
        )));
    }
    let required = |c: usize| -> Result<Vec<f64>, OracleError> {
        cols[c]
            .iter()
            .map(|v| v.ok_or_else(|| OracleError::Malformed(format!("empty `{}` cell", found[c]))))
            .collect()
    };
    let optional = |c: usize| -> Result<Option<Vec<f64>>, OracleError> {
        if cols[c].iter().all(Option::is_none) {
            Ok(None)
        } else {
            required(c).map(Some)
        }
    };
    let off = dim;
    let (u, v) = (required(off)?, required(off + 1)?);
    let (w, p_col) = if dim == 3 { (optional(off + 2)?, off + 3) } else { (None, off + 2) };
    Ok(ReferenceDataset {
        case_id: side.case_id,
        config_hash: side.config_hash,
        grid,
        u,
        v,
        w,
        p: required(p_col)?,
        t_s: optional(p_col + 1)?,
        t_f: optional(p_col + 2)?,
        residuals: side.residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_geometry() {
        let g = Grid::new(&[5, 3], &[0.1, 0.02]).unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g.multi(7), [2, 1, 0]);
        assert_eq!(g.index(&[2, 1]), 7);
        assert!((g.volume(0) - 0.025 * 0.01 / 4.0).abs() < 1e-18);
        let total: f64 = (0..g.len()).map(|i| g.volume(i)).sum();
        assert!((total - 0.1 * 0.02).abs() < 1e-15);
        assert!(g.is_inlet(3) && g.is_outlet(12) && g.is_wall(5) && !g.is_wall(0));
        assert!(Grid::new(&[2, 5], &[1.0, 1.0]).is_err());
        assert!(Grid::new(&[3, 5], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn noise_level_zero_is_identity() {
        let x = vec![1.0, -2.5, 3e5];
        assert_eq!(add_noise(&x, 0.0, 9), x);
    }

    #[test]
    fn noise_is_bounded_and_seeded() {
        let x: Vec<f64> = (1..500).map(|i| i as f64).collect();
        let a = add_noise(&x, 0.01, 1);
        let b = add_noise(&x, 0.01, 2);
        assert_ne!(a, b);
        assert_eq!(a, add_noise(&x, 0.01, 1));
        for n in [&a, &b] {
            assert!(n.iter().zip(&x).all(|(y, x)| ((y - x) / x).abs() <= 0.01 + 1e-15));
        }
    }
}
