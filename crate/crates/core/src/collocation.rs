//! Latin hypercube interior points and stratified boundary points.

use std::io::Write;

use rand::distributions::{Distribution, Open01};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CollocationError {
    #[error("point count must be at least 1")]
    Empty,
    #[error("facet {0:?} does not exist in {1} dimensions")]
    Facet(Facet, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Interior,
    Inlet,
    Outlet,
    Wall,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Interior => "interior",
            Role::Inlet => "inlet",
            Role::Outlet => "outlet",
            Role::Wall => "wall",
        }
    }
}

/// A face of the non-dimensional box. Flow enters through `y = min` and
/// leaves through `y = max`; every other face is a wall.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Facet {
    Inlet,
    Outlet,
    XMin,
    XMax,
    ZMin,
    ZMax,
}

impl Facet {
    pub fn role(self) -> Role {
        match self {
            Facet::Inlet => Role::Inlet,
            Facet::Outlet => Role::Outlet,
            _ => Role::Wall,
        }
    }

    /// (fixed axis, at upper bound)
    fn fixed(self) -> (usize, bool) {
        match self {
            Facet::Inlet => (1, false),
            Facet::Outlet => (1, true),
            Facet::XMin => (0, false),
            Facet::XMax => (0, true),
            Facet::ZMin => (2, false),
            Facet::ZMax => (2, true),
        }
    }

    pub fn walls(dim: usize) -> &'static [Facet] {
        if dim == 3 {
            &[Facet::XMin, Facet::XMax, Facet::ZMin, Facet::ZMax]
        } else {
            &[Facet::XMin, Facet::XMax]
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// Uniform random offset inside each stratum.
    #[default]
    Random,
    /// Stratum centres, for reproducible debugging.
    Midpoint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    pub role: Role,
    pub dim: usize,
    /// Row-major `len × dim`.
    pub coords: Vec<f64>,
    pub seed: u64,
}

impl PointSet {
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.coords.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// Column `axis` of every point.
    pub fn axis(&self, axis: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.coords[i * self.dim + axis]).collect()
    }

    pub fn concat(role: Role, sets: &[PointSet]) -> PointSet {
        let dim = sets.first().map(|s| s.dim).unwrap_or(0);
        PointSet {
            role,
            dim,
            coords: sets.iter().flat_map(|s| s.coords.iter().copied()).collect(),
            seed: sets.first().map(|s| s.seed).unwrap_or(0),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["role", "x", "y"];
        if self.dim == 3 {
            header.push("z");
        }
        out.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.role.name().to_string()];
            row.extend(self.point(i).iter().map(|v| format!("{v:e}")));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// One sample per stratum and dimension: `n` rows of `bounds.len()` values
/// strictly inside the open box.
fn lhs_unit(n: usize, dims: usize, rng: &mut impl Rng, placement: Placement) -> Vec<Vec<f64>> {
    let mut cols = Vec::with_capacity(dims);
    for _ in 0..dims {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        let col = perm
            .into_iter()
            .map(|k| {
                let off = match placement {
                    Placement::Random => Open01.sample(rng),
                    Placement::Midpoint => 0.5,
                };
                let t: f64 = (k as f64 + off) / n as f64;
                if t <= 0.0 || t >= 1.0 {
                    (k as f64 + 0.5) / n as f64
                } else {
                    t
                }
            })
            .collect();
        cols.push(col);
    }
    cols
}

pub fn lhs_interior(n: usize, bounds: &[(f64, f64)], seed: u64) -> Result<PointSet, CollocationError> {
    lhs_interior_with(n, bounds, seed, Placement::Random)
}

pub fn lhs_interior_with(
    n: usize,
    bounds: &[(f64, f64)],
    seed: u64,
    placement: Placement,
) -> Result<PointSet, CollocationError> {
    if n == 0 {
        return Err(CollocationError::Empty);
    }
    let dim = bounds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = lhs_unit(n, dim, &mut rng, placement);
    let mut coords = Vec::with_capacity(n * dim);
    for i in 0..n {
        for (d, &(lo, hi)) in bounds.iter().enumerate() {
            coords.push(lo + cols[d][i] * (hi - lo));
        }
    }
    Ok(PointSet {
        role: Role::Interior,
        dim,
        coords,
        seed,
    })
}

pub fn boundary_points(
    facet: Facet,
    n: usize,
    bounds: &[(f64, f64)],
    seed: u64,
) -> Result<PointSet, CollocationError> {
    boundary_points_with(facet, n, bounds, seed, Placement::Random)
}

pub fn boundary_points_with(
    facet: Facet,
    n: usize,
    bounds: &[(f64, f64)],
    seed: u64,
    placement: Placement,
) -> Result<PointSet, CollocationError> {
    let dim = bounds.len();
    let (axis, upper) = facet.fixed();
    if axis >= dim {
        return Err(CollocationError::Facet(facet, dim));
    }
    if n == 0 {
        return Err(CollocationError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let free: Vec<usize> = (0..dim).filter(|&d| d != axis).collect();
    let cols = lhs_unit(n, free.len(), &mut rng, placement);
    let fixed = if upper { bounds[axis].1 } else { bounds[axis].0 };
    let mut coords = vec![0.0; n * dim];
    for i in 0..n {
        coords[i * dim + axis] = fixed;
        for (k, &d) in free.iter().enumerate() {
            let (lo, hi) = bounds[d];
            coords[i * dim + d] = lo + cols[k][i] * (hi - lo);
        }
    }
    Ok(PointSet {
        role: facet.role(),
        dim,
        coords,
        seed,
    })
}

/// Number of points of `values` falling in each of `n` equal strata of
/// `[lo, hi]`.
pub fn stratum_counts(values: &[f64], lo: f64, hi: f64, n: usize) -> Vec<usize> {
    let mut counts = vec![0; n];
    for &v in values {
        let k = (((v - lo) / (hi - lo)) * n as f64).floor() as isize;
        let k = k.clamp(0, n as isize - 1) as usize;
        counts[k] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    const BOX: [(f64, f64); 2] = [(0.0, 1.0), (0.0, 0.2)];

    #[test]
    fn single_point_inside() {
        let s = lhs_interior(1, &BOX, 3).unwrap();
        let p = s.point(0);
        assert!(p[0] > 0.0 && p[0] < 1.0 && p[1] > 0.0 && p[1] < 0.2);
    }

    #[test]
    fn zero_points_rejected() {
        assert_eq!(lhs_interior(0, &BOX, 1), Err(CollocationError::Empty));
    }

    #[test]
    fn four_points_one_per_stratum() {
        let s = lhs_interior(4, &[(0.0, 1.0), (0.0, 1.0)], 9).unwrap();
        assert_eq!(stratum_counts(&s.axis(0), 0.0, 1.0, 4), vec![1; 4]);
        assert_eq!(stratum_counts(&s.axis(1), 0.0, 1.0, 4), vec![1; 4]);
    }

    #[test]
    fn inlet_is_exact() {
        let s = boundary_points(Facet::Inlet, 400, &BOX, 5).unwrap();
        assert!(s.axis(1).iter().all(|&y| y == 0.0));
        let w = boundary_points(Facet::XMax, 100, &BOX, 5).unwrap();
        assert!(w.axis(0).iter().all(|&x| x == 1.0));
        assert_eq!(w.role, Role::Wall);
    }

    #[test]
    fn z_facets_need_three_dimensions() {
        assert!(boundary_points(Facet::ZMin, 10, &BOX, 1).is_err());
    }

    #[test]
    fn midpoint_mode_is_centred() {
        let s = lhs_interior_with(5, &[(0.0, 1.0)], 2, Placement::Midpoint).unwrap();
        let mut xs = s.axis(0);
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(xs, vec![0.1, 0.3, 0.5, 0.7, 0.9]);
    }

    #[test]
    fn csv_header() {
        let s = boundary_points(Facet::Outlet, 2, &BOX, 1).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("role,x,y\noutlet,"));
    }
}
