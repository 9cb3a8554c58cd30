//! Steady Darcy flow with inertia on a collocated vertex grid: upwind
//! momentum, momentum-interpolated face velocities and a SIMPLE pressure
//! correction solved by conjugate gradients.
//!
//! Every non-inlet node carries a momentum balance. Side-wall no-slip is
//! written into the nodal values after convergence: the model has no viscous
//! term through which a wall could act on the interior.

use super::linalg::pcg;
use super::{config_hash, Grid, OracleError, ReferenceDataset, SolverResiduals};
use crate::physics::PhysicalCase;

const MAX_OUTER: usize = 200;
const MOMENTUM_SWEEPS: usize = 2;

struct Setup<'a> {
    grid: &'a Grid,
    dim: usize,
    m: Vec<[usize; 3]>,
    vol: Vec<f64>,
    /// `area[d][P]`: area of the face normal to `d` through node `P`.
    area: Vec<Vec<f64>>,
    stride: Vec<usize>,
    inlet: Vec<bool>,
    /// Pressure is an unknown (every row but the outlet).
    p_free: Vec<bool>,
}

impl<'a> Setup<'a> {
    fn new(grid: &'a Grid) -> Self {
        let n = grid.len();
        let dim = grid.dim();
        let m: Vec<[usize; 3]> = (0..n).map(|i| grid.multi(i)).collect();
        Setup {
            grid,
            dim,
            vol: (0..n).map(|i| grid.volume(i)).collect(),
            area: (0..dim).map(|d| (0..n).map(|i| grid.face_area(d, i)).collect()).collect(),
            stride: (0..dim).map(|d| grid.stride(d)).collect(),
            inlet: m.iter().map(|m| m[1] == 0).collect(),
            p_free: m.iter().map(|m| m[1] + 1 < grid.n[1]).collect(),
            m,
        }
    }

    fn has_hi(&self, d: usize, i: usize) -> bool {
        self.m[i][d] + 1 < self.grid.n[d]
    }

    /// Nodal gradient along `d`: central inside, one-sided on the boundary.
    fn grad(&self, f: &[f64], d: usize, i: usize) -> f64 {
        let (s, h, k, last) = (self.stride[d], self.grid.spacing[d], self.m[i][d], self.grid.n[d] - 1);
        if k == 0 {
            (f[i + s] - f[i]) / h
        } else if k == last {
            (f[i] - f[i - s]) / h
        } else {
            (f[i + s] - f[i - s]) / (2.0 * h)
        }
    }
}

/// Solves continuity and momentum for `case` on `grid` until both normalized
/// max-norm residuals are below `tol`.
pub fn solve_flow(case: &PhysicalCase, grid: &Grid, tol: f64) -> Result<ReferenceDataset, OracleError> {
    case.validate()?;
    if grid.dim() != case.dim {
        return Err(OracleError::Dimension {
            grid: grid.dim(),
            case: case.dim,
        });
    }
    if !(tol > 0.0) {
        return Err(OracleError::Tolerance(tol));
    }
    let s = Setup::new(grid);
    let (n, dim) = (grid.len(), s.dim);
    let big_v = case.velocity();
    let drag = case.fluid.mu(case.t_ref) / case.porous.permeability;
    let rho_e = case.fluid.rho / case.porous.eps;
    let p_out = case.boundary.outlet_pressure;

    let mut p = vec![p_out; n];
    let mut vel: Vec<Vec<f64>> = (0..dim).map(|c| vec![if c == 1 { big_v } else { 0.0 }; n]).collect();
    let mut uf: Vec<Vec<f64>> = (0..dim).map(|d| vec![if d == 1 { big_v } else { 0.0 }; n]).collect();
    let mut a_p = vec![0.0; n];
    // coef_hi[d][P]: weight of P+s_d in P's equation; coef_lo[d][P]: weight of P in (P+s_d)'s.
    let mut coef_hi = vec![vec![0.0; n]; dim];
    let mut coef_lo = vec![vec![0.0; n]; dim];
    let mut dface = vec![vec![0.0; n]; dim];
    let mut big_d = vec![0.0; n];
    let mut imbalance = vec![0.0; n];
    let mut residuals = SolverResiduals::default();
    let flux_scale = big_v * (0..n).map(|i| s.area[1][i]).fold(0.0, f64::max);

    let mut converged = false;
    for outer in 0..MAX_OUTER {
        // Upwind convection coefficients from the current face velocities.
        for i in 0..n {
            a_p[i] = drag * s.vol[i];
        }
        for d in 0..dim {
            for i in 0..n {
                if !s.has_hi(d, i) {
                    continue;
                }
                let f = rho_e * uf[d][i] * s.area[d][i];
                coef_hi[d][i] = (-f).max(0.0);
                coef_lo[d][i] = f.max(0.0);
                a_p[i] += f.max(0.0);
                a_p[i + s.stride[d]] += (-f).max(0.0);
            }
        }
        for i in 0..n {
            if !s.p_free[i] {
                a_p[i] += (rho_e * vel[1][i] * s.area[1][i]).max(0.0);
            }
        }
        let neighbours = |vel: &[f64], i: usize| -> f64 {
            let mut acc = 0.0;
            for d in 0..dim {
                let st = s.stride[d];
                if s.m[i][d] > 0 {
                    acc += coef_lo[d][i - st] * vel[i - st];
                }
                if s.has_hi(d, i) {
                    acc += coef_hi[d][i] * vel[i + st];
                }
            }
            acc
        };

        let mut mom_res: f64 = 0.0;
        for c in 0..dim {
            for i in 0..n {
                if s.inlet[i] {
                    continue;
                }
                let r = a_p[i] * vel[c][i] - neighbours(&vel[c], i) + s.vol[i] * s.grad(&p, c, i);
                mom_res = mom_res.max(r.abs() / (drag * big_v * s.vol[i]));
            }
        }
        for i in 0..n {
            big_d[i] = if s.inlet[i] { 0.0 } else { s.vol[i] / a_p[i] };
        }
        face_velocities(&s, &vel, &p, &big_d, &mut uf, &mut dface);
        let cont_res = continuity(&s, &uf, big_v, &mut imbalance) / flux_scale;
        residuals = SolverResiduals {
            continuity: cont_res,
            momentum: mom_res,
            flow_iterations: outer,
            energy: None,
            energy_sweeps: None,
        };
        if mom_res < tol && cont_res < tol {
            converged = true;
            break;
        }

        for _ in 0..MOMENTUM_SWEEPS {
            for c in 0..dim {
                for i in 0..n {
                    if s.inlet[i] {
                        continue;
                    }
                    vel[c][i] = (neighbours(&vel[c], i) - s.vol[i] * s.grad(&p, c, i)) / a_p[i];
                }
            }
        }
        face_velocities(&s, &vel, &p, &big_d, &mut uf, &mut dface);
        continuity(&s, &uf, big_v, &mut imbalance);

        // Pressure correction: Σ k_f (p'_P − p'_nb) = −imbalance_P.
        let mut diag = vec![0.0; n];
        let mut kf = vec![vec![0.0; n]; dim];
        for d in 0..dim {
            for i in 0..n {
                if !s.has_hi(d, i) {
                    continue;
                }
                let k = s.area[d][i] * dface[d][i] / grid.spacing[d];
                kf[d][i] = k;
                let e = i + s.stride[d];
                if s.p_free[i] {
                    diag[i] += k;
                }
                if s.p_free[e] {
                    diag[e] += k;
                }
            }
        }
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                y[i] = if s.p_free[i] { diag[i] * x[i] } else { 0.0 };
            }
            for d in 0..dim {
                let st = s.stride[d];
                for i in 0..n {
                    if !s.has_hi(d, i) {
                        continue;
                    }
                    let e = i + st;
                    if s.p_free[i] && s.p_free[e] {
                        y[i] -= kf[d][i] * x[e];
                        y[e] -= kf[d][i] * x[i];
                    }
                }
            }
        };
        let rhs: Vec<f64> = (0..n).map(|i| if s.p_free[i] { -imbalance[i] } else { 0.0 }).collect();
        let mut pc = vec![0.0; n];
        let (iters, rel) = pcg(apply, &diag, &rhs, &mut pc, 1e-11, 20 * n);
        if rel > 1e-8 {
            return Err(OracleError::NotConverged {
                solver: "pressure correction",
                iterations: iters,
                residual: rel,
            });
        }
        for i in 0..n {
            p[i] += pc[i];
        }
        for c in 0..dim {
            for i in 0..n {
                if !s.inlet[i] {
                    vel[c][i] -= big_d[i] * s.grad(&pc, c, i);
                }
            }
        }
        for d in 0..dim {
            for i in 0..n {
                if s.has_hi(d, i) {
                    uf[d][i] -= dface[d][i] * (pc[i + s.stride[d]] - pc[i]) / grid.spacing[d];
                }
            }
        }
    }
    if !converged {
        return Err(OracleError::NotConverged {
            solver: "flow",
            iterations: MAX_OUTER,
            residual: residuals.momentum.max(residuals.continuity),
        });
    }

    for i in 0..n {
        if s.inlet[i] {
            for (c, f) in vel.iter_mut().enumerate() {
                f[i] = if c == 1 { big_v } else { 0.0 };
            }
        } else if grid.is_wall(i) {
            for f in vel.iter_mut() {
                f[i] = 0.0;
            }
        }
        if !s.p_free[i] {
            p[i] = p_out;
        }
    }
    let mut vel = vel.into_iter();
    let u = vel.next().expect("x velocity");
    let v = vel.next().expect("y velocity");
    let w = vel.next();
    Ok(ReferenceDataset {
        case_id: String::new(),
        config_hash: config_hash(case),
        grid: grid.clone(),
        u,
        v,
        w,
        p,
        t_s: None,
        t_f: None,
        residuals,
    })
}

/// Momentum-interpolated face velocities `avg(u + D∇p) − d_f Δp/h`.
fn face_velocities(
    s: &Setup,
    vel: &[Vec<f64>],
    p: &[f64],
    big_d: &[f64],
    uf: &mut [Vec<f64>],
    dface: &mut [Vec<f64>],
) {
    let n = s.grid.len();
    for d in 0..s.dim {
        let (st, h) = (s.stride[d], s.grid.spacing[d]);
        for i in 0..n {
            if !s.has_hi(d, i) {
                continue;
            }
            let e = i + st;
            let df = 0.5 * (big_d[i] + big_d[e]);
            let hat = |k: usize| vel[d][k] + big_d[k] * s.grad(p, d, k);
            uf[d][i] = 0.5 * (hat(i) + hat(e)) - df * (p[e] - p[i]) / h;
            dface[d][i] = df;
        }
    }
}

/// Net outward volume flux of every pressure cell; returns the max magnitude.
fn continuity(s: &Setup, uf: &[Vec<f64>], big_v: f64, imbalance: &mut [f64]) -> f64 {
    let n = s.grid.len();
    imbalance.iter_mut().for_each(|b| *b = 0.0);
    for i in 0..n {
        if s.inlet[i] {
            imbalance[i] -= big_v * s.area[1][i];
        }
    }
    for d in 0..s.dim {
        for i in 0..n {
            if !s.has_hi(d, i) {
                continue;
            }
            let flux = uf[d][i] * s.area[d][i];
            imbalance[i] += flux;
            imbalance[i + s.stride[d]] -= flux;
        }
    }
    (0..n)
        .filter(|&i| s.p_free[i])
        .map(|i| imbalance[i].abs())
        .fold(0.0, f64::max)
}

pub fn solve_flow_2d(case: &PhysicalCase, grid: &Grid, tol: f64) -> Result<ReferenceDataset, OracleError> {
    if case.dim != 2 {
        return Err(OracleError::Dimension { grid: 2, case: case.dim });
    }
    solve_flow(case, grid, tol)
}

pub fn solve_flow_3d(case: &PhysicalCase, grid: &Grid, tol: f64) -> Result<ReferenceDataset, OracleError> {
    if case.dim != 3 {
        return Err(OracleError::Dimension { grid: 3, case: case.dim });
    }
    solve_flow(case, grid, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::HeatFlux;

    fn case_b() -> PhysicalCase {
        PhysicalCase::channel_2d(0.5, HeatFlux::Constant { value: 5e4 })
    }

    #[test]
    fn coarse_channel_is_linear_darcy() {
        let case = case_b();
        let grid = Grid::for_case(&case, &[21, 26]).unwrap();
        let ds = solve_flow_2d(&case, &grid, 1e-9).unwrap();
        let dp = case.darcy_drop();
        for i in 0..grid.len() {
            let y = grid.coord(i)[1];
            let exact = case.boundary.outlet_pressure + dp * (1.0 - y / case.height);
            assert!((ds.p[i] - exact).abs() < 1e-6 * dp, "node {i}: {} vs {exact}", ds.p[i]);
            if !grid.is_wall(i) {
                assert!((ds.v[i] / case.velocity() - 1.0).abs() < 1e-6);
            }
        }
        assert!(ds.residuals.continuity < 1e-9 && ds.residuals.momentum < 1e-9);
    }

    #[test]
    fn boundary_values_exact() {
        let case = case_b();
        let grid = Grid::for_case(&case, &[11, 13]).unwrap();
        let ds = solve_flow_2d(&case, &grid, 1e-9).unwrap();
        for i in 0..grid.len() {
            if grid.is_inlet(i) {
                assert_eq!(ds.v[i], case.velocity());
                assert_eq!(ds.u[i], 0.0);
            }
            if grid.is_outlet(i) {
                assert_eq!(ds.p[i], 1e5);
            }
            if grid.is_wall(i) {
                assert_eq!((ds.u[i], ds.v[i]), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn rejects_wrong_dimension_and_tolerance() {
        let case = case_b();
        let grid = Grid::new(&[5, 5, 5], &[0.1, 0.02, 0.02]).unwrap();
        assert!(solve_flow(&case, &grid, 1e-8).is_err());
        let grid = Grid::for_case(&case, &[5, 5]).unwrap();
        assert!(solve_flow(&case, &grid, 0.0).is_err());
        assert!(solve_flow_3d(&case, &grid, 1e-8).is_err());
    }
}
