//! LTNE energy balance on a solved flow field. Solid and fluid temperatures
//! are coupled node-wise and swept line by line along the injection axis with
//! a 2×2 block tridiagonal solve.
//!
//! Fluid advection is written as `Σ ṁ_f (T_face − T_P)`, central where the
//! face Péclet number is below 2 and upwind otherwise, so a uniform
//! temperature is an exact discrete solution. Side walls are adiabatic for
//! both phases.

use super::linalg::{block_thomas, Mat2};
use super::{OracleError, ReferenceDataset};
use crate::physics::PhysicalCase;

const MAX_SWEEPS: usize = 50_000;

/// One node's pair of equations: `diag·x_P − Σ_k nb[k]∘x_{nb k} = rhs`, with
/// neighbour slot `2d` below and `2d + 1` above along axis `d`.
#[derive(Clone, Copy, Default)]
struct NodeEq {
    diag: Mat2,
    nb: [[f64; 2]; 6],
    rhs: [f64; 2],
}

/// Control-volume energy balance of the whole domain, in W (per metre of
/// depth in 2-D).
///
/// The control volume excludes the inlet row of fluid nodes, whose
/// temperature is fixed by the inlet enthalpy condition. `inlet_loss` is
/// what leaves through that row: solid convection to the inlet stream, solid
/// to fluid exchange inside the inlet cells, and fluid conduction and
/// advection across the first face row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyAudit {
    pub heat_in: f64,
    pub enthalpy_out: f64,
    pub inlet_loss: f64,
}

impl EnergyAudit {
    /// `|heat_in − enthalpy_out − inlet_loss| / heat_in`
    pub fn relative_gap(&self) -> f64 {
        (self.heat_in - self.enthalpy_out - self.inlet_loss).abs() / self.heat_in.abs()
    }

    /// `|heat_in − enthalpy_out| / heat_in`, ignoring the inlet row.
    pub fn outlet_only_gap(&self) -> f64 {
        (self.heat_in - self.enthalpy_out).abs() / self.heat_in.abs()
    }
}

struct Props {
    ks: f64,
    kf: f64,
    rc: f64,
    hx: f64,
    h_i: f64,
    t_in: f64,
}

impl Props {
    fn of(case: &PhysicalCase) -> Result<Self, OracleError> {
        let por = &case.porous;
        let fl = &case.fluid;
        Ok(Props {
            ks: (1.0 - por.eps) * por.k_s,
            kf: por.eps * fl.k_f,
            rc: fl.rho * fl.c_pf,
            hx: case.h_sf()? * por.alpha_sf(),
            h_i: case.h_i(),
            t_in: case.boundary.inlet_temperature,
        })
    }
}

/// Advective face temperature weight on the neighbour: ½ (central) where the
/// face Péclet number is below 2, otherwise 1 for inflow and 0 for outflow.
fn neighbour_weight(mf_out: f64, kd: f64) -> f64 {
    if mf_out.abs() < 2.0 * kd {
        0.5
    } else if mf_out < 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Velocities with side-wall nodes replaced by their nearest interior node, so
/// face fluxes next to a wall carry the Darcy flow rather than the imposed
/// nodal no-slip value.
fn effective_velocity(ds: &ReferenceDataset) -> Vec<Vec<f64>> {
    let g = &ds.grid;
    let mut fields = vec![ds.u.clone(), ds.v.clone()];
    if let Some(w) = &ds.w {
        fields.push(w.clone());
    }
    let src: Vec<usize> = (0..g.len())
        .map(|i| {
            if !g.is_wall(i) {
                return i;
            }
            let mut m = g.multi(i);
            for d in [0, 2] {
                if d < g.dim() {
                    m[d] = m[d].clamp(1, g.n[d] - 2);
                }
            }
            g.index(&m[..g.dim()])
        })
        .collect();
    fields.iter().map(|f| src.iter().map(|&k| f[k]).collect()).collect()
}

fn assemble(case: &PhysicalCase, ds: &ReferenceDataset) -> Result<Vec<NodeEq>, OracleError> {
    let g = &ds.grid;
    let (n, dim) = (g.len(), g.dim());
    let Props { ks, kf, rc, hx, h_i, t_in } = Props::of(case)?;
    let beta = h_i / (case.boundary.mass_flux * case.fluid.c_pf);
    let vel = effective_velocity(ds);
    let stride: Vec<usize> = (0..dim).map(|d| g.stride(d)).collect();

    let mut eqs = vec![NodeEq::default(); n];
    for (i, eq) in eqs.iter_mut().enumerate() {
        let m = g.multi(i);
        let vol = g.volume(i);
        let inlet = m[1] == 0;
        // Solid.
        eq.diag[0][0] += hx * vol;
        eq.diag[0][1] -= hx * vol;
        // Fluid, or the inlet enthalpy balance.
        if inlet {
            eq.diag[1] = [-beta, 1.0];
            eq.rhs[1] = t_in * (1.0 - beta);
        } else {
            eq.diag[1][1] += hx * vol;
            eq.diag[1][0] -= hx * vol;
        }
        for d in 0..dim {
            let (h, a) = (g.spacing[d], g.face_area(d, i));
            for side in 0..2 {
                let exists = if side == 0 { m[d] > 0 } else { m[d] + 1 < g.n[d] };
                if !exists {
                    continue;
                }
                let nbi = if side == 0 { i - stride[d] } else { i + stride[d] };
                let slot = 2 * d + side;
                let k = ks * a / h;
                eq.diag[0][0] += k;
                eq.nb[slot][0] += k;
                if inlet {
                    continue;
                }
                let kd = kf * a / h;
                let uf = 0.5 * (vel[d][i] + vel[d][nbi]);
                let out = if side == 0 { -uf } else { uf };
                let mf = rc * out * a;
                let c = kd - neighbour_weight(mf, kd) * mf;
                eq.diag[1][1] += c;
                eq.nb[slot][1] += c;
            }
        }
        let a1 = g.face_area(1, i);
        if inlet {
            eq.diag[0][0] += h_i * a1;
            eq.rhs[0] += h_i * a1 * t_in;
        }
        if m[1] + 1 == g.n[1] {
            let x_nd = g.coord(i)[0] / case.length;
            eq.rhs[0] += case.boundary.heat_flux.at(x_nd) * a1;
        }
    }
    Ok(eqs)
}

fn neighbour(g: &super::Grid, i: usize, slot: usize) -> Option<usize> {
    let (d, side) = (slot / 2, slot % 2);
    let m = g.multi(i);
    let s = g.stride(d);
    match side {
        0 if m[d] > 0 => Some(i - s),
        1 if m[d] + 1 < g.n[d] => Some(i + s),
        _ => None,
    }
}

/// Max over nodes and phases of the diagonal-scaled residual, relative to the
/// inlet temperature.
fn scaled_residual(g: &super::Grid, eqs: &[NodeEq], ts: &[f64], tf: &[f64], t_ref: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, eq) in eqs.iter().enumerate() {
        let x = [ts[i], tf[i]];
        let mut r = [
            eq.rhs[0] - eq.diag[0][0] * x[0] - eq.diag[0][1] * x[1],
            eq.rhs[1] - eq.diag[1][0] * x[0] - eq.diag[1][1] * x[1],
        ];
        for slot in 0..2 * g.dim() {
            if let Some(k) = neighbour(g, i, slot) {
                r[0] += eq.nb[slot][0] * ts[k];
                r[1] += eq.nb[slot][1] * tf[k];
            }
        }
        worst = worst.max((r[0] / eq.diag[0][0]).abs()).max((r[1] / eq.diag[1][1]).abs());
    }
    worst / t_ref
}

/// Adds `T_s` and `T_f` to a flow dataset, sweeping until the scaled residual
/// is below `tol`.
pub fn solve_energy_ltne(
    case: &PhysicalCase,
    flow: &ReferenceDataset,
    tol: f64,
) -> Result<ReferenceDataset, OracleError> {
    case.validate()?;
    if !(tol > 0.0) {
        return Err(OracleError::Tolerance(tol));
    }
    if flow.u.is_empty() || flow.v.len() != flow.grid.len() || flow.p.len() != flow.grid.len() {
        return Err(OracleError::MissingFlow);
    }
    let g = &flow.grid;
    if g.dim() != case.dim {
        return Err(OracleError::Dimension {
            grid: g.dim(),
            case: case.dim,
        });
    }
    let eqs = assemble(case, flow)?;
    let n = g.len();
    let t_in = case.boundary.inlet_temperature;
    let mut ts = vec![t_in; n];
    let mut tf = vec![t_in; n];
    let ny = g.n[1];
    let s1 = g.stride(1);
    let line_starts: Vec<usize> = (0..n).filter(|&i| g.multi(i)[1] == 0).collect();
    let lateral: Vec<usize> = (0..2 * g.dim()).filter(|&s| s / 2 != 1).collect();

    let mut lower = vec![[0.0; 2]; ny];
    let mut upper = vec![[0.0; 2]; ny];
    let mut diag = vec![[[0.0; 2]; 2]; ny];
    let mut rhs = vec![[0.0; 2]; ny];
    let mut residual = scaled_residual(g, &eqs, &ts, &tf, t_in);
    let mut sweeps = 0;
    while residual >= tol {
        if sweeps == MAX_SWEEPS {
            return Err(OracleError::NotConverged {
                solver: "energy",
                iterations: sweeps,
                residual,
            });
        }
        for &start in &line_starts {
            for j in 0..ny {
                let i = start + j * s1;
                let eq = &eqs[i];
                diag[j] = eq.diag;
                lower[j] = [-eq.nb[2][0], -eq.nb[2][1]];
                upper[j] = [-eq.nb[3][0], -eq.nb[3][1]];
                let mut r = eq.rhs;
                for &slot in &lateral {
                    if let Some(k) = neighbour(g, i, slot) {
                        r[0] += eq.nb[slot][0] * ts[k];
                        r[1] += eq.nb[slot][1] * tf[k];
                    }
                }
                rhs[j] = r;
            }
            let x = block_thomas(&lower, &diag, &upper, &rhs);
            for (j, xj) in x.iter().enumerate() {
                let i = start + j * s1;
                ts[i] = xj[0];
                tf[i] = xj[1];
            }
        }
        sweeps += 1;
        residual = scaled_residual(g, &eqs, &ts, &tf, t_in);
    }
    let mut out = flow.clone();
    out.t_s = Some(ts);
    out.t_f = Some(tf);
    out.residuals.energy = Some(residual);
    out.residuals.energy_sweeps = Some(sweeps);
    Ok(out)
}

/// Domain energy balance of a solved dataset; see [`EnergyAudit`].
pub fn energy_audit(case: &PhysicalCase, ds: &ReferenceDataset) -> Result<EnergyAudit, OracleError> {
    let (ts, tf) = match (&ds.t_s, &ds.t_f) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(OracleError::MissingFlow),
    };
    let pr = Props::of(case)?;
    let g = &ds.grid;
    let vel = effective_velocity(ds);
    let (s1, h) = (g.stride(1), g.spacing[1]);
    let mut audit = EnergyAudit {
        heat_in: 0.0,
        enthalpy_out: 0.0,
        inlet_loss: 0.0,
    };
    for i in 0..g.len() {
        let a = g.face_area(1, i);
        if g.is_outlet(i) {
            audit.heat_in += case.boundary.heat_flux.at(g.coord(i)[0] / case.length) * a;
            audit.enthalpy_out += pr.rc * vel[1][i] * a * (tf[i] - pr.t_in);
        }
        if g.is_inlet(i) {
            let k = i + s1;
            let kd = pr.kf * a / h;
            let mf = pr.rc * 0.5 * (vel[1][i] + vel[1][k]) * a;
            // Seen from the cell above, the face flux is inflow.
            let wk = 1.0 - neighbour_weight(-mf, kd);
            let t_face = wk * tf[k] + (1.0 - wk) * tf[i];
            audit.inlet_loss += pr.h_i * a * (ts[i] - pr.t_in)
                + pr.hx * g.volume(i) * (ts[i] - tf[i])
                + kd * (tf[k] - tf[i])
                - mf * (t_face - pr.t_in);
        }
    }
    Ok(audit)
}

/// Volume integrals of the interphase term as the fluid source and the solid
/// sink, in W.
pub fn interphase_totals(case: &PhysicalCase, ds: &ReferenceDataset) -> Result<(f64, f64), OracleError> {
    let (ts, tf) = match (&ds.t_s, &ds.t_f) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(OracleError::MissingFlow),
    };
    let hx = case.h_sf()? * case.porous.alpha_sf();
    let g = &ds.grid;
    let mut source = 0.0;
    let mut sink = 0.0;
    for i in 0..g.len() {
        let q = hx * g.volume(i) * (ts[i] - tf[i]);
        source += q;
        sink -= q;
    }
    Ok((source, sink))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{solve_flow_2d, Grid};
    use crate::physics::HeatFlux;

    fn solved(q: f64, n: [usize; 2]) -> (PhysicalCase, ReferenceDataset) {
        let case = PhysicalCase::channel_2d(0.5, HeatFlux::Constant { value: q });
        let grid = Grid::for_case(&case, &n).unwrap();
        let flow = solve_flow_2d(&case, &grid, 1e-9).unwrap();
        let ds = solve_energy_ltne(&case, &flow, 1e-13).unwrap();
        (case, ds)
    }

    #[test]
    fn isothermal_fixed_point() {
        let (_, ds) = solved(0.0, [11, 21]);
        for t in ds.t_s.iter().chain(&ds.t_f).flatten() {
            assert!((t - 300.0).abs() < 1e-9, "{t}");
        }
    }

    #[test]
    fn coarse_energy_audit_and_sign() {
        let (case, ds) = solved(5e4, [21, 101]);
        let audit = energy_audit(&case, &ds).unwrap();
        assert!(audit.relative_gap() < 1e-6, "{audit:?}");
        // The inlet row drains a tenth of the input through fluid conduction.
        assert!(audit.outlet_only_gap() > 0.05, "{audit:?}");
        let (src, sink) = interphase_totals(&case, &ds).unwrap();
        assert!((src + sink).abs() <= 1e-8 * src.abs());
        let (ts, tf) = (ds.t_s.unwrap(), ds.t_f.unwrap());
        let outlet_tf = tf[tf.len() - 1];
        assert!(outlet_tf > 310.0 && outlet_tf < 340.0, "{outlet_tf}");
        for (k, (s, f)) in ts.iter().zip(&tf).enumerate() {
            if !ds.grid.is_inlet(k) {
                assert!(s >= f, "node {k}: {s} < {f}");
            }
        }
    }
}
