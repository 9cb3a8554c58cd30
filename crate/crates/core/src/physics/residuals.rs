//! Residual terms e1…e21, each LHS − RHS of its governing or boundary
//! equation in non-dimensional form.
//!
//! Slots 1–18 are the two-dimensional terms. The three-dimensional flow model
//! reuses 1–3 (continuity, x- and y-momentum) and adds 19 (z-momentum),
//! 20 (inlet w̃) and 21 (wall w̃).

use serde::{Deserialize, Serialize};

use super::Coefficients;
use crate::autodiff::{Jet2, Scalar};

pub const TERM_COUNT: usize = 21;

const X: usize = 0;
const Y: usize = 1;
const Z: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Pde,
    Inlet,
    Outlet,
    Wall,
    Data,
}

impl Group {
    pub const ALL: [Group; 5] = [Group::Pde, Group::Inlet, Group::Outlet, Group::Wall, Group::Data];

    pub fn name(self) -> &'static str {
        match self {
            Group::Pde => "pde",
            Group::Inlet => "inlet",
            Group::Outlet => "outlet",
            Group::Wall => "wall",
            Group::Data => "data",
        }
    }
}

/// A residual term, numbered 1…21.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Term(pub usize);

impl Term {
    pub fn all() -> impl Iterator<Item = Term> {
        (1..=TERM_COUNT).map(Term)
    }

    pub fn index(self) -> usize {
        self.0 - 1
    }

    pub fn group(self) -> Group {
        match self.0 {
            1..=5 | 19 => Group::Pde,
            6..=9 | 20 => Group::Inlet,
            10..=12 => Group::Outlet,
            13..=16 | 21 => Group::Wall,
            17 | 18 => Group::Data,
            n => panic!("no residual term {n}"),
        }
    }

    /// Output fields (and derivative order) the term reads.
    pub fn needs(self) -> &'static [(&'static str, u8)] {
        match self.0 {
            1 => &[("u", 1), ("v", 1)],
            2 | 3 => &[("u", 1), ("v", 1), ("p", 1)],
            4 => &[("u", 1), ("v", 1), ("hk", 2), ("ts", 0)],
            5 => &[("hk", 0), ("ts", 2)],
            6 | 14 => &[("v", 0)],
            7 | 13 => &[("u", 0)],
            8 => &[("ts", 1)],
            9 => &[("ts", 0), ("hk", 0)],
            10 => &[("p", 0)],
            11 | 15 => &[("ts", 1)],
            12 | 16 => &[("hk", 1)],
            17 => &[("hk", 0)],
            18 => &[("ts", 0)],
            19 => &[("u", 1), ("v", 1), ("w", 1), ("p", 1)],
            20 | 21 => &[("w", 0)],
            n => panic!("no residual term {n}"),
        }
    }

    /// Extra fields read by the term in a three-dimensional case.
    pub fn needs_3d(self) -> &'static [(&'static str, u8)] {
        match self.0 {
            1..=3 => &[("w", 1)],
            _ => &[],
        }
    }
}

/// Outputs at a batch of points (or one point), plus the coordinate and labels
/// some boundary terms read.
#[derive(Clone, Debug)]
pub struct PointFields<S> {
    pub u: Option<Jet2<S>>,
    pub v: Option<Jet2<S>>,
    pub w: Option<Jet2<S>>,
    pub p: Option<Jet2<S>>,
    pub hk: Option<Jet2<S>>,
    pub ts: Option<Jet2<S>>,
    /// Non-dimensional x̃, for the position-dependent heat flux.
    pub x: Option<S>,
    pub hk_data: Option<S>,
    pub ts_data: Option<S>,
}

impl<S> PointFields<S> {
    pub fn empty() -> Self {
        PointFields {
            u: None,
            v: None,
            w: None,
            p: None,
            hk: None,
            ts: None,
            x: None,
            hk_data: None,
            ts_data: None,
        }
    }

    pub fn set(&mut self, name: &str, jet: Jet2<S>) {
        match name {
            "u" => self.u = Some(jet),
            "v" => self.v = Some(jet),
            "w" => self.w = Some(jet),
            "p" => self.p = Some(jet),
            "hk" => self.hk = Some(jet),
            "ts" => self.ts = Some(jet),
            other => panic!("unknown field `{other}`"),
        }
    }
}

fn req<'a, S>(f: &'a Option<Jet2<S>>, name: &str) -> &'a Jet2<S> {
    f.as_ref()
        .unwrap_or_else(|| panic!("residual needs field `{name}`"))
}

/// Value of one residual term.
pub fn residual<S: Scalar>(term: Term, c: &Coefficients, f: &PointFields<S>) -> S {
    let three_d = c.dim == 3;
    match term.0 {
        1 => {
            let (u, v) = (req(&f.u, "u"), req(&f.v, "v"));
            let mut e = u.d(X) + v.d(Y);
            if three_d {
                e = e + req(&f.w, "w").d(Z);
            }
            e
        }
        2 | 3 | 19 => {
            let (u, v, p) = (req(&f.u, "u"), req(&f.v, "v"), req(&f.p, "p"));
            let w = if three_d { Some(req(&f.w, "w")) } else { None };
            let (q, axis) = match term.0 {
                2 => (u, X),
                3 => (v, Y),
                _ => (w.expect("z-momentum is three-dimensional"), Z),
            };
            // (q u)_x + (q v)_y [+ (q w)_z], expanded by the product rule
            let mut conv = q.d(X) * u.value.clone()
                + q.value.clone() * u.d(X)
                + q.d(Y) * v.value.clone()
                + q.value.clone() * v.d(Y);
            if let Some(w) = w {
                conv = conv + q.d(Z) * w.value.clone() + q.value.clone() * w.d(Z);
            }
            conv * c.inertia + p.d(axis) * c.pressure + q.value.clone() * c.drag
        }
        4 => {
            let (u, v, h, ts) = (req(&f.u, "u"), req(&f.v, "v"), req(&f.hk, "hk"), req(&f.ts, "ts"));
            let adv = u.d(X) * h.value.clone()
                + u.value.clone() * h.d(X)
                + v.d(Y) * h.value.clone()
                + v.value.clone() * h.d(Y);
            let lap = h.dd(X, X) + h.dd(Y, Y);
            adv * c.advection - lap * c.fluid_diffusion - (ts.value.clone() - h.value.clone()) * c.exchange
        }
        5 => {
            let (h, ts) = (req(&f.hk, "hk"), req(&f.ts, "ts"));
            let lap = ts.dd(X, X) + ts.dd(Y, Y);
            lap * c.solid_diffusion - (ts.value.clone() - h.value.clone()) * c.exchange
        }
        6 => req(&f.v, "v").value.clone() - 1.0,
        7 | 13 => req(&f.u, "u").value.clone(),
        8 => {
            let ts = req(&f.ts, "ts");
            ts.d(Y) * c.solid_flux - (ts.value.clone() - 1.0) * c.inlet_convection
        }
        9 => {
            let (ts, h) = (req(&f.ts, "ts"), req(&f.hk, "hk"));
            (ts.value.clone() - 1.0) * c.inlet_convection - (h.value.clone() - 1.0) * c.inlet_enthalpy
        }
        10 => req(&f.p, "p").value.clone() - 1.0,
        11 => {
            let ts = req(&f.ts, "ts");
            let x = f.x.clone().expect("outlet heat flux needs x̃");
            let q = match c.heat_flux {
                super::HeatFlux::Constant { value } => x * 0.0 + value,
                super::HeatFlux::Linear { intercept, slope } => x * slope + intercept,
            };
            ts.d(Y) * c.solid_flux - q
        }
        12 => req(&f.hk, "hk").d(Y),
        14 => req(&f.v, "v").value.clone(),
        15 => req(&f.ts, "ts").d(X),
        16 => {
            let h = req(&f.hk, "hk");
            if c.wall_hk_normal_grad {
                h.d(X)
            } else {
                h.d(Y)
            }
        }
        17 => req(&f.hk, "hk").value.clone() - f.hk_data.clone().expect("label for h̃_k"),
        18 => req(&f.ts, "ts").value.clone() - f.ts_data.clone().expect("label for T̃_s"),
        20 | 21 => req(&f.w, "w").value.clone(),
        n => panic!("no residual term {n}"),
    }
}

fn terms<S: Scalar, const N: usize>(ids: [usize; N], c: &Coefficients, f: &PointFields<S>) -> [S; N] {
    ids.map(|t| residual(Term(t), c, f))
}

/// (e1, e2, e3)
pub fn flow_residuals<S: Scalar>(c: &Coefficients, f: &PointFields<S>) -> [S; 3] {
    terms([1, 2, 3], c, f)
}

/// (e4, e5)
pub fn energy_residuals<S: Scalar>(c: &Coefficients, f: &PointFields<S>) -> [S; 2] {
    terms([4, 5], c, f)
}

/// (e6, e7, e8, e9)
pub fn inlet_residuals<S: Scalar>(c: &Coefficients, f: &PointFields<S>) -> [S; 4] {
    terms([6, 7, 8, 9], c, f)
}

/// (e10, e11, e12)
pub fn outlet_residuals<S: Scalar>(c: &Coefficients, f: &PointFields<S>) -> [S; 3] {
    terms([10, 11, 12], c, f)
}

/// (e13, e14, e15, e16)
pub fn wall_residuals<S: Scalar>(c: &Coefficients, f: &PointFields<S>) -> [S; 4] {
    terms([13, 14, 15, 16], c, f)
}

/// (e17, e18)
pub fn data_residuals<S: Scalar>(c: &Coefficients, f: &PointFields<S>) -> [S; 2] {
    terms([17, 18], c, f)
}

/// Continuity and the three momentum balances of the 3-D model.
pub fn flow3d_residuals<S: Scalar>(c: &Coefficients, f: &PointFields<S>) -> [S; 4] {
    assert_eq!(c.dim, 3, "three-dimensional coefficients required");
    terms([1, 2, 3, 19], c, f)
}
