//! Material correlations, characteristic scales and the residual terms.

mod residuals;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use residuals::{
    data_residuals, energy_residuals, flow3d_residuals, flow_residuals, inlet_residuals,
    outlet_residuals, residual, wall_residuals, Group, PointFields, Term, TERM_COUNT,
};

#[derive(Debug, Error, PartialEq)]
pub enum PhysicsError {
    #[error("particle diameter must be positive, got {0}")]
    ParticleDiameter(f64),
    #[error("reference temperature {0} K is at or below the viscosity-law pole")]
    BelowPole(f64),
    #[error("invalid physical parameter: {0}")]
    Invalid(String),
}

/// `a · 10^(b / (T − c))`, the form of both water-property laws.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpLaw {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ExpLaw {
    pub fn eval(&self, t: f64) -> f64 {
        self.a * 10f64.powf(self.b / (t - self.c))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidProps {
    pub rho: f64,
    pub c_pf: f64,
    pub k_f: f64,
    pub mu_law: ExpLaw,
    pub pr_law: ExpLaw,
}

impl FluidProps {
    /// Liquid water.
    pub fn water() -> Self {
        FluidProps {
            rho: 960.0,
            c_pf: 4217.0,
            k_f: 0.68,
            mu_law: ExpLaw {
                a: 2.41e-5,
                b: 247.8,
                c: 140.0,
            },
            pr_law: ExpLaw {
                a: 0.149,
                b: 247.8,
                c: 140.0,
            },
        }
    }

    pub fn mu(&self, t: f64) -> f64 {
        self.mu_law.eval(t)
    }

    pub fn pr(&self, t: f64) -> f64 {
        self.pr_law.eval(t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PorousProps {
    pub c_ps: f64,
    pub k_s: f64,
    pub eps: f64,
    pub d_p: f64,
    pub permeability: f64,
    /// Specific surface area override; `6(1−ε)/d_p` when absent.
    #[serde(default)]
    pub alpha_sf: Option<f64>,
}

impl PorousProps {
    /// Sintered particle bed used throughout the reference cases.
    pub fn sintered() -> Self {
        PorousProps {
            c_ps: 4000.0,
            k_s: 30.0,
            eps: 0.3,
            d_p: 1e-4,
            permeability: 3.67e-12,
            alpha_sf: None,
        }
    }

    pub fn alpha_sf(&self) -> f64 {
        self.alpha_sf.unwrap_or(6.0 * (1.0 - self.eps) / self.d_p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharScales {
    pub velocity: f64,
    pub length: f64,
    pub pressure: f64,
    pub temperature: f64,
    pub heat_capacity: f64,
}

impl CharScales {
    /// `T · C_P`, the characteristic kinetic enthalpy.
    pub fn enthalpy(&self) -> f64 {
        self.temperature * self.heat_capacity
    }
}

/// Outlet heat flux in W/m² as a function of the non-dimensional `x̃`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeatFlux {
    Constant { value: f64 },
    /// `intercept + slope · x̃`
    Linear { intercept: f64, slope: f64 },
}

impl HeatFlux {
    pub fn at(&self, x: f64) -> f64 {
        match *self {
            HeatFlux::Constant { value } => value,
            HeatFlux::Linear { intercept, slope } => intercept + slope * x,
        }
    }

    /// `(1.5 − x̃)·10⁵`
    pub fn decreasing_linear() -> Self {
        HeatFlux::Linear {
            intercept: 1.5e5,
            slope: -1e5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WallKind {
    #[default]
    NoSlipAdiabatic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub mass_flux: f64,
    pub inlet_temperature: f64,
    pub outlet_pressure: f64,
    pub heat_flux: HeatFlux,
    #[serde(default)]
    pub wall: WallKind,
}

/// Everything physical about one case: geometry, materials, boundary data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalCase {
    pub dim: usize,
    /// Extent along x (m).
    pub width: f64,
    /// Extent along y, the injection direction (m).
    pub height: f64,
    /// Extent along z (m), 3-D only.
    #[serde(default)]
    pub depth: Option<f64>,
    /// Characteristic length (m).
    pub length: f64,
    pub fluid: FluidProps,
    pub porous: PorousProps,
    pub boundary: BoundarySpec,
    /// Temperature at which viscosity and Prandtl number are frozen (K).
    pub t_ref: f64,
    /// Length scale inside the inlet Reynolds number (m).
    pub re_i_length: f64,
    /// Use ∂h̃_k/∂x̃ instead of ∂h̃_k/∂ỹ in the wall term.
    #[serde(default)]
    pub wall_hk_normal_grad: bool,
}

impl PhysicalCase {
    /// 0.1 m × 0.02 m channel with the tabulated water and particle bed.
    pub fn channel_2d(mass_flux: f64, heat_flux: HeatFlux) -> Self {
        PhysicalCase {
            dim: 2,
            width: 0.1,
            height: 0.02,
            depth: None,
            length: 0.1,
            fluid: FluidProps::water(),
            porous: PorousProps::sintered(),
            boundary: BoundarySpec {
                mass_flux,
                inlet_temperature: 300.0,
                outlet_pressure: 1e5,
                heat_flux,
                wall: WallKind::NoSlipAdiabatic,
            },
            t_ref: 300.0,
            re_i_length: 0.02,
            wall_hk_normal_grad: false,
        }
    }

    /// 0.02 m cube, injected along y.
    pub fn cube_3d(mass_flux: f64) -> Self {
        PhysicalCase {
            dim: 3,
            width: 0.02,
            height: 0.02,
            depth: Some(0.02),
            length: 0.02,
            ..Self::channel_2d(mass_flux, HeatFlux::Constant { value: 0.0 })
        }
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        let positive = [
            ("width", self.width),
            ("height", self.height),
            ("length", self.length),
            ("rho", self.fluid.rho),
            ("c_pf", self.fluid.c_pf),
            ("k_f", self.fluid.k_f),
            ("c_ps", self.porous.c_ps),
            ("k_s", self.porous.k_s),
            ("permeability", self.porous.permeability),
            ("mass_flux", self.boundary.mass_flux),
            ("inlet_temperature", self.boundary.inlet_temperature),
            ("outlet_pressure", self.boundary.outlet_pressure),
            ("re_i_length", self.re_i_length),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PhysicsError::Invalid(format!("{name} = {v}")));
            }
        }
        if self.porous.d_p <= 0.0 {
            return Err(PhysicsError::ParticleDiameter(self.porous.d_p));
        }
        if !(self.porous.eps > 0.0 && self.porous.eps < 1.0) {
            return Err(PhysicsError::Invalid(format!("porosity {}", self.porous.eps)));
        }
        if self.porous.alpha_sf() <= 0.0 {
            return Err(PhysicsError::Invalid("alpha_sf".into()));
        }
        if self.t_ref <= self.fluid.mu_law.c {
            return Err(PhysicsError::BelowPole(self.t_ref));
        }
        match (self.dim, self.depth) {
            (2, None) => {}
            (3, Some(d)) if d > 0.0 => {}
            _ => return Err(PhysicsError::Invalid("dimension/depth mismatch".into())),
        }
        for x in [0.0, 0.5, 1.0] {
            if !self.boundary.heat_flux.at(x).is_finite() {
                return Err(PhysicsError::Invalid("heat flux not finite".into()));
            }
        }
        Ok(())
    }

    pub fn scales(&self) -> CharScales {
        CharScales {
            velocity: self.boundary.mass_flux / self.fluid.rho,
            length: self.length,
            pressure: self.boundary.outlet_pressure,
            temperature: self.boundary.inlet_temperature,
            heat_capacity: self.fluid.c_pf,
        }
    }

    /// Non-dimensional box `[0, w/L] × [0, h/L] (× [0, d/L])`.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let l = self.length;
        let mut b = vec![(0.0, self.width / l), (0.0, self.height / l)];
        if let Some(d) = self.depth {
            b.push((0.0, d / l));
        }
        b
    }

    pub fn velocity(&self) -> f64 {
        self.boundary.mass_flux / self.fluid.rho
    }

    /// One-dimensional Darcy pressure rise from outlet to inlet (Pa).
    pub fn darcy_drop(&self) -> f64 {
        self.fluid.mu(self.t_ref) * self.velocity() * self.height / self.porous.permeability
    }

    pub fn h_sf(&self) -> Result<f64, PhysicsError> {
        h_sf(&self.fluid, &self.porous, self.boundary.mass_flux, self.t_ref)
    }

    pub fn h_i(&self) -> f64 {
        let t = self.boundary.inlet_temperature;
        let re = self.boundary.mass_flux * self.re_i_length / self.fluid.mu(t);
        h_i(self.fluid.pr(t), re)
    }

    pub fn coefficients(&self) -> Result<Coefficients, PhysicsError> {
        self.validate()?;
        let s = self.scales();
        let (v, l, p, t, tc) = (s.velocity, s.length, s.pressure, s.temperature, s.enthalpy());
        let f = &self.fluid;
        let m = &self.porous;
        let mu = f.mu(self.t_ref);
        Ok(Coefficients {
            dim: self.dim,
            inertia: f.rho / m.eps * v * v / l,
            pressure: p / l,
            drag: mu / m.permeability * v,
            advection: f.rho * v * tc / l,
            fluid_diffusion: m.eps * f.k_f / f.c_pf * tc / (l * l),
            exchange: self.h_sf()? * m.alpha_sf() * t,
            solid_diffusion: (1.0 - m.eps) * m.k_s * t / (l * l),
            solid_flux: (1.0 - m.eps) * m.k_s * t / l,
            inlet_convection: self.h_i() * t,
            inlet_enthalpy: f.rho * v * tc,
            heat_flux: self.boundary.heat_flux,
            wall_hk_normal_grad: self.wall_hk_normal_grad,
        })
    }

    pub fn nondim(&self, q: &Primary) -> Nondim {
        let s = self.scales();
        Nondim {
            u: q.u / s.velocity,
            v: q.v / s.velocity,
            w: q.w / s.velocity,
            p: q.p / s.pressure,
            hk: self.fluid.c_pf * q.t_f / s.enthalpy(),
            ts: q.t_s / s.temperature,
        }
    }

    pub fn redim(&self, q: &Nondim) -> Primary {
        let s = self.scales();
        Primary {
            u: q.u * s.velocity,
            v: q.v * s.velocity,
            w: q.w * s.velocity,
            p: q.p * s.pressure,
            t_f: q.hk * s.enthalpy() / self.fluid.c_pf,
            t_s: q.ts * s.temperature,
        }
    }

    /// `T_f = h̃_k · T · C_P / c_pf`
    pub fn fluid_temperature(&self, hk: f64) -> f64 {
        hk * self.scales().enthalpy() / self.fluid.c_pf
    }
}

/// Primary variables in SI units.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Primary {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub p: f64,
    pub t_s: f64,
    pub t_f: f64,
}

/// Non-dimensional primary variables.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Nondim {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub p: f64,
    pub hk: f64,
    pub ts: f64,
}

/// Dimensional prefactors of every residual term for one case.
#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients {
    pub dim: usize,
    /// ρ/ε · V²/L
    pub inertia: f64,
    /// P/L
    pub pressure: f64,
    /// μ/K · V
    pub drag: f64,
    /// ρ · V·T·C_P / L
    pub advection: f64,
    /// ε k_f / c_pf · T·C_P / L²
    pub fluid_diffusion: f64,
    /// h_sf α_sf T
    pub exchange: f64,
    /// (1−ε) k_s T / L²
    pub solid_diffusion: f64,
    /// (1−ε) k_s T / L
    pub solid_flux: f64,
    /// h_i T
    pub inlet_convection: f64,
    /// ρ V T C_P
    pub inlet_enthalpy: f64,
    pub heat_flux: HeatFlux,
    pub wall_hk_normal_grad: bool,
}

/// Interphase convection coefficient, `k_f(2 + 1.1 Pr^0.33 Re^0.6)/d_p` with
/// the particle Reynolds number `ṁ d_p / μ(T_ref)`.
pub fn h_sf(
    fluid: &FluidProps,
    porous: &PorousProps,
    mass_flux: f64,
    t_ref: f64,
) -> Result<f64, PhysicsError> {
    if porous.d_p <= 0.0 {
        return Err(PhysicsError::ParticleDiameter(porous.d_p));
    }
    if t_ref <= fluid.mu_law.c {
        return Err(PhysicsError::BelowPole(t_ref));
    }
    let re = mass_flux * porous.d_p / fluid.mu(t_ref);
    let pr = fluid.pr(t_ref);
    Ok(fluid.k_f * (2.0 + 1.1 * pr.powf(0.33) * re.powf(0.6)) / porous.d_p)
}

/// Inlet convection coefficient `0.664 Pr^{1/3} Re^{1/2}`.
pub fn h_i(pr_i: f64, re_i: f64) -> f64 {
    0.664 * pr_i.cbrt() * re_i.sqrt()
}
