//! Derivative engine: input jets for the PDE residuals and a batched reverse
//! tape for parameter gradients.

mod check;
mod jet;
mod tape;

use std::ops::{Add, Mul, Neg, Sub};

pub use check::{fd_check, FdReport};
pub use jet::{tri_index, tri_len, Jet2};
pub use tape::{Activation, Gradients, Layout, Tape, TapeError, Var};

/// Arithmetic needed by jets and residual code.
///
/// Implemented by `f64` (single points) and by tape variables (whole batches).
pub trait Scalar:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn tanh(&self) -> Self;
    fn recip(&self) -> Self;
}

impl Scalar for f64 {
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn tanh(&self) -> Self {
        f64::tanh(*self)
    }
    fn recip(&self) -> Self {
        1.0 / *self
    }
}

/// `|a - b| / max(|a|, |b|, 1e-3)`: relative deviation with an absolute floor
/// so quantities that vanish do not blow the ratio up.
pub fn rel_dev(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        return 0.0;
    }
    d / a.abs().max(b.abs()).max(1e-3)
}
