//! Second-order jets over the spatial inputs.
//!
//! A [`Jet2`] carries a value, its gradient with respect to the (at most three)
//! network inputs and the upper triangle of the Hessian. The scalar type is
//! generic so the same residual code runs on plain `f64` points and on tape
//! variables holding whole collocation batches.

use std::ops::{Add, Mul, Neg, Sub};

use super::Scalar;

/// Index of the `(i, j)` entry of a packed upper-triangular `dim × dim` matrix.
#[inline]
pub fn tri_index(i: usize, j: usize, dim: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * dim - i * i.saturating_sub(1) / 2 + (j - i)
}

/// Number of packed Hessian entries for an input dimension.
#[inline]
pub const fn tri_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Value, gradient and packed Hessian of a field with respect to the inputs.
///
/// `d2` is empty when only first derivatives were propagated.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet2<S = f64> {
    pub value: S,
    pub d1: Vec<S>,
    pub d2: Vec<S>,
}

impl<S: Scalar> Jet2<S> {
    pub fn dim(&self) -> usize {
        self.d1.len()
    }

    pub fn has_second(&self) -> bool {
        !self.d2.is_empty()
    }

    /// `∂f/∂x_i`
    pub fn d(&self, i: usize) -> S {
        self.d1[i].clone()
    }

    /// `∂²f/∂x_i∂x_j`; panics if the jet was propagated to first order only.
    pub fn dd(&self, i: usize, j: usize) -> S {
        assert!(self.has_second(), "jet carries no second derivatives");
        self.d2[tri_index(i, j, self.dim())].clone()
    }

    /// Applies a scalar function given its value and first two derivatives at
    /// `self.value`.
    pub fn chain(&self, f: S, f1: S, f2: S) -> Self {
        let dim = self.dim();
        let d1 = self.d1.iter().map(|a| f1.clone() * a.clone()).collect();
        let d2 = if self.has_second() {
            let mut out = Vec::with_capacity(tri_len(dim));
            for i in 0..dim {
                for j in i..dim {
                    let k = tri_index(i, j, dim);
                    out.push(
                        f2.clone() * (self.d1[i].clone() * self.d1[j].clone())
                            + f1.clone() * self.d2[k].clone(),
                    );
                }
            }
            out
        } else {
            Vec::new()
        };
        Jet2 { value: f, d1, d2 }
    }

    pub fn sin(&self) -> Self {
        let s = self.value.sin();
        let c = self.value.cos();
        self.chain(s.clone(), c, -s)
    }

    pub fn cos(&self) -> Self {
        let s = self.value.sin();
        let c = self.value.cos();
        self.chain(c.clone(), -s, -c)
    }

    pub fn tanh(&self) -> Self {
        let t = self.value.tanh();
        let sech2 = -(t.clone() * t.clone()) + 1.0;
        let f2 = t.clone() * sech2.clone() * -2.0;
        self.chain(t, sech2, f2)
    }

    pub fn square(&self) -> Self {
        self.clone() * self.clone()
    }

    pub fn recip(&self) -> Self {
        let r = self.value.recip();
        let r2 = r.clone() * r.clone();
        let f2 = r2.clone() * r.clone() * 2.0;
        self.chain(r, -r2, f2)
    }

    pub fn scale(&self, c: f64) -> Self {
        Jet2 {
            value: self.value.clone() * c,
            d1: self.d1.iter().map(|a| a.clone() * c).collect(),
            d2: self.d2.iter().map(|a| a.clone() * c).collect(),
        }
    }

    pub fn add_const(&self, c: f64) -> Self {
        Jet2 {
            value: self.value.clone() + c,
            d1: self.d1.clone(),
            d2: self.d2.clone(),
        }
    }
}

impl Jet2<f64> {
    /// The `i`-th input coordinate as a jet: unit gradient, zero Hessian.
    pub fn variable(value: f64, i: usize, dim: usize) -> Self {
        let mut d1 = vec![0.0; dim];
        d1[i] = 1.0;
        Jet2 {
            value,
            d1,
            d2: vec![0.0; tri_len(dim)],
        }
    }

    pub fn constant(value: f64, dim: usize) -> Self {
        Jet2 {
            value,
            d1: vec![0.0; dim],
            d2: vec![0.0; tri_len(dim)],
        }
    }

    /// Full symmetric Hessian, expanded from the packed triangle.
    pub fn hessian(&self) -> Vec<Vec<f64>> {
        let dim = self.dim();
        (0..dim)
            .map(|i| (0..dim).map(|j| self.dd(i, j)).collect())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.d1.iter().all(|x| x.is_finite())
            && self.d2.iter().all(|x| x.is_finite())
    }
}

fn zip_with<S: Scalar>(a: &[S], b: &[S], f: impl Fn(S, S) -> S) -> Vec<S> {
    assert_eq!(a.len(), b.len(), "jet shape mismatch");
    a.iter().zip(b).map(|(x, y)| f(x.clone(), y.clone())).collect()
}

impl<S: Scalar> Add for Jet2<S> {
    type Output = Jet2<S>;
    fn add(self, rhs: Self) -> Self {
        Jet2 {
            value: self.value + rhs.value,
            d1: zip_with(&self.d1, &rhs.d1, |a, b| a + b),
            d2: zip_with(&self.d2, &rhs.d2, |a, b| a + b),
        }
    }
}

impl<S: Scalar> Sub for Jet2<S> {
    type Output = Jet2<S>;
    fn sub(self, rhs: Self) -> Self {
        Jet2 {
            value: self.value - rhs.value,
            d1: zip_with(&self.d1, &rhs.d1, |a, b| a - b),
            d2: zip_with(&self.d2, &rhs.d2, |a, b| a - b),
        }
    }
}

impl<S: Scalar> Neg for Jet2<S> {
    type Output = Jet2<S>;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl<S: Scalar> Mul for Jet2<S> {
    type Output = Jet2<S>;
    fn mul(self, rhs: Self) -> Self {
        let dim = self.dim();
        assert_eq!(dim, rhs.dim(), "jet shape mismatch");
        let d1 = (0..dim)
            .map(|i| {
                self.d1[i].clone() * rhs.value.clone() + self.value.clone() * rhs.d1[i].clone()
            })
            .collect();
        let d2 = if self.has_second() && rhs.has_second() {
            let mut out = Vec::with_capacity(tri_len(dim));
            for i in 0..dim {
                for j in i..dim {
                    let k = tri_index(i, j, dim);
                    out.push(
                        self.d2[k].clone() * rhs.value.clone()
                            + self.d1[i].clone() * rhs.d1[j].clone()
                            + self.d1[j].clone() * rhs.d1[i].clone()
                            + self.value.clone() * rhs.d2[k].clone(),
                    );
                }
            }
            out
        } else {
            Vec::new()
        };
        Jet2 {
            value: self.value * rhs.value,
            d1,
            d2,
        }
    }
}

impl<S: Scalar> Mul<f64> for Jet2<S> {
    type Output = Jet2<S>;
    fn mul(self, rhs: f64) -> Self {
        self.scale(rhs)
    }
}

impl<S: Scalar> Add<f64> for Jet2<S> {
    type Output = Jet2<S>;
    fn add(self, rhs: f64) -> Self {
        self.add_const(rhs)
    }
}
