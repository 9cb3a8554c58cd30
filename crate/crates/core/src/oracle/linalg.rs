//! Jacobi-preconditioned conjugate gradients and a 2×2 block tridiagonal
//! solver.

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` for symmetric positive definite `A` given as a
/// matrix-vector product. Starts from `x`; returns the iteration count and
/// the final relative residual.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iter: usize,
) -> (usize, f64) {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return (0, 0.0);
    }
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let precond = |r: &[f64], z: &mut [f64]| {
        for i in 0..n {
            z[i] = if diag[i] > 0.0 { r[i] / diag[i] } else { 0.0 };
        }
    };
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    let mut it = 0;
    while rel > rtol && it < max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
        rel = dot(&r, &r).sqrt() / bnorm;
    }
    (it, rel)
}

pub type Mat2 = [[f64; 2]; 2];

fn inv2(m: &Mat2) -> Mat2 {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
}

fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn mulv(a: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

/// Solves `lower[j] x[j−1] + diag[j] x[j] + upper[j] x[j+1] = rhs[j]` where
/// the off-diagonal blocks are diagonal matrices stored as pairs.
pub fn block_thomas(lower: &[[f64; 2]], diag: &[Mat2], upper: &[[f64; 2]], rhs: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = diag.len();
    let mut c_star: Vec<Mat2> = Vec::with_capacity(n);
    let mut d_star: Vec<[f64; 2]> = Vec::with_capacity(n);
    for j in 0..n {
        let mut m = diag[j];
        let mut r = rhs[j];
        if j > 0 {
            let a = lower[j];
            let c = &c_star[j - 1];
            for i in 0..2 {
                for k in 0..2 {
                    m[i][k] -= a[i] * c[i][k];
                }
                r[i] -= a[i] * d_star[j - 1][i];
            }
        }
        let mi = inv2(&m);
        let up: Mat2 = [[upper[j][0], 0.0], [0.0, upper[j][1]]];
        c_star.push(mul2(&mi, &up));
        d_star.push(mulv(&mi, r));
    }
    let mut x = vec![[0.0; 2]; n];
    x[n - 1] = d_star[n - 1];
    for j in (0..n - 1).rev() {
        let cx = mulv(&c_star[j], x[j + 1]);
        x[j] = [d_star[j][0] - cx[0], d_star[j][1] - cx[1]];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcg_solves_1d_laplacian() {
        let n = 50;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 2.0 * x[i] - l - r;
            }
        };
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        let (_, rel) = pcg(apply, &vec![2.0; n], &b, &mut x, 1e-12, 1000);
        assert!(rel <= 1e-12);
        // x_i = (i+1)(n−i)/2
        for (i, xi) in x.iter().enumerate() {
            let exact = ((i + 1) * (n - i)) as f64 / 2.0;
            assert!((xi - exact).abs() < 1e-8 * exact);
        }
    }

    #[test]
    fn block_thomas_matches_dense() {
        let n = 6;
        let lower: Vec<[f64; 2]> = (0..n).map(|j| [-1.0 - 0.1 * j as f64, -0.5]).collect();
        let upper: Vec<[f64; 2]> = (0..n).map(|j| [-0.7, -1.0 + 0.05 * j as f64]).collect();
        let diag: Vec<Mat2> = (0..n).map(|j| [[4.0 + j as f64, -0.3], [-0.2, 3.0]]).collect();
        let x_true: Vec<[f64; 2]> = (0..n).map(|j| [j as f64 - 2.0, 1.0 / (j as f64 + 1.0)]).collect();
        let rhs: Vec<[f64; 2]> = (0..n)
            .map(|j| {
                let mut r = mulv(&diag[j], x_true[j]);
                for i in 0..2 {
                    if j > 0 {
                        r[i] += lower[j][i] * x_true[j - 1][i];
                    }
                    if j + 1 < n {
                        r[i] += upper[j][i] * x_true[j + 1][i];
                    }
                }
                r
            })
            .collect();
        let x = block_thomas(&lower, &diag, &upper, &rhs);
        for (a, b) in x.iter().zip(&x_true) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }
}
