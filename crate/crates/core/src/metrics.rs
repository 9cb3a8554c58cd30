//! Evaluation statistics: error norms, regression quality, kernel density of
//! (exact, predicted) pairs and relative-error histograms.

use std::fmt;
use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} predictions vs {1} exact values")]
    Length(usize, usize),
    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("exact values have zero norm")]
    ZeroNorm,
    #[error("exact value is zero at index {0}")]
    ZeroExact(usize),
    #[error("zero variance")]
    ZeroVariance,
    #[error("degenerate point cloud")]
    Degenerate,
    #[error("bin edges must be strictly increasing with at least two entries")]
    BadEdges,
    #[error("cannot sample {requested} of {available} nodes")]
    TooManySamples { requested: usize, available: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub relative_l2: f64,
    pub max_relative: f64,
    pub rmse: f64,
    pub mape: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub r: f64,
    pub r2: f64,
    pub adj_r2: f64,
}

fn check_lengths(pred: &[f64], exact: &[f64], need: usize) -> Result<(), MetricsError> {
    if pred.len() != exact.len() {
        return Err(MetricsError::Length(pred.len(), exact.len()));
    }
    if exact.len() < need {
        return Err(MetricsError::TooFew {
            need,
            got: exact.len(),
        });
    }
    Ok(())
}

/// Relative L2, max relative, RMSE and MAPE (as a fraction).
pub fn error_metrics(pred: &[f64], exact: &[f64]) -> Result<ErrorMetrics, MetricsError> {
    check_lengths(pred, exact, 1)?;
    let n = exact.len() as f64;
    let (mut sq, mut norm, mut max_rel, mut abs_rel) = (0.0, 0.0, 0.0f64, 0.0);
    for (i, (&p, &e)) in pred.iter().zip(exact).enumerate() {
        if e == 0.0 {
            return Err(MetricsError::ZeroExact(i));
        }
        let d = p - e;
        sq += d * d;
        norm += e * e;
        let rel = d.abs() / e.abs();
        max_rel = max_rel.max(rel);
        abs_rel += rel;
    }
    if norm == 0.0 {
        return Err(MetricsError::ZeroNorm);
    }
    Ok(ErrorMetrics {
        relative_l2: (sq / norm).sqrt(),
        max_relative: max_rel,
        rmse: (sq / n).sqrt(),
        mape: abs_rel / n,
    })
}

/// `‖pred − exact‖₂ / ‖exact‖₂` alone; zeros in `exact` are allowed.
pub fn relative_l2(pred: &[f64], exact: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(pred, exact, 1)?;
    let (mut sq, mut norm) = (0.0, 0.0);
    for (&p, &e) in pred.iter().zip(exact) {
        sq += (p - e) * (p - e);
        norm += e * e;
    }
    if norm == 0.0 {
        return Err(MetricsError::ZeroNorm);
    }
    Ok((sq / norm).sqrt())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Pearson `r`, `R² = 1 − SS_res/SS_tot` and adjusted `R²` with one predictor.
pub fn regression_metrics(pred: &[f64], exact: &[f64]) -> Result<RegressionMetrics, MetricsError> {
    check_lengths(pred, exact, 3)?;
    let n = exact.len() as f64;
    let (mp, me) = (mean(pred), mean(exact));
    let (mut sxy, mut sxx, mut syy, mut ss_res) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &e) in pred.iter().zip(exact) {
        let (dp, de) = (p - mp, e - me);
        sxy += dp * de;
        sxx += dp * dp;
        syy += de * de;
        ss_res += (e - p) * (e - p);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let r2 = 1.0 - ss_res / syy;
    Ok(RegressionMetrics {
        r,
        r2,
        adj_r2: 1.0 - (1.0 - r2) * (n - 1.0) / (n - 2.0),
    })
}

/// Where a report's samples come from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Slice {
    Full,
    /// Nodes on the line `x̃ = value`.
    Line { value: f64 },
    /// Nodes on the plane `x̃_axis = value`.
    Plane { axis: usize, value: f64 },
}

impl fmt::Display for Slice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slice::Full => write!(f, "full"),
            Slice::Line { value } => write!(f, "x={value}"),
            Slice::Plane { axis, value } => write!(f, "{}={value}", ["x", "y", "z"][*axis]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableMetrics {
    pub variable: String,
    pub slice: Slice,
    pub n: usize,
    pub error: ErrorMetrics,
    /// Absent where the exact field is constant on the slice, to within
    /// `CONSTANT_SPREAD` of its magnitude.
    pub regression: Option<RegressionMetrics>,
}

/// Relative standard deviation below which an exact field counts as constant
/// for regression purposes.
pub const CONSTANT_SPREAD: f64 = 1e-9;

fn is_constant(x: &[f64]) -> bool {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = x.iter().map(|v| v * v).sum::<f64>() / n;
    var <= CONSTANT_SPREAD * CONSTANT_SPREAD * scale
}

impl VariableMetrics {
    pub fn compute(variable: &str, slice: Slice, pred: &[f64], exact: &[f64]) -> Result<Self, MetricsError> {
        let error = error_metrics(pred, exact)?;
        if is_constant(exact) {
            return Ok(VariableMetrics {
                variable: variable.to_string(),
                slice,
                n: exact.len(),
                error,
                regression: None,
            });
        }
        Ok(VariableMetrics {
            variable: variable.to_string(),
            slice,
            n: exact.len(),
            error,
            regression: match regression_metrics(pred, exact) {
                Ok(r) => Some(r),
                Err(MetricsError::ZeroVariance) | Err(MetricsError::TooFew { .. }) => None,
                Err(e) => return Err(e),
            },
        })
    }
}

/// Per-variable, per-slice metrics of one evaluation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub case_id: String,
    pub rows: Vec<VariableMetrics>,
}

impl EvalReport {
    pub fn get(&self, variable: &str, slice: Slice) -> Option<&VariableMetrics> {
        self.rows.iter().find(|r| r.variable == variable && r.slice == slice)
    }

    /// Header `variable,slice,n,relative_l2,max_relative,rmse,mape,r,r2,adj_r2`.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "variable",
            "slice",
            "n",
            "relative_l2",
            "max_relative",
            "rmse",
            "mape",
            "r",
            "r2",
            "adj_r2",
        ])?;
        for row in &self.rows {
            let e = &row.error;
            let reg = |f: fn(&RegressionMetrics) -> f64| row.regression.as_ref().map(|r| format!("{:e}", f(r))).unwrap_or_default();
            out.write_record([
                row.variable.clone(),
                row.slice.to_string(),
                row.n.to_string(),
                format!("{:e}", e.relative_l2),
                format!("{:e}", e.max_relative),
                format!("{:e}", e.rmse),
                format!("{:e}", e.mape),
                reg(|r| r.r),
                reg(|r| r.r2),
                reg(|r| r.adj_r2),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Gaussian kernel density on a regular grid; `density[i * ys.len() + j]`
/// belongs to `(xs[i], ys[j])`.
#[derive(Clone, Debug, PartialEq)]
pub struct KdeSurface {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: (f64, f64),
}

impl KdeSurface {
    /// Riemann sum of the density over the grid cells.
    pub fn integral(&self) -> f64 {
        let dx = self.xs[1] - self.xs[0];
        let dy = self.ys[1] - self.ys[0];
        self.density.iter().sum::<f64>() * dx * dy
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.density[i * self.ys.len() + j]
    }

    /// Header `exact,pred,density`.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["exact", "pred", "density"])?;
        for (i, x) in self.xs.iter().enumerate() {
            for (j, y) in self.ys.iter().enumerate() {
                out.write_record([format!("{x:e}"), format!("{y:e}"), format!("{:e}", self.at(i, j))])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}

/// Product-Gaussian KDE of `(exact, pred)` pairs with Scott's-rule bandwidth
/// per axis, on a `resolution × resolution` grid spanning the data padded by
/// three bandwidths.
pub fn kde_density(points: &[(f64, f64)], resolution: usize) -> Result<KdeSurface, MetricsError> {
    if points.len() < 10 {
        return Err(MetricsError::TooFew {
            need: 10,
            got: points.len(),
        });
    }
    if resolution < 2 {
        return Err(MetricsError::TooFew {
            need: 2,
            got: resolution,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let n = points.len() as f64;
    let factor = n.powf(-1.0 / 6.0);
    let (hx, hy) = (std_dev(&xs) * factor, std_dev(&ys) * factor);
    if !(hx > 0.0 && hy > 0.0) {
        return Err(MetricsError::Degenerate);
    }
    let axis = |v: &[f64], h: f64| -> Vec<f64> {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
        (0..resolution)
            .map(|k| lo + (hi - lo) * k as f64 / (resolution - 1) as f64)
            .collect()
    };
    let (gx, gy) = (axis(&xs, hx), axis(&ys, hy));
    let norm = 1.0 / (2.0 * std::f64::consts::PI * hx * hy * n);
    // Separable kernel: K(x, y) = kx(x) ky(y).
    let kern = |grid: &[f64], data: &[f64], h: f64| -> Vec<f64> {
        let mut k = vec![0.0; grid.len() * data.len()];
        for (a, g) in grid.iter().enumerate() {
            for (b, d) in data.iter().enumerate() {
                let z = (g - d) / h;
                k[a * data.len() + b] = (-0.5 * z * z).exp();
            }
        }
        k
    };
    let kx = kern(&gx, &xs, hx);
    let ky = kern(&gy, &ys, hy);
    let m = points.len();
    let mut density = vec![0.0; resolution * resolution];
    for i in 0..resolution {
        let rx = &kx[i * m..(i + 1) * m];
        for j in 0..resolution {
            let ry = &ky[j * m..(j + 1) * m];
            density[i * resolution + j] = norm * rx.iter().zip(ry).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Ok(KdeSurface {
        xs: gx,
        ys: gy,
        density,
        bandwidth: (hx, hy),
    })
}

/// Counts of `|pred − exact| / |exact|` per bin `[edges[k], edges[k+1])`.
/// Values below the first edge land in the first bin, values at or above the
/// last edge in the last one.
pub fn re_histogram(pred: &[f64], exact: &[f64], edges: &[f64]) -> Result<Vec<usize>, MetricsError> {
    check_lengths(pred, exact, 0)?;
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(MetricsError::BadEdges);
    }
    let bins = edges.len() - 1;
    let mut counts = vec![0; bins];
    for (&p, &e) in pred.iter().zip(exact) {
        let re = if p == e { 0.0 } else { (p - e).abs() / e.abs() };
        let k = edges[1..bins].partition_point(|&edge| edge <= re);
        counts[k] += 1;
    }
    Ok(counts)
}

/// `n` distinct node indices out of `available`, uniformly at random.
pub fn sample_eval_points(n: usize, available: usize, seed: u64) -> Result<Vec<usize>, MetricsError> {
    if n > available {
        return Err(MetricsError::TooManySamples {
            requested: n,
            available,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample(&mut rng, available, n).into_vec())
}
