//! Reproducing kernels, Gram matrices and kernel gradients.
//!
//! Point sets are `n x d` matrices holding one point per row.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SgotError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    GaussianRbf { lengthscale: f64 },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Linear
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::GaussianRbf { lengthscale } => {
                if lengthscale.is_finite() && lengthscale > 0.0 {
                    Ok(())
                } else {
                    Err(SgotError::Parameter(format!(
                        "RBF lengthscale must be positive, got {lengthscale}"
                    )))
                }
            }
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, KernelSpec::Linear)
    }

    /// RBF kernel whose lengthscale is the median pairwise distance of `points`.
    pub fn rbf_median(points: &DMatrix<f64>) -> Result<Self> {
        let l = median_pairwise_distance(points)?;
        Ok(KernelSpec::GaussianRbf { lengthscale: l })
    }

    /// Kernel value between two points given as slices.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            KernelSpec::GaussianRbf { lengthscale } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * lengthscale * lengthscale)).exp()
            }
        }
    }
}

fn check_dims(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.ncols() != b.ncols() {
        return Err(SgotError::Dimension(format!(
            "point dimensions differ: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    if a.ncols() == 0 {
        return Err(SgotError::Dimension("points must have dimension >= 1".into()));
    }
    Ok(())
}

/// Gram matrix `G[i, j] = k(a_i, b_j)`.
pub fn gram(kernel: &KernelSpec, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dims(a, b)?;
    kernel.validate()?;
    let inner = a * b.transpose();
    Ok(match *kernel {
        KernelSpec::Linear => inner,
        KernelSpec::GaussianRbf { lengthscale } => {
            let na: Vec<f64> = a.row_iter().map(|r| r.norm_squared()).collect();
            let nb: Vec<f64> = b.row_iter().map(|r| r.norm_squared()).collect();
            let s = 1.0 / (2.0 * lengthscale * lengthscale);
            DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
                let d2 = (na[i] + nb[j] - 2.0 * inner[(i, j)]).max(0.0);
                (-d2 * s).exp()
            })
        }
    })
}

/// Self-Gram matrix of a point set, symmetrized exactly.
pub fn self_gram(kernel: &KernelSpec, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let g = gram(kernel, a, a)?;
    Ok((&g + g.transpose()) * 0.5)
}

/// Gradient of `k(a_wrt, b_j)` with respect to `a_wrt`, one row per `b_j`.
pub fn gram_gradient(
    kernel: &KernelSpec,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    wrt: usize,
) -> Result<DMatrix<f64>> {
    check_dims(a, b)?;
    kernel.validate()?;
    if wrt >= a.nrows() {
        return Err(SgotError::Dimension(format!(
            "row index {wrt} out of range for {} points",
            a.nrows()
        )));
    }
    let d = a.ncols();
    let x = a.row(wrt);
    Ok(match *kernel {
        KernelSpec::Linear => b.clone(),
        KernelSpec::GaussianRbf { lengthscale } => {
            let l2 = lengthscale * lengthscale;
            let mut out = DMatrix::zeros(b.nrows(), d);
            for j in 0..b.nrows() {
                let diff = x - b.row(j);
                let kv = (-diff.norm_squared() / (2.0 * l2)).exp();
                for c in 0..d {
                    out[(j, c)] = -diff[c] / l2 * kv;
                }
            }
            out
        }
    })
}

/// Median of all pairwise Euclidean distances (distinct pairs).
pub fn median_pairwise_distance(points: &DMatrix<f64>) -> Result<f64> {
    let n = points.nrows();
    if n < 2 {
        return Err(SgotError::InsufficientData(
            "median heuristic needs at least two points".into(),
        ));
    }
    let mut d: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push((points.row(i) - points.row(j)).norm());
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = d.len();
    let med = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
    if med > 0.0 {
        Ok(med)
    } else {
        Err(SgotError::Parameter("all points coincide; median distance is zero".into()))
    }
}
