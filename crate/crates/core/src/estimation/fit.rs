use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::dataset::{TrajectoryDataset, WindowLayout};
use crate::error::{Result, SgotError};
use crate::kernels::{gram, self_gram, KernelSpec};
use crate::linalg::{sym_apply, sym_eig_desc};

/// Relative cut-off below which Gram or covariance eigenvalues count as zero.
pub const RANK_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Rrr,
    Krr,
}

/// Numerical route. `Auto` uses the explicit feature map for the linear
/// kernel and the kernel trick otherwise; `Gram` always uses the kernel trick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[default]
    Auto,
    Gram,
}

/// A finite family of RKHS functions `f_k = sum_i coeffs[i, k] k(points_i, .)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorBlock {
    pub points: DMatrix<f64>,
    pub coeffs: DMatrix<f64>,
}

impl FactorBlock {
    pub fn width(&self) -> usize {
        self.coeffs.ncols()
    }
}

/// Identity points: under the linear kernel, coefficients on these points are
/// plain weight vectors `f(x) = w^T x`.
pub fn feature_points(d: usize) -> DMatrix<f64> {
    DMatrix::identity(d, d)
}

/// A finite-rank operator `E h = sum_k right_k <left_k, h>`.
///
/// Right functions live on the input snapshots and left functions on the
/// successor snapshots: in sampling-operator form `E = S^* U V^T Z` the right
/// block is `S^* U` and the left block is `Z^* V`. Under the linear kernel
/// with the default solver both blocks are stored on [`feature_points`].
#[derive(Debug, Clone)]
pub struct EstimatedOperator {
    pub kernel: KernelSpec,
    pub estimator: Estimator,
    pub rank: usize,
    pub tikhonov: f64,
    pub dt: f64,
    pub right: FactorBlock,
    pub left: FactorBlock,
    pub window: Option<WindowLayout>,
}

impl EstimatedOperator {
    pub fn state_dim(&self) -> usize {
        self.right.points.ncols()
    }

    /// Coefficients of `E h` on the right points, for `h` given by
    /// coefficient columns on `points`.
    pub fn apply(&self, points: &DMatrix<f64>, coeffs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let g = gram(&self.kernel, &self.left.points, points)?;
        let inner = self.left.coeffs.transpose() * g * coeffs;
        Ok(&self.right.coeffs * inner)
    }

    /// Matrix of the operator acting on weight vectors, available for the
    /// linear kernel only. For data `y = A x` this tends to `A^T`.
    pub fn explicit_matrix(&self) -> Result<DMatrix<f64>> {
        if !self.kernel.is_linear() {
            return Err(SgotError::IncompatibleSystems(
                "explicit operator matrices require the linear kernel".into(),
            ));
        }
        let r = self.right.points.transpose() * &self.right.coeffs;
        let l = self.left.points.transpose() * &self.left.coeffs;
        Ok(r * l.transpose())
    }
}

fn validate(data: &TrajectoryDataset, kernel: &KernelSpec, tikhonov: f64) -> Result<()> {
    kernel.validate()?;
    if !tikhonov.is_finite() || tikhonov < 0.0 {
        return Err(SgotError::Parameter(format!(
            "Tikhonov regularization must be >= 0, got {tikhonov}"
        )));
    }
    if tikhonov == 0.0 && !kernel.is_linear() {
        return Err(SgotError::Parameter(
            "Tikhonov regularization must be > 0 outside the linear feature path".into(),
        ));
    }
    if data.x.shape() != data.y.shape() {
        return Err(SgotError::Dimension("x and y shapes differ".into()));
    }
    Ok(())
}

fn use_features(kernel: &KernelSpec, solver: Solver) -> bool {
    kernel.is_linear() && solver == Solver::Auto
}

/// Reduced-rank regression estimator with the default solver.
pub fn fit_rrr(data: &TrajectoryDataset, kernel: &KernelSpec, rank: usize, tikhonov: f64) -> Result<EstimatedOperator> {
    fit_rrr_with(data, kernel, rank, tikhonov, Solver::Auto)
}

pub fn fit_rrr_with(
    data: &TrajectoryDataset,
    kernel: &KernelSpec,
    rank: usize,
    tikhonov: f64,
    solver: Solver,
) -> Result<EstimatedOperator> {
    validate(data, kernel, tikhonov)?;
    let n = data.len();
    if rank == 0 || rank > n {
        return Err(SgotError::Rank(format!("rank must be in 1..={n}, got {rank}")));
    }
    if tikhonov == 0.0 && !use_features(kernel, solver) {
        return Err(SgotError::Parameter("the kernel-trick path needs Tikhonov > 0".into()));
    }
    let (right, left, r) = if use_features(kernel, solver) {
        rrr_features(data, rank, tikhonov)
    } else {
        rrr_gram(data, kernel, rank, tikhonov)?
    };
    Ok(EstimatedOperator {
        kernel: *kernel,
        estimator: Estimator::Rrr,
        rank: r,
        tikhonov,
        dt: data.dt,
        right,
        left,
        window: data.window,
    })
}

/// Kernel ridge regression estimator (no rank truncation).
pub fn fit_krr(data: &TrajectoryDataset, kernel: &KernelSpec, tikhonov: f64) -> Result<EstimatedOperator> {
    fit_krr_with(data, kernel, tikhonov, Solver::Auto)
}

pub fn fit_krr_with(
    data: &TrajectoryDataset,
    kernel: &KernelSpec,
    tikhonov: f64,
    solver: Solver,
) -> Result<EstimatedOperator> {
    validate(data, kernel, tikhonov)?;
    if tikhonov == 0.0 && !use_features(kernel, solver) {
        return Err(SgotError::Parameter("the kernel-trick path needs Tikhonov > 0".into()));
    }
    let n = data.len();
    let (right, left) = if use_features(kernel, solver) {
        let d = data.dim();
        let (cx, cxy) = covariances(data);
        let inv = reg_inverse(&cx, tikhonov, |v| 1.0 / v);
        let p = feature_points(d);
        (
            FactorBlock { points: p.clone(), coeffs: inv },
            FactorBlock { points: p, coeffs: cxy.transpose() },
        )
    } else {
        let k = self_gram(kernel, &data.x)? / n as f64;
        let inv = sym_apply(&k, |v| 1.0 / (v.max(0.0) + tikhonov));
        let s = 1.0 / (n as f64).sqrt();
        (
            FactorBlock { points: data.x.clone(), coeffs: inv * s },
            FactorBlock { points: data.y.clone(), coeffs: DMatrix::identity(n, n) * s },
        )
    };
    let rank = right.width();
    Ok(EstimatedOperator {
        kernel: *kernel,
        estimator: Estimator::Krr,
        rank,
        tikhonov,
        dt: data.dt,
        right,
        left,
        window: data.window,
    })
}

/// Empirical covariances `(C_x, C_xy)` with `1/n` normalization.
pub fn covariances(data: &TrajectoryDataset) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = data.len() as f64;
    let xt = data.x.transpose();
    let cx = &xt * &data.x / n;
    let cxy = &xt * &data.y / n;
    ((&cx + cx.transpose()) * 0.5, cxy)
}

/// `f(C_x + gamma I)` through a symmetric eigen-decomposition. With
/// `gamma = 0` eigenvalues below the relative rank cut-off map to zero.
fn reg_inverse(cx: &DMatrix<f64>, gamma: f64, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, _) = sym_eig_desc(cx);
    let top = vals.iter().cloned().fold(0.0_f64, f64::max);
    let floor = (gamma * 1e-12).max(0.0);
    sym_apply(cx, |v| {
        let shifted = v.max(0.0) + gamma;
        if gamma == 0.0 && v <= RANK_RTOL * top {
            0.0
        } else {
            f(shifted.max(floor))
        }
    })
}

fn rrr_features(data: &TrajectoryDataset, rank: usize, gamma: f64) -> (FactorBlock, FactorBlock, usize) {
    let d = data.dim();
    let (cx, cxy) = covariances(data);
    let w = reg_inverse(&cx, gamma, |v| 1.0 / v.sqrt());
    let b = &w * &cxy;
    let (vals, vecs) = sym_eig_desc(&(&b * b.transpose()));
    let top = vals.iter().cloned().fold(0.0_f64, f64::max);
    let keep = vals.iter().take(rank).filter(|&&v| v > RANK_RTOL * top && v > 0.0).count().max(1);
    let q = vecs.columns(0, keep).into_owned();
    let right = &w * &q;
    let left = cxy.transpose() * &right;
    let p = feature_points(d);
    (
        FactorBlock { points: p.clone(), coeffs: right },
        FactorBlock { points: p, coeffs: left },
        keep,
    )
}

fn rrr_gram(
    data: &TrajectoryDataset,
    kernel: &KernelSpec,
    rank: usize,
    gamma: f64,
) -> Result<(FactorBlock, FactorBlock, usize)> {
    let n = data.len();
    let nf = n as f64;
    let k = self_gram(kernel, &data.x)? / nf;
    let l = self_gram(kernel, &data.y)? / nf;
    let (lam, q) = sym_eig_desc(&k);
    let top = lam.iter().cloned().fold(0.0_f64, f64::max);
    let kept: Vec<usize> = (0..n).filter(|&i| lam[i] > RANK_RTOL * top && lam[i] > 0.0).collect();
    if kept.is_empty() {
        return Err(SgotError::Numerical("input Gram matrix is numerically zero".into()));
    }
    let qk = DMatrix::from_columns(&kept.iter().map(|&i| q.column(i).into_owned()).collect::<Vec<_>>());
    let dvec: Vec<f64> = kept.iter().map(|&i| (lam[i] / (lam[i] + gamma)).sqrt()).collect();
    let svec: Vec<f64> = kept.iter().map(|&i| 1.0 / (lam[i] * (lam[i] + gamma)).sqrt()).collect();
    let mut a = qk.transpose() * &l * &qk;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            a[(i, j)] *= dvec[i] * dvec[j];
        }
    }
    let (sig, t) = sym_eig_desc(&a);
    let stop = sig.iter().cloned().fold(0.0_f64, f64::max);
    let keep = sig.iter().take(rank).filter(|&&v| v > RANK_RTOL * stop && v > 0.0).count().max(1);
    let mut tt = t.columns(0, keep).into_owned();
    for i in 0..tt.nrows() {
        tt.row_mut(i).scale_mut(svec[i]);
    }
    let u = &qk * tt;
    let v = &k * &u;
    let s = 1.0 / nf.sqrt();
    Ok((
        FactorBlock { points: data.x.clone(), coeffs: u * s },
        FactorBlock { points: data.y.clone(), coeffs: v * s },
        keep,
    ))
}

/// Explicit RRR matrix from covariances, independent of the factored path.
pub fn explicit_rrr_linear(data: &TrajectoryDataset, rank: usize, gamma: f64) -> DMatrix<f64> {
    let (cx, cxy) = covariances(data);
    let d = cx.nrows();
    let w = reg_inverse(&cx, gamma, |v| 1.0 / v.sqrt());
    let b = &w * &cxy;
    let svd = b.svd(true, false);
    let u = svd.u.unwrap();
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].partial_cmp(&svd.singular_values[i]).unwrap());
    let mut proj = DMatrix::zeros(d, d);
    for &i in idx.iter().take(rank) {
        let c = u.column(i);
        proj += &c * c.transpose();
    }
    &w * proj * &w * cxy
}

/// Explicit ridge (EDMD) matrix `(C_x + gamma I)^{-1} C_xy`.
pub fn explicit_krr_linear(data: &TrajectoryDataset, gamma: f64) -> DMatrix<f64> {
    let (cx, cxy) = covariances(data);
    let d = cx.nrows();
    let m = cx + DMatrix::identity(d, d) * gamma;
    m.lu().solve(&cxy).expect("regularized covariance is invertible")
}
