use nalgebra::DMatrix;

use super::dataset::WindowLayout;
use super::fit::{EstimatedOperator, FactorBlock, RANK_RTOL};
use crate::error::{Result, SgotError};
use crate::kernels::{gram, self_gram, KernelSpec};
use crate::linalg::{condition_number, eig_real, sym_eig_desc, to_complex, C64};

/// Eigenvalues below this modulus are discarded.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-12;
/// Reduced eigenvector matrices worse conditioned than this are rejected.
pub const DEFECTIVE_COND: f64 = 1e12;

/// Spectral decomposition `E = sum_i mu_i psi_i <xi_i, .>` with
/// `<xi_i, psi_j> = delta_ij`.
///
/// Right eigenfunctions `psi_i` have coefficients `right_coeffs[:, i]` on
/// `right_points`; left eigenfunctions `xi_i` have coefficients
/// `left_coeffs[:, i]` on `left_points`.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub mu: Vec<C64>,
    pub right_points: DMatrix<f64>,
    pub right_coeffs: DMatrix<C64>,
    pub left_points: DMatrix<f64>,
    pub left_coeffs: DMatrix<C64>,
    pub kernel: KernelSpec,
    pub dt: f64,
    pub window: Option<WindowLayout>,
    /// Relative RKHS residual `|E psi_i - mu_i psi_i| / |psi_i|` per mode.
    pub residuals: Vec<f64>,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn generator_eigenvalues(&self) -> Result<Vec<C64>> {
        generator_eigenvalues(&self.mu, self.dt)
    }
}

/// `lambda = Log(mu) / dt` on the principal branch.
pub fn generator_eigenvalues(mu: &[C64], dt: f64) -> Result<Vec<C64>> {
    if !(dt > 0.0) {
        return Err(SgotError::Parameter(format!("dt must be positive, got {dt}")));
    }
    mu.iter()
        .map(|m| {
            if m.norm() == 0.0 {
                Err(SgotError::ZeroEigenvalue)
            } else {
                Ok(m.ln() / dt)
            }
        })
        .collect()
}

/// Orthonormal basis of the span of a factor block: returns coefficients
/// `phi` (on the same points) and `t` with `coeffs = phi t`.
fn orthonormal_span(kernel: &KernelSpec, block: &FactorBlock) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let g = self_gram(kernel, &block.points)?;
    let inner = block.coeffs.transpose() * &g * &block.coeffs;
    let (vals, vecs) = sym_eig_desc(&inner);
    let top = vals.iter().cloned().fold(0.0_f64, f64::max);
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > RANK_RTOL * top && vals[i] > 0.0).collect();
    if keep.is_empty() {
        return Err(SgotError::Numerical("operator factor is numerically zero".into()));
    }
    let k = keep.len();
    let mut phi = DMatrix::zeros(block.coeffs.nrows(), k);
    let mut t = DMatrix::zeros(k, block.coeffs.ncols());
    for (j, &i) in keep.iter().enumerate() {
        let s = vals[i].sqrt();
        let w = vecs.column(i);
        phi.set_column(j, &(&block.coeffs * w / s));
        t.set_row(j, &(w.transpose() * s));
    }
    Ok((phi, t))
}

/// Re-express the operator with linearly independent, minimal factors.
pub fn compress(op: &EstimatedOperator) -> Result<EstimatedOperator> {
    let (phi_r, t_r) = orthonormal_span(&op.kernel, &op.right)?;
    let (phi_l, t_l) = orthonormal_span(&op.kernel, &op.left)?;
    let core = t_r * t_l.transpose();
    let svd = core.svd(true, true);
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let sv = &svd.singular_values;
    let top = sv.iter().cloned().fold(0.0_f64, f64::max);
    let mut idx: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > RANK_RTOL * top && sv[i] > 0.0).collect();
    idx.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap());
    if idx.is_empty() {
        return Err(SgotError::Numerical("operator is numerically zero".into()));
    }
    let q = idx.len();
    let mut right = DMatrix::zeros(phi_r.nrows(), q);
    let mut left = DMatrix::zeros(phi_l.nrows(), q);
    for (j, &i) in idx.iter().enumerate() {
        right.set_column(j, &(&phi_r * u.column(i) * sv[i]));
        left.set_column(j, &(&phi_l * v_t.row(i).transpose()));
    }
    let mut out = op.clone();
    out.right.coeffs = right;
    out.left.coeffs = left;
    out.rank = q;
    Ok(out)
}

/// Rounding splits a Jordan block into near-equal eigenvalues whose computed
/// eigenvectors are parallel to working precision, which keeps the condition
/// number near `1/sqrt(eps)` instead of infinity. Such pairs are flagged here.
fn has_collapsed_pair(values: &[C64], vectors: &DMatrix<C64>) -> bool {
    let scale = values.iter().map(|z| z.norm()).fold(0.0_f64, f64::max).max(f64::MIN_POSITIVE);
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            if (values[i] - values[j]).norm() > 1e-6 * scale {
                continue;
            }
            let c = vectors.column(i).dotc(&vectors.column(j)).norm();
            if (1.0 - c * c).max(0.0).sqrt() < 1e-6 {
                return true;
            }
        }
    }
    false
}

/// Spectral decomposition of an estimated operator through its reduced
/// `q x q` matrix.
pub fn eigendecompose(op: &EstimatedOperator) -> Result<EigenSystem> {
    let op = compress(op)?;
    let kernel = op.kernel;
    let g_lr = gram(&kernel, &op.left.points, &op.right.points)?;
    let reduced = op.left.coeffs.transpose() * &g_lr * &op.right.coeffs;
    let dec = eig_real(&reduced)?;
    let q = reduced.nrows();

    let cond = condition_number(&dec.vectors);
    if !cond.is_finite() || cond > DEFECTIVE_COND || has_collapsed_pair(&dec.values, &dec.vectors) {
        return Err(SgotError::DefectiveOperator(format!(
            "reduced eigenvector matrix has condition number {cond:e}"
        )));
    }
    let vinv = dec
        .vectors
        .clone()
        .try_inverse()
        .ok_or_else(|| SgotError::DefectiveOperator("reduced eigenvector matrix is singular".into()))?;

    let keep: Vec<usize> = (0..q).filter(|&i| dec.values[i].norm() >= ZERO_EIGENVALUE_TOL).collect();
    if keep.is_empty() {
        return Err(SgotError::EmptyMeasure);
    }
    let rc = to_complex(&op.right.coeffs);
    let lc = to_complex(&op.left.coeffs);
    let g_rr = to_complex(&self_gram(&kernel, &op.right.points)?);
    let gram_r = rc.adjoint() * &g_rr * &rc;
    let red_c = to_complex(&reduced);

    let mut mu = Vec::with_capacity(keep.len());
    let mut right = DMatrix::zeros(rc.nrows(), keep.len());
    let mut left = DMatrix::zeros(lc.nrows(), keep.len());
    let mut residuals = Vec::with_capacity(keep.len());
    for (j, &i) in keep.iter().enumerate() {
        let m = dec.values[i];
        let v = dec.vectors.column(i).into_owned();
        let u_adj = vinv.row(i).into_owned();
        right.set_column(j, &(&rc * &v));
        left.set_column(j, &(&lc * u_adj.adjoint() / m.conj()));
        let w = &red_c * &v - &v * m;
        let num = (w.adjoint() * &gram_r * &w)[(0, 0)].re.max(0.0).sqrt();
        let den = (v.adjoint() * &gram_r * &v)[(0, 0)].re.max(0.0).sqrt();
        residuals.push(if den > 0.0 { num / den } else { f64::INFINITY });
        mu.push(m);
    }
    Ok(EigenSystem {
        mu,
        right_points: op.right.points.clone(),
        right_coeffs: right,
        left_points: op.left.points.clone(),
        left_coeffs: left,
        kernel,
        dt: op.dt,
        window: op.window,
        residuals,
    })
}
