use nalgebra::DMatrix;

use crate::error::{Result, SgotError};
use crate::linalg::{condition_number, to_complex, C64};

/// Condition number above which `beta^* K beta` counts as singular.
pub const PROJECTION_COND: f64 = 1e12;
/// Smallest admissible squared RKHS norm of a right eigenfunction.
pub const MIN_SQ_NORM: f64 = 1e-14;

pub(crate) fn apply_k(k: Option<&DMatrix<f64>>, v: &DMatrix<C64>) -> DMatrix<C64> {
    match k {
        None => v.clone(),
        Some(k) => to_complex(k) * v,
    }
}

/// Scale every column of `beta` to unit RKHS norm.
pub fn normalize_columns(beta: &DMatrix<C64>, k: Option<&DMatrix<f64>>) -> Result<DMatrix<C64>> {
    let kb = apply_k(k, beta);
    let mut out = beta.clone();
    for j in 0..beta.ncols() {
        let sq = beta.column(j).dotc(&kb.column(j)).re;
        if !(sq > MIN_SQ_NORM) {
            return Err(SgotError::DegenerateDirection(format!(
                "right eigenfunction {j} has squared norm {sq:e}"
            )));
        }
        out.column_mut(j).unscale_mut(sq.sqrt());
    }
    Ok(out)
}

/// Closest `alpha` to `alpha_hat` in the RKHS metric with `alpha^* K beta = I`:
/// `alpha_hat - beta ((alpha_hat^* K beta - I)(beta^* K beta)^{-1})^*`.
pub fn project_alpha(alpha_hat: &DMatrix<C64>, beta: &DMatrix<C64>, k: Option<&DMatrix<f64>>) -> Result<DMatrix<C64>> {
    if alpha_hat.shape() != beta.shape() {
        return Err(SgotError::Dimension(format!(
            "alpha is {:?} but beta is {:?}",
            alpha_hat.shape(),
            beta.shape()
        )));
    }
    let r = beta.ncols();
    let kb = apply_k(k, beta);
    let s = beta.adjoint() * &kb;
    let cond = condition_number(&s);
    if !(cond <= PROJECTION_COND) {
        return Err(SgotError::Projection(format!("beta^* K beta has condition number {cond:e}")));
    }
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| SgotError::Projection("beta^* K beta is singular".into()))?;
    let e = alpha_hat.adjoint() * &kb - DMatrix::<C64>::identity(r, r);
    Ok(alpha_hat - beta * (e * s_inv).adjoint())
}
