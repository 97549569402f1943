//! Barycenter objective and its gradients.
//!
//! Gradients of real functions of complex parameters are packed as
//! `dJ/dRe z + i dJ/dIm z`, so a descent step is `z - lr * g`.

use nalgebra::DMatrix;

use super::projection::apply_k;
use super::{BarycenterObjective, BarycenterParams, BarycenterProblem};
use crate::error::{Result, SgotError};
use crate::kernels::{gram_gradient, KernelSpec};
use crate::linalg::{to_complex, C64, ZERO};
use crate::ot::{solve_ot, TransportPlan};
use crate::spectral_measure::{eigenvalue_distance_with, EigenvalueMetric, SpectralMeasure};

/// Smoothing of the two square roots inside gradients.
pub const GRAD_EPS: f64 = 1e-9;

/// Per-input data that does not depend on the barycenter parameters.
#[derive(Debug, Clone)]
pub(crate) struct PreparedInput {
    pub b_all: DMatrix<C64>,
    pub a_all: DMatrix<C64>,
    pub col_atom: Vec<usize>,
    pub mult: Vec<f64>,
    pub masses: Vec<f64>,
    pub lambdas: Vec<C64>,
    pub x_mat: DMatrix<f64>,
    pub y_mat: DMatrix<f64>,
    pub explicit: Option<DMatrix<C64>>,
}

impl PreparedInput {
    pub fn new(m: &SpectralMeasure, want_explicit: bool) -> Result<Self> {
        let b_all = DMatrix::from_columns(
            &m.atoms.iter().flat_map(|a| a.beta.column_iter().map(|c| c.into_owned())).collect::<Vec<_>>(),
        );
        let a_all = DMatrix::from_columns(
            &m.atoms.iter().flat_map(|a| a.alpha.column_iter().map(|c| c.into_owned())).collect::<Vec<_>>(),
        );
        let col_atom = m
            .atoms
            .iter()
            .enumerate()
            .flat_map(|(l, a)| std::iter::repeat(l).take(a.multiplicity))
            .collect();
        let explicit = if want_explicit { Some(to_complex(&m.explicit_matrix()?)) } else { None };
        Ok(Self {
            b_all,
            a_all,
            col_atom,
            mult: m.atoms.iter().map(|a| a.multiplicity as f64).collect(),
            masses: m.masses(),
            lambdas: m.lambdas(),
            x_mat: m.x_points.to_matrix(),
            y_mat: m.y_points.to_matrix(),
            explicit,
        })
    }
}

/// Kernel matrices tying the current control points to every input.
#[derive(Debug, Clone)]
pub(crate) struct Geometry {
    pub k: Option<DMatrix<f64>>,
    pub mxb: Vec<DMatrix<C64>>,
    pub mya: Vec<DMatrix<C64>>,
    /// Feature map `b = F^T beta` for operator matrices; `None` is the identity.
    pub feature_map: Option<DMatrix<f64>>,
}

impl Geometry {
    pub fn new(params: &BarycenterParams, inputs: &[SpectralMeasure], prepared: &[PreparedInput]) -> Result<Self> {
        let rep = params.representers();
        let k = rep.self_gram(&params.kernel)?;
        let mut mxb = Vec::with_capacity(inputs.len());
        let mut mya = Vec::with_capacity(inputs.len());
        for (m, p) in inputs.iter().zip(prepared) {
            let mx = rep.cross_gram(&params.kernel, &m.x_points)?;
            let my = rep.cross_gram(&params.kernel, &m.y_points)?;
            mxb.push(apply_k(mx.as_ref(), &p.b_all));
            mya.push(apply_k(my.as_ref(), &p.a_all));
        }
        let feature_map = match rep {
            crate::spectral_measure::Representers::Features(_) => None,
            crate::spectral_measure::Representers::Points(x) => Some(x),
        };
        Ok(Self { k, mxb, mya, feature_map })
    }
}

/// Everything an evaluation needs besides the parameters and plans.
#[derive(Debug, Clone)]
pub(crate) struct Context<'a> {
    pub problem: &'a BarycenterProblem,
    pub prepared: Vec<PreparedInput>,
    pub dt: f64,
}

impl<'a> Context<'a> {
    pub fn new(problem: &'a BarycenterProblem) -> Result<Self> {
        let hs = problem.objective == BarycenterObjective::HilbertSchmidt;
        let prepared = problem
            .inputs
            .iter()
            .map(|m| PreparedInput::new(m, hs))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { problem, prepared, dt: problem.inputs[0].dt })
    }

    pub fn geometry(&self, params: &BarycenterParams) -> Result<Geometry> {
        Geometry::new(params, &self.problem.inputs, &self.prepared)
    }
}

/// Unit-normalized columns and their norms.
fn unit_columns(v: &DMatrix<C64>, k: Option<&DMatrix<f64>>) -> (DMatrix<C64>, Vec<f64>) {
    let kv = apply_k(k, v);
    let mut out = v.clone();
    let mut norms = Vec::with_capacity(v.ncols());
    for j in 0..v.ncols() {
        let n = v.column(j).dotc(&kv.column(j)).re.max(0.0).sqrt();
        norms.push(n);
        if n > 0.0 {
            out.column_mut(j).unscale_mut(n);
        }
    }
    (out, norms)
}

/// Pairwise eigenvalue distances and squared Grassmann distances between
/// the barycenter atoms and the atoms of one input.
struct PairTerms {
    e: DMatrix<f64>,
    g2: DMatrix<f64>,
    pm: DMatrix<C64>,
    qm: DMatrix<C64>,
}

fn pair_terms(
    params: &BarycenterParams,
    bt: &DMatrix<C64>,
    at: &DMatrix<C64>,
    geom: &Geometry,
    prep: &PreparedInput,
    i: usize,
    metric: EigenvalueMetric,
) -> PairTerms {
    let r = params.rank();
    let l = prep.lambdas.len();
    let pm = bt.adjoint() * &geom.mxb[i];
    let qm = at.adjoint() * &geom.mya[i];
    let mut s = DMatrix::<f64>::zeros(r, l);
    for (k, &atom) in prep.col_atom.iter().enumerate() {
        for j in 0..r {
            s[(j, atom)] += (pm[(j, k)] * qm[(j, k)].conj()).re;
        }
    }
    let g2 = DMatrix::from_fn(r, l, |j, a| 1.0 + prep.mult[a] - 2.0 * s[(j, a)]);
    let e = DMatrix::from_fn(r, l, |j, a| eigenvalue_distance_with(metric, params.lambda[j], prep.lambdas[a]));
    PairTerms { e, g2, pm, qm }
}

fn squared_cost(eta: f64, e: f64, g2: f64) -> f64 {
    let c = eta * e + (1.0 - eta) * g2.max(0.0).sqrt();
    c * c
}

fn sgot_costs(params: &BarycenterParams, ctx: &Context, geom: &Geometry) -> Vec<DMatrix<f64>> {
    let (bt, _) = unit_columns(&params.beta, geom.k.as_ref());
    let (at, _) = unit_columns(&params.alpha, geom.k.as_ref());
    let eta = ctx.problem.eta;
    ctx.prepared
        .iter()
        .enumerate()
        .map(|(i, prep)| {
            let t = pair_terms(params, &bt, &at, geom, prep, i, ctx.problem.eigenvalue_metric);
            t.e.zip_map(&t.g2, |e, g2| squared_cost(eta, e, g2))
        })
        .collect()
}

/// Squared ground-cost matrices `d_eta^2` between the barycenter atoms and
/// each input's atoms.
pub fn cost_matrices(params: &BarycenterParams, problem: &BarycenterProblem) -> Result<Vec<DMatrix<f64>>> {
    let ctx = Context::new(problem)?;
    let geom = ctx.geometry(params)?;
    Ok(sgot_costs(params, &ctx, &geom))
}

/// Operator matrix of the parametric family in feature coordinates.
pub(crate) fn operator_matrix(params: &BarycenterParams, geom: &Geometry, dt: f64) -> DMatrix<C64> {
    let (b, a) = feature_vectors(params, geom);
    let mut scaled = b;
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        let mu = (params.lambda[j] * dt).exp();
        col.iter_mut().for_each(|z| *z *= mu);
    }
    scaled * a.adjoint()
}

fn feature_vectors(params: &BarycenterParams, geom: &Geometry) -> (DMatrix<C64>, DMatrix<C64>) {
    match &geom.feature_map {
        None => (params.beta.clone(), params.alpha.clone()),
        Some(x) => {
            let ft = to_complex(&x.transpose());
            (&ft * &params.beta, &ft * &params.alpha)
        }
    }
}

pub(crate) fn objective_with(
    params: &BarycenterParams,
    plans: &[TransportPlan],
    ctx: &Context,
    geom: &Geometry,
) -> Result<f64> {
    let w = &ctx.problem.weights;
    match ctx.problem.objective {
        BarycenterObjective::Sgot => {
            if plans.len() != ctx.prepared.len() {
                return Err(SgotError::Dimension(format!(
                    "{} plans for {} inputs",
                    plans.len(),
                    ctx.prepared.len()
                )));
            }
            let costs = sgot_costs(params, ctx, geom);
            let mut total = 0.0;
            for ((c, p), wi) in costs.iter().zip(plans).zip(w) {
                if p.entries.shape() != c.shape() {
                    return Err(SgotError::Dimension("plan shape does not match the cost".into()));
                }
                total += wi * p.cost(c);
            }
            Ok(total)
        }
        BarycenterObjective::HilbertSchmidt => {
            let m = operator_matrix(params, geom, ctx.dt);
            Ok(ctx
                .prepared
                .iter()
                .zip(w)
                .map(|(p, wi)| wi * (&m - p.explicit.as_ref().expect("explicit matrix")).norm_squared())
                .sum())
        }
    }
}

/// Exact transport plans between the barycenter and every input under the
/// squared ground cost.
pub(crate) fn plans_with(params: &BarycenterParams, ctx: &Context, geom: &Geometry) -> Result<Vec<TransportPlan>> {
    if ctx.problem.objective == BarycenterObjective::HilbertSchmidt {
        return Ok(Vec::new());
    }
    let r = params.rank();
    let a = vec![1.0 / r as f64; r];
    sgot_costs(params, ctx, geom)
        .iter()
        .zip(&ctx.prepared)
        .map(|(c, p)| solve_ot(c, &a, &p.masses).map(|(plan, _)| plan))
        .collect()
}

/// Packed gradient of the objective with the plans held fixed.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub lambda: Vec<C64>,
    pub alpha: DMatrix<C64>,
    pub beta: DMatrix<C64>,
    /// Present only when requested; real gradient with respect to the
    /// control points.
    pub x: Option<DMatrix<f64>>,
}

fn eigen_grad(metric: EigenvalueMetric, a: C64, b: C64) -> (f64, C64) {
    let tp = 2.0 * std::f64::consts::PI;
    match metric {
        EigenvalueMetric::DecayFrequency => {
            let dr = a.re - b.re;
            let df = (a.im - b.im) / tp;
            let es = (dr * dr + df * df + GRAD_EPS * GRAD_EPS).sqrt();
            (es, C64::new(dr, df / tp) / es)
        }
        EigenvalueMetric::PolarChord => {
            let ea = a.exp();
            let u = ea - b.exp();
            let es = (u.norm_sqr() + GRAD_EPS * GRAD_EPS).sqrt();
            (es, u * ea.conj() / es)
        }
    }
}

pub(crate) fn gradient_with(
    params: &BarycenterParams,
    plans: &[TransportPlan],
    ctx: &Context,
    geom: &Geometry,
    want_x: bool,
) -> Result<Gradient> {
    match ctx.problem.objective {
        BarycenterObjective::Sgot => sgot_gradient(params, plans, ctx, geom, want_x),
        BarycenterObjective::HilbertSchmidt => {
            if want_x {
                return Err(SgotError::Parameter(
                    "control points are not optimized under the Hilbert-Schmidt objective".into(),
                ));
            }
            Ok(hs_gradient(params, ctx, geom))
        }
    }
}

fn sgot_gradient(
    params: &BarycenterParams,
    plans: &[TransportPlan],
    ctx: &Context,
    geom: &Geometry,
    want_x: bool,
) -> Result<Gradient> {
    let r = params.rank();
    let n = params.beta.nrows();
    let eta = ctx.problem.eta;
    let metric = ctx.problem.eigenvalue_metric;
    let k = geom.k.as_ref();
    let (bt, nb) = unit_columns(&params.beta, k);
    let (at, na) = unit_columns(&params.alpha, k);
    let mut g_lambda = vec![ZERO; r];
    let mut g_bt = DMatrix::<C64>::zeros(n, r);
    let mut g_at = DMatrix::<C64>::zeros(n, r);
    let mut g_mx: Vec<DMatrix<f64>> = Vec::new();
    let mut g_my: Vec<DMatrix<f64>> = Vec::new();
    for (i, prep) in ctx.prepared.iter().enumerate() {
        let wi = ctx.problem.weights[i];
        let t = pair_terms(params, &bt, &at, geom, prep, i, metric);
        let l = prep.lambdas.len();
        let mut coef_s = DMatrix::<f64>::zeros(r, l);
        for j in 0..r {
            for a in 0..l {
                let omega = wi * plans[i].entries[(j, a)];
                if omega == 0.0 {
                    continue;
                }
                let (es, de) = eigen_grad(metric, params.lambda[j], prep.lambdas[a]);
                let gs = (t.g2[(j, a)].max(0.0) + GRAD_EPS * GRAD_EPS).sqrt();
                let c = eta * es + (1.0 - eta) * gs;
                g_lambda[j] += de * (omega * 2.0 * c * eta);
                coef_s[(j, a)] = -omega * 2.0 * c * (1.0 - eta) / gs;
            }
        }
        let m = prep.col_atom.len();
        let mut wb = DMatrix::<C64>::zeros(m, r);
        let mut wa = DMatrix::<C64>::zeros(m, r);
        for (kc, &atom) in prep.col_atom.iter().enumerate() {
            for j in 0..r {
                let cs = coef_s[(j, atom)];
                wb[(kc, j)] = t.qm[(j, kc)].conj() * cs;
                wa[(kc, j)] = t.pm[(j, kc)].conj() * cs;
            }
        }
        g_bt += &geom.mxb[i] * &wb;
        g_at += &geom.mya[i] * &wa;
        if want_x {
            g_mx.push((bt.map(|z| z.conj()) * (&prep.b_all * &wb).transpose()).map(|z| z.re));
            g_my.push((at.map(|z| z.conj()) * (&prep.a_all * &wa).transpose()).map(|z| z.re));
        }
    }
    let kbt = apply_k(k, &bt);
    let kat = apply_k(k, &at);
    let mut g_beta = g_bt.clone();
    let mut g_alpha = g_at.clone();
    let mut rho_b = vec![0.0; r];
    let mut rho_a = vec![0.0; r];
    for j in 0..r {
        rho_b[j] = bt.column(j).dotc(&g_bt.column(j)).re;
        rho_a[j] = at.column(j).dotc(&g_at.column(j)).re;
        let col = (g_bt.column(j) - kbt.column(j) * C64::new(rho_b[j], 0.0)) / C64::new(nb[j], 0.0);
        g_beta.set_column(j, &col);
        let col = (g_at.column(j) - kat.column(j) * C64::new(rho_a[j], 0.0)) / C64::new(na[j], 0.0);
        g_alpha.set_column(j, &col);
    }
    let x = if want_x {
        let mut gk = DMatrix::<f64>::zeros(n, n);
        for j in 0..r {
            for p in 0..n {
                for q in 0..n {
                    gk[(p, q)] -= 0.5
                        * (rho_b[j] * (bt[(p, j)].conj() * bt[(q, j)]).re
                            + rho_a[j] * (at[(p, j)].conj() * at[(q, j)]).re);
                }
            }
        }
        Some(chain_to_points(params, ctx, &gk, &g_mx, &g_my)?)
    } else {
        None
    };
    Ok(Gradient { lambda: g_lambda, alpha: g_alpha, beta: g_beta, x })
}

/// Chain matrix gradients through the kernel to the control points.
fn chain_to_points(
    params: &BarycenterParams,
    ctx: &Context,
    gk: &DMatrix<f64>,
    g_mx: &[DMatrix<f64>],
    g_my: &[DMatrix<f64>],
) -> Result<DMatrix<f64>> {
    let x = &params.x;
    let gsym = gk + gk.transpose();
    match params.kernel {
        KernelSpec::Linear => {
            let mut out = &gsym * x;
            for (i, prep) in ctx.prepared.iter().enumerate() {
                out += &g_mx[i] * &prep.x_mat + &g_my[i] * &prep.y_mat;
            }
            Ok(out)
        }
        KernelSpec::GaussianRbf { .. } => {
            let mut out = DMatrix::<f64>::zeros(x.nrows(), x.ncols());
            for p in 0..x.nrows() {
                let mut row = gsym.row(p) * gram_gradient(&params.kernel, x, x, p)?;
                for (i, prep) in ctx.prepared.iter().enumerate() {
                    row += g_mx[i].row(p) * gram_gradient(&params.kernel, x, &prep.x_mat, p)?;
                    row += g_my[i].row(p) * gram_gradient(&params.kernel, x, &prep.y_mat, p)?;
                }
                out.set_row(p, &row);
            }
            Ok(out)
        }
    }
}

fn hs_gradient(params: &BarycenterParams, ctx: &Context, geom: &Geometry) -> Gradient {
    let r = params.rank();
    let dt = ctx.dt;
    let (b, a) = feature_vectors(params, geom);
    let m = operator_matrix(params, geom, dt);
    let mut d_sum = DMatrix::<C64>::zeros(m.nrows(), m.ncols());
    for (p, wi) in ctx.prepared.iter().zip(&ctx.problem.weights) {
        d_sum += (&m - p.explicit.as_ref().expect("explicit matrix")) * C64::new(*wi, 0.0);
    }
    let da = &d_sum * &a;
    let dhb = d_sum.adjoint() * &b;
    let mut g_b = DMatrix::<C64>::zeros(b.nrows(), r);
    let mut g_a = DMatrix::<C64>::zeros(a.nrows(), r);
    let mut g_lambda = vec![ZERO; r];
    for j in 0..r {
        let mu = (params.lambda[j] * dt).exp();
        g_b.set_column(j, &(da.column(j) * (mu.conj() * 2.0)));
        g_a.set_column(j, &(dhb.column(j) * (mu * 2.0)));
        let g_mu = b.column(j).dotc(&da.column(j)) * 2.0;
        g_lambda[j] = g_mu * mu.conj() * dt;
    }
    let (g_beta, g_alpha) = match &geom.feature_map {
        None => (g_b, g_a),
        Some(x) => {
            let xc = to_complex(x);
            (&xc * g_b, &xc * g_a)
        }
    };
    Gradient { lambda: g_lambda, alpha: g_alpha, beta: g_beta, x: None }
}

/// Objective `sum_i w_i <C_i(theta), P_i>` for fixed plans (the plans are
/// ignored under the Hilbert-Schmidt objective).
pub fn objective(params: &BarycenterParams, plans: &[TransportPlan], problem: &BarycenterProblem) -> Result<f64> {
    let ctx = Context::new(problem)?;
    let geom = ctx.geometry(params)?;
    objective_with(params, plans, &ctx, &geom)
}

/// Packed gradient of [`objective`]; the control-point block is computed
/// when `with_control_points` is set.
pub fn gradient(
    params: &BarycenterParams,
    plans: &[TransportPlan],
    problem: &BarycenterProblem,
    with_control_points: bool,
) -> Result<Gradient> {
    let ctx = Context::new(problem)?;
    let geom = ctx.geometry(params)?;
    gradient_with(params, plans, &ctx, &geom, with_control_points)
}
