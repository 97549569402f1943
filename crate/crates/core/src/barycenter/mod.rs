//! Weighted Fréchet barycenters of spectral measures.
//!
//! The barycenter is searched over the parametric operators
//! `T h = sum_j lambda_j <k_x alpha_j, h> k_x beta_j` subject to
//! `alpha^* K beta = I` and `beta_j^* K beta_j = 1`, by cyclic coordinate
//! descent: exact transport plans, then a few first-order steps on the
//! eigenvalues, the control points (optional), the right eigenfunctions
//! and the left eigenfunctions.

mod objective;
mod projection;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SgotError};
use crate::estimation::WindowLayout;
use crate::kernels::KernelSpec;
use crate::linalg::{pinv_sym, to_complex, C64, ZERO};
use crate::ot::TransportPlan;
use crate::spectral_measure::{
    atom_bases, eigenvalue_distance_with, windows_match, EigenvalueMetric, Representers, SpectralAtom,
    SpectralMeasure,
};

pub use objective::{cost_matrices, gradient, objective, Gradient, GRAD_EPS};
pub use projection::{normalize_columns, project_alpha, MIN_SQ_NORM, PROJECTION_COND};

use objective::{gradient_with, objective_with, plans_with, Context, Geometry};

/// Default number of control points drawn for non-linear kernels.
pub const DEFAULT_CONTROL_POINTS: usize = 100;
/// Step halvings tried before a gradient step is abandoned.
const MAX_HALVINGS: usize = 30;
/// Cycles without decrease that trigger a stagnation warning.
const STAGNATION_CYCLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarycenterObjective {
    /// Squared spectral-Grassmann transport distance.
    #[default]
    Sgot,
    /// Squared Hilbert-Schmidt distance between operator matrices, under the
    /// same spectral constraints (linear kernel only).
    HilbertSchmidt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerMethod {
    /// Gradient descent with step halving until the objective decreases.
    #[default]
    GradientDescent,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Stop when the objective changes by less than the tolerance.
    #[default]
    ObjectiveDelta,
    /// Stop when the parameters move by less than the tolerance.
    ParameterDelta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub max_cycles: usize,
    pub inner_steps: usize,
    pub stop_tol: f64,
    pub method: OptimizerMethod,
    pub stop_rule: StopRule,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            max_cycles: 200,
            inner_steps: 10,
            stop_tol: 1e-6,
            method: OptimizerMethod::default(),
            stop_rule: StopRule::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BarycenterProblem {
    pub inputs: Vec<SpectralMeasure>,
    pub weights: Vec<f64>,
    /// Number of barycenter atoms; defaults to the largest input rank.
    pub rank: Option<usize>,
    pub eta: f64,
    pub eigenvalue_metric: EigenvalueMetric,
    pub objective: BarycenterObjective,
    pub optimizer: OptimizerConfig,
    pub optimize_control_points: bool,
    /// Number of control points for non-linear kernels.
    pub control_points: Option<usize>,
}

impl BarycenterProblem {
    pub fn new(inputs: Vec<SpectralMeasure>, weights: Vec<f64>) -> Self {
        Self {
            inputs,
            weights,
            rank: None,
            eta: 0.5,
            eigenvalue_metric: EigenvalueMetric::default(),
            objective: BarycenterObjective::default(),
            optimizer: OptimizerConfig::default(),
            optimize_control_points: false,
            control_points: None,
        }
    }

    pub fn resolved_rank(&self) -> usize {
        self.rank
            .unwrap_or_else(|| self.inputs.iter().map(|m| m.total_multiplicity()).max().unwrap_or(0))
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(SgotError::Parameter("barycenter needs at least one input".into()));
        }
        if self.weights.len() != self.inputs.len() {
            return Err(SgotError::Parameter(format!(
                "{} weights for {} inputs",
                self.weights.len(),
                self.inputs.len()
            )));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(SgotError::Parameter("weights must be nonnegative".into()));
        }
        let s: f64 = self.weights.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(SgotError::Parameter(format!("weights sum to {s}, expected 1")));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(SgotError::Parameter(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        let kernel = self.inputs[0].kernel;
        if self.inputs.iter().any(|m| m.kernel != kernel) {
            return Err(SgotError::IncompatibleSystems("inputs use different kernels".into()));
        }
        if self.inputs.iter().any(|m| m.is_empty()) {
            return Err(SgotError::EmptyMeasure);
        }
        let r = self.resolved_rank();
        let total: usize = self.inputs.iter().map(|m| m.total_multiplicity()).sum();
        if r == 0 || r > total {
            return Err(SgotError::Parameter(format!(
                "barycenter rank {r} must lie in 1..={total} (total input modes)"
            )));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return Err(SgotError::Parameter(format!("learning rate must be positive, got {}", o.lr)));
        }
        if !(o.stop_tol >= 0.0) {
            return Err(SgotError::Parameter("stop tolerance must be >= 0".into()));
        }
        if self.objective == BarycenterObjective::HilbertSchmidt {
            if !kernel.is_linear() {
                return Err(SgotError::IncompatibleSystems(
                    "the Hilbert-Schmidt objective needs the linear kernel".into(),
                ));
            }
            if self.optimize_control_points {
                return Err(SgotError::Parameter(
                    "control points are not optimized under the Hilbert-Schmidt objective".into(),
                ));
            }
            let dt = self.inputs[0].dt;
            if self.inputs.iter().any(|m| (m.dt - dt).abs() > 1e-12 * dt) {
                return Err(SgotError::IncompatibleSystems(
                    "the Hilbert-Schmidt objective needs a common sampling interval".into(),
                ));
            }
        }
        if let Some(0) = self.control_points {
            return Err(SgotError::Parameter("control point count must be >= 1".into()));
        }
        Ok(())
    }

    /// Resample linear-kernel inputs onto the finest common window layout
    /// when their feature dimensions differ.
    fn aligned_inputs(&self) -> Result<Vec<SpectralMeasure>> {
        let dims: Vec<usize> = self.inputs.iter().map(|m| m.x_points.len()).collect();
        if !self.inputs[0].kernel.is_linear() || dims.iter().all(|&d| d == dims[0]) {
            return Ok(self.inputs.clone());
        }
        let finest = self
            .inputs
            .iter()
            .filter_map(|m| m.window)
            .max_by_key(|w| w.context)
            .ok_or_else(|| SgotError::IncompatibleSystems("feature dimensions differ".into()))?;
        self.inputs
            .iter()
            .map(|m| match m.window {
                Some(w) if windows_match(&w, &finest) => m.resample(&finest),
                _ => Err(SgotError::IncompatibleSystems("feature dimensions differ".into())),
            })
            .collect()
    }
}

/// Parameters of the barycentric operator.
#[derive(Debug, Clone, PartialEq)]
pub struct BarycenterParams {
    /// Generator eigenvalues.
    pub lambda: Vec<C64>,
    /// Left coefficients, `n x r`.
    pub alpha: DMatrix<C64>,
    /// Right coefficients, `n x r`.
    pub beta: DMatrix<C64>,
    /// Control points, `n x d`.
    pub x: DMatrix<f64>,
    pub kernel: KernelSpec,
}

impl BarycenterParams {
    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    /// Identity control points under the linear kernel are the feature basis.
    pub fn representers(&self) -> Representers {
        let x = &self.x;
        if self.kernel.is_linear() && x.is_square() && *x == DMatrix::identity(x.nrows(), x.ncols()) {
            Representers::Features(x.nrows())
        } else {
            Representers::Points(x.clone())
        }
    }

    pub fn self_gram(&self) -> Result<Option<DMatrix<f64>>> {
        self.representers().self_gram(&self.kernel)
    }

    /// `(|alpha^* K beta - I|_F, max_j |beta_j^* K beta_j - 1|)`.
    pub fn constraint_residuals(&self) -> Result<(f64, f64)> {
        let k = self.self_gram()?;
        let kb = projection::apply_k(k.as_ref(), &self.beta);
        let r = self.rank();
        let ab = self.alpha.adjoint() * &kb - DMatrix::<C64>::identity(r, r);
        let bb = self.beta.adjoint() * &kb;
        let worst = (0..r).map(|j| (bb[(j, j)].re - 1.0).abs()).fold(0.0_f64, f64::max);
        Ok((ab.norm(), worst))
    }

    /// The barycenter as a spectral measure with one atom of mass `1/r`
    /// per eigenvalue. Linear-kernel parameters are mapped to feature
    /// coordinates.
    pub fn to_measure(&self, dt: f64, window: Option<WindowLayout>) -> Result<SpectralMeasure> {
        let r = self.rank();
        let rep = self.representers();
        let (psi, xi, k, points) = if self.kernel.is_linear() {
            let (psi, xi) = match &rep {
                Representers::Features(_) => (self.beta.clone(), self.alpha.clone()),
                Representers::Points(x) => {
                    let ft = to_complex(&x.transpose());
                    (&ft * &self.beta, &ft * &self.alpha)
                }
            };
            (psi, xi, None, Representers::Features(self.x.ncols()))
        } else {
            (self.beta.clone(), self.alpha.clone(), self.self_gram()?, rep)
        };
        let mut atoms = Vec::with_capacity(r);
        for j in 0..r {
            let p = DMatrix::from_columns(&[psi.column(j).into_owned()]);
            let q = DMatrix::from_columns(&[xi.column(j).into_owned()]);
            let (alpha, beta) = atom_bases(&p, &q, k.as_ref(), k.as_ref())?;
            atoms.push(SpectralAtom { lambda: self.lambda[j], multiplicity: 1, mass: 1.0 / r as f64, alpha, beta });
        }
        Ok(SpectralMeasure { kernel: self.kernel, dt, x_points: points.clone(), y_points: points, window, atoms })
    }
}

/// One input mode in barycenter coordinates, with its dual left vector
/// scaled so that `alpha^* K beta = 1`.
struct Mode {
    lambda: C64,
    beta: DVector<C64>,
    alpha: DVector<C64>,
}

fn control_points(problem: &BarycenterProblem, inputs: &[SpectralMeasure]) -> DMatrix<f64> {
    let kernel = inputs[0].kernel;
    if kernel.is_linear() {
        let d = inputs[0].x_points.len();
        return DMatrix::identity(d, d);
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for m in inputs {
        for p in [&m.x_points, &m.y_points] {
            let mat = p.to_matrix();
            rows.extend(mat.row_iter().map(|r| r.iter().cloned().collect()));
        }
    }
    let n = problem.control_points.unwrap_or(DEFAULT_CONTROL_POINTS).min(rows.len());
    let d = rows[0].len();
    let step = rows.len() as f64 / n as f64;
    DMatrix::from_fn(n, d, |i, c| rows[((i as f64 * step) as usize).min(rows.len() - 1)][c])
}

fn input_modes(
    m: &SpectralMeasure,
    rep: &Representers,
    kernel: &KernelSpec,
    k_pinv: Option<&DMatrix<f64>>,
) -> Result<Vec<Mode>> {
    let g_yx = m.y_points.cross_gram(kernel, &m.x_points)?;
    let mx = rep.cross_gram(kernel, &m.x_points)?;
    let my = rep.cross_gram(kernel, &m.y_points)?;
    let to_bary = |mat: Option<&DMatrix<f64>>, v: &DMatrix<C64>| {
        let mv = projection::apply_k(mat, v);
        projection::apply_k(k_pinv, &mv)
    };
    let mut modes = Vec::new();
    for atom in &m.atoms {
        let z = atom.alpha.adjoint() * projection::apply_k(g_yx.as_ref(), &atom.beta);
        let z_inv_h = z
            .try_inverse()
            .ok_or_else(|| SgotError::DefectiveOperator("left and right bases are orthogonal".into()))?
            .adjoint();
        let dual = &atom.alpha * z_inv_h;
        let b = to_bary(mx.as_ref(), &atom.beta);
        let a = to_bary(my.as_ref(), &dual);
        for c in 0..atom.multiplicity {
            modes.push(Mode { lambda: atom.lambda, beta: b.column(c).into_owned(), alpha: a.column(c).into_owned() });
        }
    }
    Ok(modes)
}

/// Greedy nearest-eigenvalue assignment of slots to modes; ties go to the
/// smaller slot, then the smaller mode index.
fn greedy_match(slots: &[C64], modes: &[C64], metric: EigenvalueMetric) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(slots.len() * modes.len());
    for (j, &s) in slots.iter().enumerate() {
        for (l, &m) in modes.iter().enumerate() {
            pairs.push((eigenvalue_distance_with(metric, s, m), j, l));
        }
    }
    pairs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut slot_of = vec![None; slots.len()];
    let mut used = vec![false; modes.len()];
    for (_, j, l) in pairs {
        if slot_of[j].is_none() && !used[l] {
            slot_of[j] = Some(l);
            used[l] = true;
        }
    }
    slot_of
}

/// Initial barycenter: weighted averages of greedily matched input
/// eigenvalues and eigenfunctions, re-projected onto the constraint set.
pub fn init_barycenter(problem: &BarycenterProblem) -> Result<BarycenterParams> {
    problem.validate()?;
    let inputs = problem.aligned_inputs()?;
    init_from(problem, &inputs)
}

fn init_from(problem: &BarycenterProblem, inputs: &[SpectralMeasure]) -> Result<BarycenterParams> {
    let kernel = inputs[0].kernel;
    let r = problem.resolved_rank();
    let x = control_points(problem, inputs);
    let shell = BarycenterParams {
        lambda: Vec::new(),
        alpha: DMatrix::zeros(x.nrows(), 0),
        beta: DMatrix::zeros(x.nrows(), 0),
        x: x.clone(),
        kernel,
    };
    let rep = shell.representers();
    let k = rep.self_gram(&kernel)?;
    let k_pinv = k.as_ref().map(|k| pinv_sym(k, 1e-12));
    let modes = inputs
        .iter()
        .map(|m| input_modes(m, &rep, &kernel, k_pinv.as_ref()))
        .collect::<Result<Vec<_>>>()?;

    let reference = (0..inputs.len())
        .max_by(|&a, &b| modes[a].len().cmp(&modes[b].len()).then(b.cmp(&a)))
        .expect("nonempty inputs");
    let order: Vec<usize> = std::iter::once(reference).chain((0..inputs.len()).filter(|&i| i != reference)).collect();
    let slots: Vec<C64> = order.iter().flat_map(|&i| modes[i].iter().map(|m| m.lambda)).take(r).collect();
    let slot_source: Vec<(usize, usize)> = order
        .iter()
        .flat_map(|&i| (0..modes[i].len()).map(move |l| (i, l)))
        .take(r)
        .collect();

    let matches: Vec<Vec<Option<usize>>> = modes
        .iter()
        .map(|ms| greedy_match(&slots, &ms.iter().map(|m| m.lambda).collect::<Vec<_>>(), problem.eigenvalue_metric))
        .collect();

    let n = x.nrows();
    let mut lambda = vec![ZERO; r];
    let mut beta = DMatrix::<C64>::zeros(n, r);
    let mut alpha = DMatrix::<C64>::zeros(n, r);
    for j in 0..r {
        let mut members: Vec<(f64, &Mode)> = (0..inputs.len())
            .filter_map(|i| matches[i][j].map(|l| (problem.weights[i], &modes[i][l])))
            .collect();
        if members.iter().map(|(w, _)| w).sum::<f64>() <= 0.0 {
            let (i, l) = slot_source[j];
            members = vec![(1.0, &modes[i][l])];
        }
        let total: f64 = members.iter().map(|(w, _)| w).sum();
        let (_, anchor) = members
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(ib.cmp(ia)))
            .map(|(_, m)| *m)
            .expect("slot has members");
        let k_anchor = projection::apply_k(k.as_ref(), &DMatrix::from_columns(&[anchor.beta.clone()]));
        let mut lam = ZERO;
        let mut b = DVector::<C64>::zeros(n);
        let mut a = DVector::<C64>::zeros(n);
        for (w, m) in &members {
            let c = k_anchor.column(0).dotc(&m.beta);
            let phase = if c.norm() > 0.0 { c.conj() / c.norm() } else { C64::new(1.0, 0.0) };
            let f = C64::new(w / total, 0.0);
            lam += m.lambda * f;
            b += &m.beta * (phase * f);
            a += &m.alpha * (phase * f);
        }
        lambda[j] = lam;
        beta.set_column(j, &b);
        alpha.set_column(j, &a);
    }
    let beta = normalize_columns(&beta, k.as_ref())?;
    let alpha = project_alpha(&alpha, &beta, k.as_ref())?;
    Ok(BarycenterParams { lambda, alpha, beta, x, kernel })
}

/// Exact optimal plans between the barycenter and every input.
pub fn update_plans(params: &BarycenterParams, problem: &BarycenterProblem) -> Result<Vec<TransportPlan>> {
    let ctx = Context::new(problem)?;
    let geom = ctx.geometry(params)?;
    plans_with(params, &ctx, &geom)
}

/// Which block of parameters a descent phase moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    Lambda,
    ControlPoints,
    Beta,
    Alpha,
}

/// Moment estimates of one parameter block.
#[derive(Debug, Clone, Default)]
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    fn direction(&mut self, g: &[f64]) -> Vec<f64> {
        if self.m.len() != g.len() {
            self.m = vec![0.0; g.len()];
            self.v = vec![0.0; g.len()];
            self.t = 0;
        }
        self.t += 1;
        let c1 = 1.0 - ADAM_B1.powi(self.t);
        let c2 = 1.0 - ADAM_B2.powi(self.t);
        g.iter()
            .enumerate()
            .map(|(i, &gi)| {
                self.m[i] = ADAM_B1 * self.m[i] + (1.0 - ADAM_B1) * gi;
                self.v[i] = ADAM_B2 * self.v[i] + (1.0 - ADAM_B2) * gi * gi;
                (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + ADAM_EPS)
            })
            .collect()
    }
}

fn pack_c(z: &[C64]) -> Vec<f64> {
    z.iter().flat_map(|c| [c.re, c.im]).collect()
}

fn unpack_c(v: &[f64]) -> Vec<C64> {
    v.chunks(2).map(|p| C64::new(p[0], p[1])).collect()
}

/// Search direction for one block: the raw gradient, or the Adam update.
fn block_gradient(g: &Gradient, block: Block) -> Vec<f64> {
    match block {
        Block::Lambda => pack_c(&g.lambda),
        Block::Beta => pack_c(g.beta.as_slice()),
        Block::Alpha => pack_c(g.alpha.as_slice()),
        Block::ControlPoints => g.x.as_ref().expect("control-point gradient").as_slice().to_vec(),
    }
}

/// Take a step of length `lr` along `-dir` on one block, then restore the
/// constraints.
fn step_block(
    params: &BarycenterParams,
    block: Block,
    dir: &[f64],
    lr: f64,
    ctx: &Context,
) -> Result<(BarycenterParams, Option<Geometry>)> {
    let mut p = params.clone();
    match block {
        Block::Lambda => {
            for (l, d) in p.lambda.iter_mut().zip(unpack_c(dir)) {
                *l -= d * lr;
            }
            Ok((p, None))
        }
        Block::ControlPoints => {
            for (x, d) in p.x.iter_mut().zip(dir) {
                *x -= lr * d;
            }
            let k = p.self_gram()?;
            p.beta = normalize_columns(&p.beta, k.as_ref())?;
            p.alpha = project_alpha(&p.alpha, &p.beta, k.as_ref())?;
            let geom = ctx.geometry(&p)?;
            Ok((p, Some(geom)))
        }
        Block::Beta => {
            let d = DMatrix::from_column_slice(p.beta.nrows(), p.beta.ncols(), &unpack_c(dir));
            let k = p.self_gram()?;
            p.beta = normalize_columns(&(&p.beta - d * C64::new(lr, 0.0)), k.as_ref())?;
            p.alpha = project_alpha(&p.alpha, &p.beta, k.as_ref())?;
            Ok((p, None))
        }
        Block::Alpha => {
            let d = DMatrix::from_column_slice(p.alpha.nrows(), p.alpha.ncols(), &unpack_c(dir));
            let k = p.self_gram()?;
            p.alpha = project_alpha(&(&p.alpha - d * C64::new(lr, 0.0)), &p.beta, k.as_ref())?;
            Ok((p, None))
        }
    }
}

/// Mutable solver state for one run.
struct Descent<'a> {
    ctx: Context<'a>,
    params: BarycenterParams,
    geom: Geometry,
    plans: Vec<TransportPlan>,
    value: f64,
    adam: [AdamState; 4],
}

impl<'a> Descent<'a> {
    fn new(ctx: Context<'a>, params: BarycenterParams) -> Result<Self> {
        let geom = ctx.geometry(&params)?;
        let plans = plans_with(&params, &ctx, &geom)?;
        let value = objective_with(&params, &plans, &ctx, &geom)?;
        Ok(Self { ctx, params, geom, plans, value, adam: Default::default() })
    }

    fn refresh_plans(&mut self) -> Result<()> {
        self.plans = plans_with(&self.params, &self.ctx, &self.geom)?;
        self.value = objective_with(&self.params, &self.plans, &self.ctx, &self.geom)?;
        Ok(())
    }

    fn run_block(&mut self, block: Block, steps: usize, lr: f64, method: OptimizerMethod) -> Result<()> {
        let slot = block as usize;
        for _ in 0..steps {
            let g = gradient_with(&self.params, &self.plans, &self.ctx, &self.geom, block == Block::ControlPoints)?;
            let raw = block_gradient(&g, block);
            match method {
                OptimizerMethod::GradientDescent => {
                    if raw.iter().all(|v| *v == 0.0) {
                        break;
                    }
                    let mut t = lr;
                    let mut accepted = false;
                    for _ in 0..MAX_HALVINGS {
                        let (cand, geom) = step_block(&self.params, block, &raw, t, &self.ctx)?;
                        let geom_ref = geom.as_ref().unwrap_or(&self.geom);
                        let v = objective_with(&cand, &self.plans, &self.ctx, geom_ref)?;
                        if v <= self.value {
                            self.params = cand;
                            if let Some(g) = geom {
                                self.geom = g;
                            }
                            self.value = v;
                            accepted = true;
                            break;
                        }
                        t *= 0.5;
                    }
                    if !accepted {
                        break;
                    }
                }
                OptimizerMethod::Adam => {
                    let dir = self.adam[slot].direction(&raw);
                    let (cand, geom) = step_block(&self.params, block, &dir, lr, &self.ctx)?;
                    if let Some(g) = geom {
                        self.geom = g;
                    }
                    self.value = objective_with(&cand, &self.plans, &self.ctx, &self.geom)?;
                    self.params = cand;
                }
            }
        }
        Ok(())
    }
}

/// Run `steps` descent steps on the eigenvalues with the plans fixed.
pub fn update_eigenvalues(
    params: &BarycenterParams,
    plans: &[TransportPlan],
    problem: &BarycenterProblem,
    steps: usize,
    lr: f64,
) -> Result<Vec<C64>> {
    Ok(run_single(params, plans, problem, Block::Lambda, steps, lr)?.lambda)
}

/// Descent steps on the control points; the eigenfunctions are re-normalized
/// and re-projected after each move. Returns the new points unchanged when
/// the problem does not optimize them.
pub fn update_control_points(
    params: &BarycenterParams,
    plans: &[TransportPlan],
    problem: &BarycenterProblem,
    steps: usize,
    lr: f64,
) -> Result<DMatrix<f64>> {
    if !problem.optimize_control_points {
        return Ok(params.x.clone());
    }
    Ok(run_single(params, plans, problem, Block::ControlPoints, steps, lr)?.x)
}

/// Descent steps on the right eigenfunctions, each followed by projection
/// onto the unit sphere.
pub fn update_right_eigenfunctions(
    params: &BarycenterParams,
    plans: &[TransportPlan],
    problem: &BarycenterProblem,
    steps: usize,
    lr: f64,
) -> Result<DMatrix<C64>> {
    Ok(run_single(params, plans, problem, Block::Beta, steps, lr)?.beta)
}

/// Descent steps on the left eigenfunctions, each followed by the affine
/// projection onto `alpha^* K beta = I`.
pub fn update_left_eigenfunctions(
    params: &BarycenterParams,
    plans: &[TransportPlan],
    problem: &BarycenterProblem,
    steps: usize,
    lr: f64,
) -> Result<DMatrix<C64>> {
    Ok(run_single(params, plans, problem, Block::Alpha, steps, lr)?.alpha)
}

fn run_single(
    params: &BarycenterParams,
    plans: &[TransportPlan],
    problem: &BarycenterProblem,
    block: Block,
    steps: usize,
    lr: f64,
) -> Result<BarycenterParams> {
    let ctx = Context::new(problem)?;
    let geom = ctx.geometry(params)?;
    let value = objective_with(params, plans, &ctx, &geom)?;
    let mut d = Descent { ctx, params: params.clone(), geom, plans: plans.to_vec(), value, adam: Default::default() };
    d.run_block(block, steps, lr, OptimizerMethod::GradientDescent)?;
    Ok(d.params)
}

/// One row of the objective trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub cycle: usize,
    pub objective: f64,
    pub alpha_residual: f64,
    pub beta_residual: f64,
}

#[derive(Debug, Clone)]
pub struct BarycenterResult {
    pub params: BarycenterParams,
    pub plans: Vec<TransportPlan>,
    /// Objective after initialization (cycle 0) and after every cycle.
    pub trace: Vec<TraceEntry>,
    /// Objective with plans re-optimized at the returned parameters.
    pub final_objective: f64,
    pub converged: bool,
    pub warnings: Vec<String>,
    pub dt: f64,
    pub window: Option<WindowLayout>,
}

impl BarycenterResult {
    pub fn measure(&self) -> Result<SpectralMeasure> {
        self.params.to_measure(self.dt, self.window)
    }

    pub fn write_trace_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["cycle", "objective", "alpha_residual", "beta_residual"])
            .map_err(csv_err)?;
        for t in &self.trace {
            wtr.write_record([
                t.cycle.to_string(),
                format!("{:e}", t.objective),
                format!("{:e}", t.alpha_residual),
                format!("{:e}", t.beta_residual),
            ])
            .map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> SgotError {
    SgotError::Io(std::io::Error::other(e.to_string()))
}

fn param_distance(a: &BarycenterParams, b: &BarycenterParams) -> f64 {
    let dl: f64 = a.lambda.iter().zip(&b.lambda).map(|(x, y)| (x - y).norm_sqr()).sum();
    (dl + (&a.alpha - &b.alpha).norm_squared() + (&a.beta - &b.beta).norm_squared() + (&a.x - &b.x).norm_squared())
        .sqrt()
}

/// Solve the weighted Fréchet mean problem by cyclic coordinate descent.
pub fn solve_barycenter(problem: &BarycenterProblem) -> Result<BarycenterResult> {
    problem.validate()?;
    let inputs = problem.aligned_inputs()?;
    let aligned = BarycenterProblem { inputs, ..problem.clone() };
    let params = init_from(&aligned, &aligned.inputs)?;
    solve_from(&aligned, params)
}

/// Solve starting from given parameters (which must satisfy the constraints).
pub fn solve_barycenter_from(problem: &BarycenterProblem, params: BarycenterParams) -> Result<BarycenterResult> {
    problem.validate()?;
    let inputs = problem.aligned_inputs()?;
    let aligned = BarycenterProblem { inputs, ..problem.clone() };
    solve_from(&aligned, params)
}

fn solve_from(problem: &BarycenterProblem, params: BarycenterParams) -> Result<BarycenterResult> {
    let opt = problem.optimizer;
    let ctx = Context::new(problem)?;
    let dt = ctx.dt;
    let window = problem.inputs.iter().filter_map(|m| m.window).max_by_key(|w| w.context);
    let mut d = Descent::new(ctx, params)?;
    let entry = |cycle: usize, d: &Descent| -> Result<TraceEntry> {
        let (a, b) = d.params.constraint_residuals()?;
        Ok(TraceEntry { cycle, objective: d.value, alpha_residual: a, beta_residual: b })
    };
    let mut trace = vec![entry(0, &d)?];
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut stalled = 0usize;
    for cycle in 1..=opt.max_cycles {
        let before = d.params.clone();
        let prev = d.value;
        d.refresh_plans()?;
        d.run_block(Block::Lambda, opt.inner_steps, opt.lr, opt.method)?;
        if problem.optimize_control_points {
            d.run_block(Block::ControlPoints, opt.inner_steps, opt.lr, opt.method)?;
        }
        d.run_block(Block::Beta, opt.inner_steps, opt.lr, opt.method)?;
        d.run_block(Block::Alpha, opt.inner_steps, opt.lr, opt.method)?;
        trace.push(entry(cycle, &d)?);
        let delta = match opt.stop_rule {
            StopRule::ObjectiveDelta => (prev - d.value).abs(),
            StopRule::ParameterDelta => param_distance(&before, &d.params),
        };
        if d.value >= prev {
            stalled += 1;
        } else {
            stalled = 0;
        }
        if delta < opt.stop_tol {
            converged = true;
            break;
        }
        if stalled == STAGNATION_CYCLES {
            let msg = format!("objective has not decreased for {STAGNATION_CYCLES} cycles (cycle {cycle})");
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    d.refresh_plans()?;
    Ok(BarycenterResult {
        params: d.params,
        plans: d.plans,
        trace,
        final_objective: d.value,
        converged,
        warnings,
        dt,
        window,
    })
}
