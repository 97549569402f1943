//! Discrete spectral distributions of estimated operators.
//!
//! Each atom carries a generator eigenvalue, a mass, and RKHS-orthonormal
//! bases of its right (`beta`) and left (`alpha`) eigenfunctions. Right
//! functions live on the `x_points` representers and left functions on the
//! `y_points` representers. Within an atom the pair is phase-aligned so that
//! `beta alpha^*` points along the atom's spectral projector.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SgotError};
use crate::estimation::{eigendecompose, EigenSystem, EstimatedOperator, WindowLayout};
use crate::kernels::{gram, self_gram, KernelSpec};
use crate::linalg::{polar_unitary, to_complex, C64, ZERO};

pub const DEFAULT_GROUP_TOL: f64 = 1e-8;
/// Most negative squared Grassmann distance attributed to rounding.
pub const RADICAND_GATE: f64 = -1e-8;

/// Representer points of a measure. `Features(d)` stands for the identity
/// points of the linear kernel, on which coefficients are weight vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum Representers {
    Features(usize),
    Points(DMatrix<f64>),
}

impl Representers {
    pub fn len(&self) -> usize {
        match self {
            Representers::Features(d) => *d,
            Representers::Points(p) => p.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Representers::Features(d) => *d,
            Representers::Points(p) => p.ncols(),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        match self {
            Representers::Features(d) => DMatrix::identity(*d, *d),
            Representers::Points(p) => p.clone(),
        }
    }

    /// Cross-Gram matrix against `other`; `None` means the identity.
    pub fn cross_gram(&self, kernel: &KernelSpec, other: &Representers) -> Result<Option<DMatrix<f64>>> {
        match (self, other) {
            (Representers::Features(a), Representers::Features(b)) => {
                if a != b {
                    return Err(SgotError::IncompatibleSystems(format!(
                        "feature dimensions differ: {a} vs {b}"
                    )));
                }
                Ok(None)
            }
            (Representers::Features(_), Representers::Points(p)) => {
                if !kernel.is_linear() {
                    return Err(SgotError::IncompatibleSystems("feature basis needs the linear kernel".into()));
                }
                if p.ncols() != self.len() {
                    return Err(SgotError::IncompatibleSystems("state dimensions differ".into()));
                }
                Ok(Some(p.transpose()))
            }
            (Representers::Points(p), Representers::Features(d)) => {
                if !kernel.is_linear() {
                    return Err(SgotError::IncompatibleSystems("feature basis needs the linear kernel".into()));
                }
                if p.ncols() != *d {
                    return Err(SgotError::IncompatibleSystems("state dimensions differ".into()));
                }
                Ok(Some(p.clone()))
            }
            (Representers::Points(a), Representers::Points(b)) => {
                if a.ncols() != b.ncols() {
                    return Err(SgotError::IncompatibleSystems(format!(
                        "state dimensions differ: {} vs {}",
                        a.ncols(),
                        b.ncols()
                    )));
                }
                Ok(Some(gram(kernel, a, b)?))
            }
        }
    }

    pub fn self_gram(&self, kernel: &KernelSpec) -> Result<Option<DMatrix<f64>>> {
        match self {
            Representers::Features(_) => Ok(None),
            Representers::Points(p) => Ok(Some(self_gram(kernel, p)?)),
        }
    }
}

/// `a^* M b`, with `M = None` standing for the identity.
pub fn weighted_inner(a: &DMatrix<C64>, m: Option<&DMatrix<f64>>, b: &DMatrix<C64>) -> DMatrix<C64> {
    match m {
        None => a.adjoint() * b,
        Some(m) => a.adjoint() * (to_complex(m) * b),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralAtom {
    /// Generator eigenvalue: real part a decay rate in 1/s, imaginary part
    /// an angular frequency in rad/s.
    pub lambda: C64,
    pub multiplicity: usize,
    pub mass: f64,
    /// Left eigenfunction basis on `y_points`, `n_y x m`.
    pub alpha: DMatrix<C64>,
    /// Right eigenfunction basis on `x_points`, `n_x x m`.
    pub beta: DMatrix<C64>,
}

impl SpectralAtom {
    /// Frequency in Hz.
    pub fn frequency(&self) -> f64 {
        self.lambda.im / (2.0 * std::f64::consts::PI)
    }

    /// Modulus of the transfer eigenvalue at lag `dt`.
    pub fn transfer_modulus(&self, dt: f64) -> f64 {
        (self.lambda.re * dt).exp()
    }

    pub fn transfer_eigenvalue(&self, dt: f64) -> C64 {
        (self.lambda * dt).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMeasure {
    pub kernel: KernelSpec,
    pub dt: f64,
    pub x_points: Representers,
    pub y_points: Representers,
    pub window: Option<WindowLayout>,
    pub atoms: Vec<SpectralAtom>,
}

/// Orthonormalize `psi` in the metric `k`: returns `(psi R^{-1}, R)` with
/// `R^* R = psi^* k psi`.
fn orthonormalize(psi: &DMatrix<C64>, k: Option<&DMatrix<f64>>) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let g = weighted_inner(psi, k, psi);
    let g = (&g + g.adjoint()) * C64::new(0.5, 0.0);
    let chol = Cholesky::new(g)
        .ok_or_else(|| SgotError::Numerical("eigenfunction block is numerically rank deficient".into()))?;
    let r = chol.l().adjoint();
    let rinv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| SgotError::Numerical("singular eigenfunction Gram factor".into()))?;
    Ok((psi * rinv, r))
}

/// Orthonormal, phase-aligned bases for one atom from raw biorthogonal
/// eigenfunction coefficients.
pub fn atom_bases(
    psi: &DMatrix<C64>,
    xi: &DMatrix<C64>,
    kx: Option<&DMatrix<f64>>,
    ky: Option<&DMatrix<f64>>,
) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let (b, r_psi) = orthonormalize(psi, kx)?;
    let (a, r_xi) = orthonormalize(xi, ky)?;
    let z = &r_psi * r_xi.adjoint();
    let w = polar_unitary(&z);
    Ok((a * w.adjoint(), b))
}

/// Convert weight-space coefficients when the kernel is linear: a function
/// `sum_i c_i <p_i, .>` equals `<P^T c, .>`.
fn compact(points: &DMatrix<f64>, coeffs: &DMatrix<C64>) -> DMatrix<C64> {
    to_complex(&points.transpose()) * coeffs
}

fn is_identity(p: &DMatrix<f64>) -> bool {
    p.is_square() && p == &DMatrix::identity(p.nrows(), p.ncols())
}

/// Group eigenvalues (in transfer space) whose distance to a group's first
/// member is at most `tol`.
pub fn group_eigenvalues(mu: &[C64], tol: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, &m) in mu.iter().enumerate() {
        match groups.iter_mut().find(|g| (mu[g[0]] - m).norm() <= tol) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    groups
}

pub fn build_measure(eigs: &EigenSystem, group_tol: f64) -> Result<SpectralMeasure> {
    if eigs.is_empty() {
        return Err(SgotError::EmptyMeasure);
    }
    if !(group_tol >= 0.0) {
        return Err(SgotError::Parameter(format!("group tolerance must be >= 0, got {group_tol}")));
    }
    let kernel = eigs.kernel;
    let (x_points, y_points, right, left) = if kernel.is_linear() {
        let d = eigs.right_points.ncols();
        let r = if is_identity(&eigs.right_points) {
            eigs.right_coeffs.clone()
        } else {
            compact(&eigs.right_points, &eigs.right_coeffs)
        };
        let l = if is_identity(&eigs.left_points) {
            eigs.left_coeffs.clone()
        } else {
            compact(&eigs.left_points, &eigs.left_coeffs)
        };
        (Representers::Features(d), Representers::Features(d), r, l)
    } else {
        (
            Representers::Points(eigs.right_points.clone()),
            Representers::Points(eigs.left_points.clone()),
            eigs.right_coeffs.clone(),
            eigs.left_coeffs.clone(),
        )
    };
    let kx = x_points.self_gram(&kernel)?;
    let ky = y_points.self_gram(&kernel)?;
    let groups = group_eigenvalues(&eigs.mu, group_tol);
    let total = eigs.len() as f64;
    let mut atoms = Vec::with_capacity(groups.len());
    for g in groups {
        let psi = DMatrix::from_columns(&g.iter().map(|&i| right.column(i).into_owned()).collect::<Vec<_>>());
        let xi = DMatrix::from_columns(&g.iter().map(|&i| left.column(i).into_owned()).collect::<Vec<_>>());
        let (alpha, beta) = atom_bases(&psi, &xi, kx.as_ref(), ky.as_ref())?;
        let mean_mu = g.iter().fold(ZERO, |acc, &i| acc + eigs.mu[i]) / g.len() as f64;
        if mean_mu.norm() == 0.0 {
            return Err(SgotError::ZeroEigenvalue);
        }
        atoms.push(SpectralAtom {
            lambda: mean_mu.ln() / eigs.dt,
            multiplicity: g.len(),
            mass: g.len() as f64 / total,
            alpha,
            beta,
        });
    }
    Ok(SpectralMeasure { kernel, dt: eigs.dt, x_points, y_points, window: eigs.window, atoms })
}

/// Estimate-to-measure convenience: eigendecompose and build with the
/// default grouping tolerance.
pub fn measure_from_operator(op: &EstimatedOperator) -> Result<SpectralMeasure> {
    build_measure(&eigendecompose(op)?, DEFAULT_GROUP_TOL)
}

/// Which ground distance compares eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenvalueMetric {
    /// Euclidean distance between `(Re lambda, Im lambda / 2 pi)` pairs.
    #[default]
    DecayFrequency,
    /// Chord `|e^lambda - e^lambda'|`; a pseudometric, since it identifies
    /// frequencies differing by whole turns.
    PolarChord,
}

pub fn eigenvalue_distance(a: C64, b: C64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let dr = a.re - b.re;
    let df = (a.im - b.im) / two_pi;
    dr.hypot(df)
}

pub fn eigenvalue_distance_with(metric: EigenvalueMetric, a: C64, b: C64) -> f64 {
    match metric {
        EigenvalueMetric::DecayFrequency => eigenvalue_distance(a, b),
        EigenvalueMetric::PolarChord => (a.exp() - b.exp()).norm(),
    }
}

/// Cross-Gram matrices between the representers of two measures.
#[derive(Debug, Clone)]
pub struct CrossGrams {
    pub mx: Option<DMatrix<f64>>,
    pub my: Option<DMatrix<f64>>,
    /// Both measures use the same representers, so `mx`/`my` are the
    /// self-Gram matrices and coefficient differences are meaningful.
    pub shared: bool,
}

impl CrossGrams {
    pub fn between(p: &SpectralMeasure, q: &SpectralMeasure) -> Result<Self> {
        if p.kernel != q.kernel {
            return Err(SgotError::IncompatibleSystems(format!(
                "kernels differ: {:?} vs {:?}",
                p.kernel, q.kernel
            )));
        }
        Ok(Self {
            mx: p.x_points.cross_gram(&p.kernel, &q.x_points)?,
            my: p.y_points.cross_gram(&p.kernel, &q.y_points)?,
            shared: p.x_points == q.x_points && p.y_points == q.y_points,
        })
    }

    /// Identity Gram matrices of a common feature space.
    pub fn features() -> Self {
        Self { mx: None, my: None, shared: true }
    }
}

/// How the subspace term compares two atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrassmannForm {
    /// `m_a + m_b - 2 Re Tr((beta_a^* M beta_b)^* (alpha_a^* M alpha_b))`:
    /// the Hilbert-Schmidt distance between the unit operators
    /// `beta alpha^*`. Can exceed `sqrt(m_a + m_b)` for oblique pairs.
    #[default]
    Trace,
    /// Distance between orthogonal projectors onto `span{beta_k alpha_k^*}`
    /// in Hilbert-Schmidt space; phase-free and bounded by `m_a + m_b`.
    Projector,
}

/// Squared trace-form distance between two atoms.
pub fn grassmann_distance_sq(a: &SpectralAtom, b: &SpectralAtom, grams: &CrossGrams) -> Result<f64> {
    grassmann_distance_sq_with(GrassmannForm::Trace, a, b, grams)
}

pub fn grassmann_distance_sq_with(
    form: GrassmannForm,
    a: &SpectralAtom,
    b: &SpectralAtom,
    grams: &CrossGrams,
) -> Result<f64> {
    if form == GrassmannForm::Trace && grams.shared && a.multiplicity == b.multiplicity {
        return Ok(trace_form_by_difference(a, b, grams));
    }
    let bb = weighted_inner(&a.beta, grams.mx.as_ref(), &b.beta);
    let aa = weighted_inner(&a.alpha, grams.my.as_ref(), &b.alpha);
    let cross = match form {
        GrassmannForm::Trace => bb.iter().zip(aa.iter()).map(|(x, y)| (x * y.conj()).re).sum::<f64>(),
        GrassmannForm::Projector => bb.iter().zip(aa.iter()).map(|(x, y)| x.norm_sqr() * y.norm_sqr()).sum(),
    };
    let rad = a.multiplicity as f64 + b.multiplicity as f64 - 2.0 * cross;
    if rad < RADICAND_GATE {
        return Err(SgotError::Numerical(format!(
            "negative squared Grassmann distance {rad:e}; bases are not orthonormal"
        )));
    }
    Ok(rad.max(0.0))
}

/// `|B_a A_a^* - B_b A_b^*|^2` expanded around the coefficient differences,
/// which avoids the cancellation in `m_a + m_b - 2 Re(...)` for nearby atoms.
fn trace_form_by_difference(a: &SpectralAtom, b: &SpectralAtom, grams: &CrossGrams) -> f64 {
    let db = &a.beta - &b.beta;
    let da = &a.alpha - &b.alpha;
    let kx = grams.mx.as_ref();
    let ky = grams.my.as_ref();
    let nb = weighted_inner(&db, kx, &db).trace().re;
    let na = weighted_inner(&da, ky, &da).trace().re;
    let cross = (weighted_inner(&db, kx, &b.beta) * weighted_inner(&da, ky, &a.alpha)).trace().re;
    (nb + na + 2.0 * cross).max(0.0)
}

pub fn grassmann_distance(a: &SpectralAtom, b: &SpectralAtom, grams: &CrossGrams) -> Result<f64> {
    Ok(grassmann_distance_sq(a, b, grams)?.sqrt())
}

pub fn grassmann_distance_with(
    form: GrassmannForm,
    a: &SpectralAtom,
    b: &SpectralAtom,
    grams: &CrossGrams,
) -> Result<f64> {
    Ok(grassmann_distance_sq_with(form, a, b, grams)?.sqrt())
}

impl SpectralMeasure {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.mass).collect()
    }

    pub fn lambdas(&self) -> Vec<C64> {
        self.atoms.iter().map(|a| a.lambda).collect()
    }

    pub fn total_multiplicity(&self) -> usize {
        self.atoms.iter().map(|a| a.multiplicity).sum()
    }

    /// Check orthonormality and mass invariants, returning the worst
    /// orthonormality defect.
    pub fn check(&self) -> Result<f64> {
        let kx = self.x_points.self_gram(&self.kernel)?;
        let ky = self.y_points.self_gram(&self.kernel)?;
        let mut worst = 0.0_f64;
        for a in &self.atoms {
            let m = a.multiplicity;
            let id = DMatrix::<C64>::identity(m, m);
            worst = worst.max((weighted_inner(&a.beta, kx.as_ref(), &a.beta) - &id).norm());
            worst = worst.max((weighted_inner(&a.alpha, ky.as_ref(), &a.alpha) - &id).norm());
        }
        let total: f64 = self.atoms.iter().map(|a| a.mass).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(SgotError::Numerical(format!("masses sum to {total}")));
        }
        Ok(worst)
    }

    /// The operator rebuilt from the atoms, as a matrix on weight vectors.
    /// Only available on the feature basis of the linear kernel.
    pub fn explicit_matrix(&self) -> Result<DMatrix<f64>> {
        let d = match (&self.x_points, &self.y_points) {
            (Representers::Features(a), Representers::Features(b)) if a == b => *a,
            _ => {
                return Err(SgotError::IncompatibleSystems(
                    "explicit matrices need linear-kernel feature coordinates".into(),
                ))
            }
        };
        let mut e = DMatrix::<C64>::zeros(d, d);
        for a in &self.atoms {
            let mu = a.transfer_eigenvalue(self.dt);
            let ab = a.alpha.adjoint() * &a.beta;
            let inv = ab
                .try_inverse()
                .ok_or_else(|| SgotError::DefectiveOperator("left and right bases are orthogonal".into()))?;
            e += &a.beta * inv * a.alpha.adjoint() * mu;
        }
        Ok(e.map(|z| z.re))
    }

    /// Resample feature-coordinate bases onto another context-window layout
    /// covering the same time span, by linear interpolation in time.
    pub fn resample(&self, target: &WindowLayout) -> Result<SpectralMeasure> {
        let src = self.window.ok_or_else(|| {
            SgotError::IncompatibleSystems("measure carries no window layout to resample".into())
        })?;
        if !matches!(self.x_points, Representers::Features(_)) || !matches!(self.y_points, Representers::Features(_)) {
            return Err(SgotError::IncompatibleSystems("only feature-coordinate measures can be resampled".into()));
        }
        if src.ambient != target.ambient {
            return Err(SgotError::IncompatibleSystems("ambient dimensions differ".into()));
        }
        if src == *target {
            return Ok(self.clone());
        }
        let map = interpolation_matrix(&src, target);
        let mc = to_complex(&map);
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            let (alpha, beta) = atom_bases(&(&mc * &a.beta), &(&mc * &a.alpha), None, None)?;
            atoms.push(SpectralAtom { alpha, beta, ..a.clone() });
        }
        Ok(SpectralMeasure {
            x_points: Representers::Features(target.dim()),
            y_points: Representers::Features(target.dim()),
            window: Some(*target),
            atoms,
            ..self.clone()
        })
    }
}

/// Linear-interpolation map from window vectors on `src` to `dst`.
pub fn interpolation_matrix(src: &WindowLayout, dst: &WindowLayout) -> DMatrix<f64> {
    let amb = src.ambient;
    let mut m = DMatrix::zeros(dst.dim(), src.dim());
    let last = src.context.saturating_sub(1);
    for t in 0..dst.context {
        let s = (t as f64 * dst.dt / src.dt).clamp(0.0, last as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(last);
        let w = s - lo as f64;
        for c in 0..amb {
            m[(t * amb + c, lo * amb + c)] += 1.0 - w;
            if hi != lo {
                m[(t * amb + c, hi * amb + c)] += w;
            }
        }
    }
    m
}

/// Whether two window layouts cover the same duration to within one sample
/// of the coarser grid.
pub fn windows_match(a: &WindowLayout, b: &WindowLayout) -> bool {
    a.ambient == b.ambient && (a.span() - b.span()).abs() <= a.dt.max(b.dt) + 1e-12
}

/// Bring two feature-coordinate measures onto a common window layout (the
/// finer one) when their sampling differs but their window spans agree.
pub fn align_windows(p: &SpectralMeasure, q: &SpectralMeasure) -> Result<(SpectralMeasure, SpectralMeasure)> {
    if p.x_points.len() == q.x_points.len() || !p.kernel.is_linear() {
        return Ok((p.clone(), q.clone()));
    }
    match (p.window, q.window) {
        (Some(wp), Some(wq)) if windows_match(&wp, &wq) => {
            if wp.context >= wq.context {
                Ok((p.clone(), q.resample(&wp)?))
            } else {
                Ok((p.resample(&wq)?, q.clone()))
            }
        }
        _ => Err(SgotError::IncompatibleSystems(format!(
            "representer dimensions differ ({} vs {}) and windows cannot be aligned",
            p.x_points.len(),
            q.x_points.len()
        ))),
    }
}

// ---------------------------------------------------------------------------
// JSON form

#[derive(Serialize, Deserialize)]
struct PointsJson {
    rows: usize,
    cols: usize,
    /// Row-major entries.
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct AtomJson {
    lambda: [f64; 2],
    mass: f64,
    multiplicity: usize,
    /// Column-major `[re, im]` entries of the left basis.
    alpha: Vec<[f64; 2]>,
    /// Column-major `[re, im]` entries of the right basis.
    beta: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct MeasureJson {
    kernel: KernelSpec,
    dt: f64,
    feature_dim: Option<usize>,
    x_points: Option<PointsJson>,
    y_points: Option<PointsJson>,
    window: Option<WindowLayout>,
    atoms: Vec<AtomJson>,
}

fn points_json(r: &Representers) -> (Option<usize>, Option<PointsJson>) {
    match r {
        Representers::Features(d) => (Some(*d), None),
        Representers::Points(p) => (
            None,
            Some(PointsJson { rows: p.nrows(), cols: p.ncols(), data: p.transpose().as_slice().to_vec() }),
        ),
    }
}

fn points_from(dim: Option<usize>, p: Option<PointsJson>) -> Result<Representers> {
    match (dim, p) {
        (_, Some(p)) => {
            if p.data.len() != p.rows * p.cols {
                return Err(SgotError::Parse("point array has the wrong length".into()));
            }
            Ok(Representers::Points(DMatrix::from_row_slice(p.rows, p.cols, &p.data)))
        }
        (Some(d), None) => Ok(Representers::Features(d)),
        (None, None) => Err(SgotError::Parse("measure has neither feature_dim nor points".into())),
    }
}

fn flatten(m: &DMatrix<C64>) -> Vec<[f64; 2]> {
    m.iter().map(|z| [z.re, z.im]).collect()
}

fn unflatten(v: &[[f64; 2]], rows: usize, cols: usize) -> Result<DMatrix<C64>> {
    if v.len() != rows * cols {
        return Err(SgotError::Parse(format!(
            "basis has {} entries, expected {rows}x{cols}",
            v.len()
        )));
    }
    Ok(DMatrix::from_iterator(rows, cols, v.iter().map(|p| C64::new(p[0], p[1]))))
}

impl SpectralMeasure {
    pub fn to_json(&self) -> Result<String> {
        let (fdx, xp) = points_json(&self.x_points);
        let (_, yp) = points_json(&self.y_points);
        let j = MeasureJson {
            kernel: self.kernel,
            dt: self.dt,
            feature_dim: fdx,
            x_points: xp,
            y_points: yp,
            window: self.window,
            atoms: self
                .atoms
                .iter()
                .map(|a| AtomJson {
                    lambda: [a.lambda.re, a.lambda.im],
                    mass: a.mass,
                    multiplicity: a.multiplicity,
                    alpha: flatten(&a.alpha),
                    beta: flatten(&a.beta),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: MeasureJson = serde_json::from_str(s)?;
        j.kernel.validate()?;
        let x_points = points_from(j.feature_dim, j.x_points)?;
        let y_points = points_from(j.feature_dim, j.y_points)?;
        let mut atoms = Vec::with_capacity(j.atoms.len());
        for a in j.atoms {
            atoms.push(SpectralAtom {
                lambda: C64::new(a.lambda[0], a.lambda[1]),
                mass: a.mass,
                multiplicity: a.multiplicity,
                alpha: unflatten(&a.alpha, y_points.len(), a.multiplicity)?,
                beta: unflatten(&a.beta, x_points.len(), a.multiplicity)?,
            });
        }
        if atoms.is_empty() {
            return Err(SgotError::EmptyMeasure);
        }
        Ok(SpectralMeasure { kernel: j.kernel, dt: j.dt, x_points, y_points, window: j.window, atoms })
    }
}
