//! Distances between estimated systems: the spectral-Grassmann transport
//! distance and five baselines.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SgotError};
use crate::estimation::{eigendecompose, EstimatedOperator};
use crate::linalg::C64;
use crate::ot::wasserstein;
use crate::spectral_measure::{
    align_windows, build_measure, eigenvalue_distance_with, grassmann_distance_with, CrossGrams, EigenvalueMetric,
    GrassmannForm, SpectralMeasure, DEFAULT_GROUP_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Sgot,
    Sot,
    Got,
    #[serde(alias = "hs")]
    HilbertSchmidt,
    #[serde(alias = "op")]
    OperatorNorm,
    Martin,
}

impl MetricKind {
    pub const ALL: [MetricKind; 6] = [
        MetricKind::Sgot,
        MetricKind::Sot,
        MetricKind::Got,
        MetricKind::HilbertSchmidt,
        MetricKind::OperatorNorm,
        MetricKind::Martin,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Sgot => "sgot",
            MetricKind::Sot => "sot",
            MetricKind::Got => "got",
            MetricKind::HilbertSchmidt => "hs",
            MetricKind::OperatorNorm => "op",
            MetricKind::Martin => "martin",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgot" => Ok(MetricKind::Sgot),
            "sot" => Ok(MetricKind::Sot),
            "got" => Ok(MetricKind::Got),
            "hs" | "hilbert_schmidt" => Ok(MetricKind::HilbertSchmidt),
            "op" | "operator" | "operator_norm" => Ok(MetricKind::OperatorNorm),
            "martin" => Ok(MetricKind::Martin),
            other => Err(SgotError::Parameter(format!("unknown metric '{other}'"))),
        }
    }
}

/// Eigenvalue units for the eigenvalue-only transport baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SotUnits {
    #[default]
    Generator,
    Transfer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub kind: MetricKind,
    pub eta: f64,
    pub p: u32,
    pub martin_truncation: usize,
    pub eigenvalue_metric: EigenvalueMetric,
    pub grassmann_form: GrassmannForm,
    pub sot_units: SotUnits,
    /// Resample feature bases when two systems use different context-window
    /// sampling over the same time span.
    pub align_windows: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            kind: MetricKind::Sgot,
            eta: 0.5,
            p: 1,
            martin_truncation: 100,
            eigenvalue_metric: EigenvalueMetric::default(),
            grassmann_form: GrassmannForm::default(),
            sot_units: SotUnits::default(),
            align_windows: true,
        }
    }
}

impl MetricConfig {
    pub fn with_kind(kind: MetricKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(SgotError::Parameter(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        if self.p < 1 {
            return Err(SgotError::Parameter("p must be >= 1".into()));
        }
        if self.martin_truncation < 1 {
            return Err(SgotError::Parameter("Martin truncation must be >= 1".into()));
        }
        Ok(())
    }
}

fn aligned(p: &SpectralMeasure, q: &SpectralMeasure, cfg: &MetricConfig) -> Result<(SpectralMeasure, SpectralMeasure)> {
    if p.kernel != q.kernel {
        return Err(SgotError::IncompatibleSystems(format!(
            "kernels differ: {:?} vs {:?}",
            p.kernel, q.kernel
        )));
    }
    if cfg.align_windows {
        align_windows(p, q)
    } else {
        Ok((p.clone(), q.clone()))
    }
}

/// Ground-cost matrix `eta d_val + (1 - eta) d_G` between the atoms.
pub fn sgot_cost_matrix(p: &SpectralMeasure, q: &SpectralMeasure, cfg: &MetricConfig) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let (p, q) = aligned(p, q, cfg)?;
    let grams = CrossGrams::between(&p, &q)?;
    let mut c = DMatrix::zeros(p.len(), q.len());
    for (i, a) in p.atoms.iter().enumerate() {
        for (j, b) in q.atoms.iter().enumerate() {
            let e = eigenvalue_distance_with(cfg.eigenvalue_metric, a.lambda, b.lambda);
            let g = grassmann_distance_with(cfg.grassmann_form, a, b, &grams)?;
            c[(i, j)] = cfg.eta * e + (1.0 - cfg.eta) * g;
        }
    }
    Ok(c)
}

pub fn sgot(p: &SpectralMeasure, q: &SpectralMeasure, cfg: &MetricConfig) -> Result<f64> {
    let c = sgot_cost_matrix(p, q, cfg)?;
    wasserstein(&c, &p.masses(), &q.masses(), cfg.p)
}

fn uniform(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// Transport over eigenvalues only, with uniform atom masses.
pub fn sot(p: &SpectralMeasure, q: &SpectralMeasure, cfg: &MetricConfig) -> Result<f64> {
    cfg.validate()?;
    let c = DMatrix::from_fn(p.len(), q.len(), |i, j| {
        let (a, b) = (&p.atoms[i], &q.atoms[j]);
        match cfg.sot_units {
            SotUnits::Generator => eigenvalue_distance_with(cfg.eigenvalue_metric, a.lambda, b.lambda),
            SotUnits::Transfer => (a.transfer_eigenvalue(p.dt) - b.transfer_eigenvalue(q.dt)).norm(),
        }
    });
    wasserstein(&c, &uniform(p.len()), &uniform(q.len()), cfg.p)
}

/// Atom masses proportional to multiplicity times transfer-eigenvalue modulus.
pub fn modulus_masses(m: &SpectralMeasure) -> Vec<f64> {
    let w: Vec<f64> = m
        .atoms
        .iter()
        .map(|a| a.multiplicity as f64 * a.transfer_modulus(m.dt))
        .collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

/// Transport over eigenspaces only, with modulus-weighted masses.
pub fn got(p: &SpectralMeasure, q: &SpectralMeasure, cfg: &MetricConfig) -> Result<f64> {
    cfg.validate()?;
    let (pa, qa) = aligned(p, q, cfg)?;
    let grams = CrossGrams::between(&pa, &qa)?;
    let mut c = DMatrix::zeros(pa.len(), qa.len());
    for (i, a) in pa.atoms.iter().enumerate() {
        for (j, b) in qa.atoms.iter().enumerate() {
            c[(i, j)] = grassmann_distance_with(cfg.grassmann_form, a, b, &grams)?;
        }
    }
    wasserstein(&c, &modulus_masses(&pa), &modulus_masses(&qa), cfg.p)
}

fn check_same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(SgotError::IncompatibleSystems(format!(
            "operator matrices are {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Frobenius norm of the difference of two explicit operator matrices.
pub fn hilbert_schmidt_matrices(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(a, b)?;
    Ok((a - b).norm())
}

/// Largest singular value of the difference of two explicit operator matrices.
pub fn operator_norm_matrices(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(a, b)?;
    let diff = a - b;
    if diff.is_empty() {
        return Ok(0.0);
    }
    Ok(diff.singular_values().iter().cloned().fold(0.0_f64, f64::max))
}

pub fn hilbert_schmidt_distance(a: &EstimatedOperator, b: &EstimatedOperator) -> Result<f64> {
    hilbert_schmidt_matrices(&a.explicit_matrix()?, &b.explicit_matrix()?)
}

pub fn operator_norm_distance(a: &EstimatedOperator, b: &EstimatedOperator) -> Result<f64> {
    operator_norm_matrices(&a.explicit_matrix()?, &b.explicit_matrix()?)
}

/// Truncated cepstral distance between two pole sets inside the unit disk.
pub fn martin_distance(a: &[C64], b: &[C64], truncation: usize) -> Result<f64> {
    if truncation < 1 {
        return Err(SgotError::Parameter("Martin truncation must be >= 1".into()));
    }
    for p in a.iter().chain(b) {
        if p.norm() >= 1.0 {
            return Err(SgotError::IllDefined(format!(
                "pole {p} lies on or outside the unit circle"
            )));
        }
    }
    let mut pa: Vec<C64> = a.to_vec();
    let mut pb: Vec<C64> = b.to_vec();
    let mut total = 0.0;
    for n in 1..=truncation {
        let ca: C64 = pa.iter().sum();
        let cb: C64 = pb.iter().sum();
        let nf = n as f64;
        total += nf * ((ca - cb) / nf).norm_sqr();
        pa.iter_mut().zip(a).for_each(|(x, p)| *x *= p);
        pb.iter_mut().zip(b).for_each(|(x, p)| *x *= p);
    }
    Ok(total.sqrt())
}

/// Everything the six metrics need about one system.
#[derive(Debug, Clone)]
pub struct SystemSummary {
    pub measure: SpectralMeasure,
    /// Explicit operator matrix (linear kernel only).
    pub matrix: Option<DMatrix<f64>>,
    /// Transfer-operator eigenvalues, repeated by multiplicity.
    pub poles: Vec<C64>,
}

impl SystemSummary {
    pub fn from_operator(op: &EstimatedOperator) -> Result<Self> {
        let es = eigendecompose(op)?;
        let measure = build_measure(&es, DEFAULT_GROUP_TOL)?;
        let matrix = op.explicit_matrix().ok();
        Ok(Self { measure, matrix, poles: es.mu })
    }

    pub fn from_measure(measure: SpectralMeasure) -> Self {
        let matrix = measure.explicit_matrix().ok();
        let poles = measure
            .atoms
            .iter()
            .flat_map(|a| std::iter::repeat(a.transfer_eigenvalue(measure.dt)).take(a.multiplicity))
            .collect();
        Self { measure, matrix, poles }
    }
}

pub fn distance(a: &SystemSummary, b: &SystemSummary, cfg: &MetricConfig) -> Result<f64> {
    match cfg.kind {
        MetricKind::Sgot => sgot(&a.measure, &b.measure, cfg),
        MetricKind::Sot => sot(&a.measure, &b.measure, cfg),
        MetricKind::Got => got(&a.measure, &b.measure, cfg),
        MetricKind::HilbertSchmidt | MetricKind::OperatorNorm => {
            let (ma, mb) = match (&a.matrix, &b.matrix) {
                (Some(x), Some(y)) => (x, y),
                _ => {
                    return Err(SgotError::IncompatibleSystems(
                        "explicit operator matrices need the linear kernel".into(),
                    ))
                }
            };
            if cfg.kind == MetricKind::HilbertSchmidt {
                hilbert_schmidt_matrices(ma, mb)
            } else {
                operator_norm_matrices(ma, mb)
            }
        }
        MetricKind::Martin => martin_distance(&a.poles, &b.poles, cfg.martin_truncation),
    }
}

/// Symmetric matrix of pairwise distances, zero on the diagonal. Pairs are
/// evaluated in parallel; each entry is computed exactly once, so the result
/// does not depend on scheduling.
pub fn distance_matrix(systems: &[SystemSummary], cfg: &MetricConfig) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let n = systems.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let values: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| distance(&systems[i], &systems[j], cfg))
        .collect();
    let mut out = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        let v = v?;
        out[(i, j)] = v;
        out[(j, i)] = v;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{fit_rrr, TrajectoryDataset};
    use crate::kernels::KernelSpec;
    use crate::spectral_measure::{Representers, SpectralAtom};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tp() -> f64 {
        2.0 * std::f64::consts::PI
    }

    fn single_atom_measure(lambda: C64, beta: &[f64]) -> SpectralMeasure {
        let b = DMatrix::from_column_slice(beta.len(), 1, beta).map(|v| C64::new(v, 0.0));
        SpectralMeasure {
            kernel: KernelSpec::Linear,
            dt: 0.01,
            x_points: Representers::Features(beta.len()),
            y_points: Representers::Features(beta.len()),
            window: None,
            atoms: vec![SpectralAtom { lambda, multiplicity: 1, mass: 1.0, alpha: b.clone(), beta: b }],
        }
    }

    fn random_summary(d: usize, seed: u64) -> SystemSummary {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.5..0.5));
        let x = DMatrix::from_fn(6 * d, d, |_, _| rng.random_range(-1.0..1.0));
        let data = TrajectoryDataset::new(x.clone(), &x * a.transpose(), 0.1).unwrap();
        SystemSummary::from_operator(&fit_rrr(&data, &KernelSpec::Linear, d, 1e-9).unwrap()).unwrap()
    }

    #[test]
    fn single_atom_sgot_by_hand() {
        let p = single_atom_measure(C64::new(-0.2, tp()), &[1.0, 0.0]);
        let q = single_atom_measure(C64::new(-0.2, 2.0 * tp()), &[1.0, 0.0]);
        let v = sgot(&p, &q, &MetricConfig::default()).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        assert_eq!(sgot(&p, &p, &MetricConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn sot_shift_one_mode() {
        // Two conjugate pairs; shifting one pair by 1 Hz moves half the mass by 1.
        let mk = |f2: f64| {
            let mut m = single_atom_measure(C64::new(0.0, 0.0), &[1.0, 0.0]);
            let atom = m.atoms[0].clone();
            m.atoms = [1.0, -1.0, f2, -f2]
                .iter()
                .map(|&f| SpectralAtom { lambda: C64::new(-0.1, f * tp()), mass: 0.25, ..atom.clone() })
                .collect();
            m
        };
        let v = sot(&mk(2.0), &mk(3.0), &MetricConfig::default()).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        // Independent of eigenfunctions.
        let mut other = mk(3.0);
        for a in &mut other.atoms {
            a.beta = DMatrix::from_column_slice(2, 1, &[C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
        }
        assert!((sot(&mk(2.0), &other, &MetricConfig::default()).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn got_swapped_eigenspaces_brute_force() {
        let e1 = [1.0, 0.0, 0.0];
        let e2 = [0.0, 1.0, 0.0];
        let e3 = [0.0, 0.0, 1.0];
        let mk = |b1: &[f64], b2: &[f64], l2: f64| {
            let mut m = single_atom_measure(C64::new(-0.5, 0.0), b1);
            let mut second = single_atom_measure(C64::new(-0.5, l2), b2).atoms.remove(0);
            second.mass = 0.5;
            m.atoms[0].mass = 0.5;
            m.atoms.push(second);
            m
        };
        let p = mk(&e1, &e2, 0.0);
        let q = mk(&e2, &e3, 7.0);
        // Matching (1->2, 2->3): costs 0 + sqrt2; matching (1->3, 2->2): sqrt2 + 0.
        let v = got(&p, &q, &MetricConfig::default()).unwrap();
        assert!((v - 0.5 * 2f64.sqrt()).abs() < 1e-12, "{v}");
        // Phases of eigenvalues do not matter.
        let mut q2 = q.clone();
        for a in &mut q2.atoms {
            a.lambda.im += 3.0;
        }
        assert!((got(&p, &q2, &MetricConfig::default()).unwrap() - v).abs() < 1e-15);
    }

    #[test]
    fn matrix_baselines() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let z = DMatrix::zeros(2, 2);
        assert_eq!(hilbert_schmidt_matrices(&a, &a).unwrap(), 0.0);
        assert!((hilbert_schmidt_matrices(&a, &z).unwrap() - 30f64.sqrt()).abs() < 1e-14);
        let u = nalgebra::DVector::from_vec(vec![1.0, 2.0, -2.0]);
        let v = nalgebra::DVector::from_vec(vec![0.5, 0.5, 0.0]);
        let r1 = &u * v.transpose();
        let expect = u.norm() * v.norm();
        assert!((operator_norm_matrices(&r1, &DMatrix::zeros(3, 3)).unwrap() - expect).abs() < 1e-14);
        assert!(matches!(
            hilbert_schmidt_matrices(&a, &DMatrix::zeros(3, 3)),
            Err(SgotError::IncompatibleSystems(_))
        ));
    }

    #[test]
    fn operator_norm_matches_power_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let a = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
            let b = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
            let d = &a - &b;
            let g = d.transpose() * &d;
            let mut v = nalgebra::DVector::<f64>::from_element(5, 1.0);
            for _ in 0..5000 {
                v = &g * &v;
                v /= v.norm();
            }
            let oracle = (v.dot(&(&g * &v))).sqrt();
            assert!((operator_norm_matrices(&a, &b).unwrap() - oracle).abs() < 1e-8);
        }
    }

    #[test]
    fn martin_values() {
        let p = [C64::new(0.5, 0.0)];
        let q = [C64::new(0.0, 0.0)];
        let direct: f64 = (1..=100).map(|n| 0.25f64.powi(n) / n as f64).sum::<f64>().sqrt();
        let v = martin_distance(&p, &q, 100).unwrap();
        assert!((v - direct).abs() < 1e-15);
        assert!((v - 0.5364).abs() < 1e-4);
        assert_eq!(martin_distance(&p, &p, 100).unwrap(), 0.0);
        let mut last = 0.0;
        for n in 1..20 {
            let v = martin_distance(&p, &q, n).unwrap();
            assert!(v >= last);
            last = v;
        }
        assert!(matches!(martin_distance(&[C64::new(1.0, 0.0)], &q, 10), Err(SgotError::IllDefined(_))));
    }

    #[test]
    fn config_validation() {
        let mut c = MetricConfig::default();
        c.eta = 1.0;
        assert!(matches!(c.validate(), Err(SgotError::Parameter(_))));
        c.eta = 0.5;
        c.p = 0;
        assert!(c.validate().is_err());
        assert_eq!(MetricKind::parse("hs").unwrap(), MetricKind::HilbertSchmidt);
        assert!(MetricKind::parse("foo").is_err());
    }

    #[test]
    fn kernel_mismatch_is_incompatible() {
        let p = single_atom_measure(C64::new(0.0, 1.0), &[1.0, 0.0]);
        let mut q = p.clone();
        q.kernel = KernelSpec::GaussianRbf { lengthscale: 1.0 };
        assert!(matches!(sgot(&p, &q, &MetricConfig::default()), Err(SgotError::IncompatibleSystems(_))));
    }

    #[test]
    fn distance_matrix_properties() {
        let s = vec![random_summary(3, 1)];
        assert_eq!(distance_matrix(&s, &MetricConfig::default()).unwrap(), DMatrix::zeros(1, 1));
        let base = [random_summary(3, 1), random_summary(3, 2), random_summary(3, 3)];
        let dup: Vec<SystemSummary> = base.iter().chain(base.iter()).cloned().collect();
        for kind in [MetricKind::Sgot, MetricKind::HilbertSchmidt, MetricKind::OperatorNorm, MetricKind::Martin] {
            let cfg = MetricConfig { p: 2, ..MetricConfig::with_kind(kind) };
            let d = distance_matrix(&dup, &cfg).unwrap();
            for i in 0..3 {
                assert!(d[(i, i + 3)] <= 1e-10, "{kind:?} {}", d[(i, i + 3)]);
            }
            assert_eq!(d, d.transpose());
            let again = distance_matrix(&dup, &cfg).unwrap();
            assert_eq!(d, again);
        }
        let d = distance_matrix(&base, &MetricConfig::default()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    assert!(d[(i, k)] <= d[(i, j)] + d[(j, k)] + 1e-10);
                }
            }
        }
    }

    #[test]
    fn eta_endpoints() {
        let p = random_summary(4, 10).measure;
        let q = random_summary(4, 11).measure;
        let hi = MetricConfig { eta: 0.999, ..MetricConfig::default() };
        let sgot_hi = sgot(&p, &q, &hi).unwrap();
        let sot_v = sot(&p, &q, &hi).unwrap();
        // Difference is bounded by the Grassmann share of the cost.
        assert!((sgot_hi / 0.999 - sot_v).abs() <= 0.001 / 0.999 * 2.0 + 1e-12);
        let lo = MetricConfig { eta: 1e-4, ..MetricConfig::default() };
        let sgot_lo = sgot(&p, &q, &lo).unwrap();
        let grams = CrossGrams::between(&p, &q).unwrap();
        let c = DMatrix::from_fn(p.len(), q.len(), |i, j| {
            crate::spectral_measure::grassmann_distance(&p.atoms[i], &q.atoms[j], &grams).unwrap()
        });
        let pure = wasserstein(&c, &p.masses(), &q.masses(), 1).unwrap();
        let emax = p
            .atoms
            .iter()
            .flat_map(|a| q.atoms.iter().map(move |b| crate::spectral_measure::eigenvalue_distance(a.lambda, b.lambda)))
            .fold(0.0_f64, f64::max);
        assert!((sgot_lo - (1.0 - 1e-4) * pure).abs() <= 1e-4 * emax + 1e-12);
    }

    #[test]
    fn permutation_invariance() {
        let p = random_summary(4, 20).measure;
        let q = random_summary(4, 21).measure;
        let base = sgot(&p, &q, &MetricConfig::default()).unwrap();
        let mut pr = p.clone();
        pr.atoms.reverse();
        let mut qr = q.clone();
        qr.atoms.rotate_left(1);
        assert!((sgot(&pr, &qr, &MetricConfig::default()).unwrap() - base).abs() < 1e-10);
    }
}
