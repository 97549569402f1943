//! Experiment drivers shared by the command-line tool and the test suites.

pub mod classify;
pub mod forecast;
pub mod interpolate;
pub mod scenario;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SgotError};
use crate::estimation::{fit_krr, fit_rrr, windowed_pairs, EstimatedOperator, Estimator, Trajectory};
use crate::kernels::KernelSpec;

pub use classify::{classify, classify_systems, knn_predict, read_manifest, ClassifyReport, CvSpec, ManifestEntry};
pub use forecast::{forecast, forecast_from_window};
pub use interpolate::{interpolate, summary_rows, write_summary_csv, InterpolationResult, ModeSummary};
pub use scenario::{run_scenario, write_scenario_csv, ScenarioRow};

/// How a trajectory becomes an estimated operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationConfig {
    pub kernel: KernelSpec,
    pub estimator: Estimator,
    pub rank: usize,
    pub tikhonov: f64,
    /// Context window length in samples.
    pub context: usize,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self { kernel: KernelSpec::Linear, estimator: Estimator::Rrr, rank: 2, tikhonov: 1e-8, context: 10 }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.rank == 0 {
            return Err(SgotError::Rank("rank must be >= 1".into()));
        }
        if !(self.tikhonov >= 0.0 && self.tikhonov.is_finite()) {
            return Err(SgotError::Parameter(format!("Tikhonov must be >= 0, got {}", self.tikhonov)));
        }
        if self.context == 0 {
            return Err(SgotError::Parameter("context window must be >= 1".into()));
        }
        Ok(())
    }

    pub fn fit(&self, traj: &Trajectory) -> Result<EstimatedOperator> {
        self.validate()?;
        let data = windowed_pairs(&traj.states, self.context, traj.dt)?;
        match self.estimator {
            Estimator::Rrr => fit_rrr(&data, &self.kernel, self.rank, self.tikhonov),
            Estimator::Krr => fit_krr(&data, &self.kernel, self.tikhonov),
        }
    }
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(SgotError::Dimension(format!(
            "rank correlation needs two equal-length samples of size >= 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(SgotError::Numerical("rank correlation of non-finite values".into()));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(SgotError::Numerical("rank correlation of a constant sample".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}
