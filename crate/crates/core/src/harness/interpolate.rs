use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barycenter::{solve_barycenter, BarycenterProblem, BarycenterResult};
use crate::error::{Result, SgotError};
use crate::spectral_measure::SpectralMeasure;

/// Default interpolation ratios: 0 to 1 in steps of 0.1.
pub fn default_gammas() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone)]
pub struct InterpolationResult {
    pub gamma: f64,
    pub result: BarycenterResult,
    pub measure: SpectralMeasure,
}

/// Weighted barycenters with weights `(1 - gamma, gamma)` for every ratio.
/// `template` supplies everything but the inputs and weights.
pub fn interpolate(
    source: &SpectralMeasure,
    target: &SpectralMeasure,
    gammas: &[f64],
    template: &BarycenterProblem,
) -> Result<Vec<InterpolationResult>> {
    if gammas.is_empty() {
        return Err(SgotError::Parameter("gamma grid is empty".into()));
    }
    if let Some(g) = gammas.iter().find(|g| !(**g >= 0.0 && **g <= 1.0)) {
        return Err(SgotError::Parameter(format!("gamma must lie in [0, 1], got {g}")));
    }
    let problems: Vec<BarycenterProblem> = gammas
        .iter()
        .map(|&g| BarycenterProblem {
            inputs: vec![source.clone(), target.clone()],
            weights: vec![1.0 - g, g],
            ..template.clone()
        })
        .collect();
    for p in &problems {
        p.validate()?;
    }
    problems
        .par_iter()
        .zip(gammas)
        .map(|(p, &gamma)| {
            let result = solve_barycenter(p)?;
            let measure = result.measure()?;
            Ok(InterpolationResult { gamma, result, measure })
        })
        .collect()
}

/// One barycenter mode, listed with nonnegative frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub gamma: f64,
    pub mode: usize,
    /// Real part of the generator eigenvalue, 1/s.
    pub decay: f64,
    /// Hz.
    pub frequency: f64,
}

/// Distinct oscillators of each barycenter: conjugate partners are folded
/// onto one row, ordered by frequency.
pub fn summary_rows(results: &[InterpolationResult]) -> Vec<ModeSummary> {
    let mut rows = Vec::new();
    for r in results {
        let mut modes: Vec<(f64, f64)> = r.measure.atoms.iter().map(|a| (a.lambda.re, a.frequency().abs())).collect();
        modes.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
        modes.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
        for (mode, (decay, frequency)) in modes.into_iter().enumerate() {
            rows.push(ModeSummary { gamma: r.gamma, mode, decay, frequency });
        }
    }
    rows
}

pub fn write_summary_csv<W: Write>(w: W, rows: &[ModeSummary]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r).map_err(|e| SgotError::Io(std::io::Error::other(e)))?;
    }
    wtr.flush()?;
    Ok(())
}
