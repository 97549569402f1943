use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SgotError};
use crate::estimation::fit_rrr;
use crate::kernels::KernelSpec;
use crate::metrics::{distance, MetricConfig, MetricKind, SystemSummary};
use crate::synth::{scenario_base, scenario_grid, ScenarioKind, ScenarioPoint, ScenarioSpec};

/// One long-format output row of a scenario sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario: String,
    pub value: f64,
    /// `value` minus the base value.
    pub shift: f64,
    pub metric: String,
    /// Reported distance: divided by the metric's maximum for scenarios
    /// (a) to (c), raw for (d).
    pub distance: f64,
    pub raw_distance: f64,
    /// Empty, `unnormalized`, `ill_defined`, `incompatible`, or
    /// `estimation_failed`.
    pub flag: String,
}

fn summarize(p: &ScenarioPoint, tikhonov: f64) -> Result<SystemSummary> {
    let op = fit_rrr(&p.dataset, &KernelSpec::Linear, p.rank, tikhonov)?;
    SystemSummary::from_operator(&op)
}

/// Compare every grid system against the base system under all six
/// similarity measures. `cfg.kind` is ignored; the other settings apply.
pub fn run_scenario(spec: &ScenarioSpec, cfg: &MetricConfig) -> Result<Vec<ScenarioRow>> {
    spec.validate()?;
    cfg.validate()?;
    let base = summarize(&scenario_base(spec)?, spec.tikhonov)?;
    let points = scenario_grid(spec)?;
    let summaries: Vec<Result<SystemSummary>> = points.par_iter().map(|p| summarize(p, spec.tikhonov)).collect();
    let base_value = spec.base_value();
    let label = spec.kind.label().to_string();

    let mut rows = Vec::with_capacity(points.len() * MetricKind::ALL.len());
    for kind in MetricKind::ALL {
        let mcfg = MetricConfig { kind, ..*cfg };
        let mut block = Vec::with_capacity(points.len());
        for (p, s) in points.iter().zip(&summaries) {
            let (raw, flag) = match s {
                Err(e) if e.exit_code() == 3 => (f64::NAN, "estimation_failed"),
                Err(e) => return Err(SgotError::Numerical(format!("grid value {}: {e}", p.value))),
                Ok(s) => match distance(&base, s, &mcfg) {
                    Ok(d) => (d, ""),
                    Err(SgotError::IllDefined(_)) => (f64::NAN, "ill_defined"),
                    Err(SgotError::IncompatibleSystems(_)) => (f64::NAN, "incompatible"),
                    Err(e) => return Err(e),
                },
            };
            block.push(ScenarioRow {
                scenario: label.clone(),
                value: p.value,
                shift: p.value - base_value,
                metric: kind.name().to_string(),
                distance: raw,
                raw_distance: raw,
                flag: flag.to_string(),
            });
        }
        if spec.kind != ScenarioKind::SamplingShift {
            let max = block
                .iter()
                .map(|r| r.raw_distance)
                .filter(|v| v.is_finite())
                .fold(0.0_f64, f64::max);
            for r in block.iter_mut().filter(|r| r.flag.is_empty()) {
                if max > 0.0 {
                    r.distance = r.raw_distance / max;
                } else {
                    r.flag = "unnormalized".into();
                }
            }
        }
        rows.extend(block);
    }
    Ok(rows)
}

pub fn write_scenario_csv<W: Write>(w: W, rows: &[ScenarioRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r).map_err(|e| SgotError::Io(std::io::Error::other(e)))?;
    }
    wtr.flush()?;
    Ok(())
}
