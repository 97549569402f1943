use std::path::Path;
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::Value;
use sgot::barycenter::{BarycenterObjective, BarycenterProblem, OptimizerConfig};
use sgot::error::{Result, SgotError};
use sgot::harness::{CvSpec, EstimationConfig};
use sgot::kernels::KernelSpec;
use sgot::metrics::{MetricConfig, MetricKind};
use sgot::spectral_measure::EigenvalueMetric;
use sgot::synth::{ScenarioKind, ScenarioSpec};

use crate::Common;

/// Barycenter settings other than inputs and weights.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarycenterSpec {
    pub rank: Option<usize>,
    pub objective: BarycenterObjective,
    pub optimizer: OptimizerConfig,
    pub eigenvalue_metric: Option<EigenvalueMetric>,
    pub optimize_control_points: bool,
    pub control_points: Option<usize>,
}

/// Kernel requested on the command line or in the config file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelChoice {
    Fixed(KernelSpec),
    /// Gaussian kernel with the median-distance lengthscale of each dataset.
    RbfMedian,
}

/// Parsed run configuration: the JSON file, then flag overrides.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub estimation: EstimationConfig,
    pub metric: MetricConfig,
    /// Partial scenario overrides, merged onto the reference scenario.
    pub scenario: Option<Value>,
    pub cv: CvSpec,
    pub barycenter: BarycenterSpec,
    pub gammas: Option<Vec<f64>>,
    pub seed: Option<u64>,
    #[serde(skip)]
    pub kernel: Option<KernelChoice>,
}

pub fn parse_kernel(s: &str) -> Result<KernelChoice> {
    let t = s.trim().to_ascii_lowercase();
    match t.as_str() {
        "linear" => Ok(KernelChoice::Fixed(KernelSpec::Linear)),
        "rbf" | "gaussian" => Ok(KernelChoice::RbfMedian),
        _ => {
            let l = t
                .strip_prefix("rbf:")
                .or_else(|| t.strip_prefix("gaussian:"))
                .ok_or_else(|| SgotError::Parameter(format!("unknown kernel '{s}'")))?;
            let lengthscale: f64 = l
                .parse()
                .map_err(|_| SgotError::Parameter(format!("bad RBF lengthscale '{l}'")))?;
            let k = KernelSpec::GaussianRbf { lengthscale };
            k.validate()?;
            Ok(KernelChoice::Fixed(k))
        }
    }
}

pub fn parse_gammas(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|g| {
            g.trim()
                .parse::<f64>()
                .map_err(|_| SgotError::Parameter(format!("bad gamma value '{g}'")))
        })
        .collect()
}

impl RunConfig {
    pub fn load(common: &Common) -> Result<Self> {
        let mut cfg = match &common.config {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        if let Some(s) = common.seed {
            cfg.seed = Some(s);
        }
        let seed = cfg.seed.unwrap_or(0);
        cfg.cv.seed = seed;
        if let Some(m) = &common.metric {
            cfg.metric.kind = MetricKind::parse(m)?;
        }
        if let Some(e) = common.eta {
            cfg.metric.eta = e;
        }
        if let Some(p) = common.p {
            cfg.metric.p = p;
        }
        if let Some(r) = common.rank {
            cfg.estimation.rank = r;
        }
        if let Some(g) = common.gamma {
            cfg.estimation.tikhonov = g;
        }
        if let Some(c) = common.context {
            cfg.estimation.context = c;
        }
        if let Some(k) = &common.kernel {
            cfg.kernel = Some(parse_kernel(k)?);
        }
        if let Some(KernelChoice::Fixed(k)) = cfg.kernel {
            cfg.estimation.kernel = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| SgotError::Parse(format!("config {}: {e}", path.display())))
    }

    /// Check every parameter before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.estimation.validate()?;
        self.metric.validate()?;
        self.cv.validate()?;
        if let Some(g) = &self.gammas {
            if g.is_empty() || g.iter().any(|v| !(*v >= 0.0 && *v <= 1.0)) {
                return Err(SgotError::Parameter("gammas must be nonempty values in [0, 1]".into()));
            }
        }
        if self.barycenter.rank == Some(0) {
            return Err(SgotError::Rank("barycenter rank must be >= 1".into()));
        }
        let o = &self.barycenter.optimizer;
        if !(o.lr > 0.0 && o.lr.is_finite()) || o.max_cycles == 0 || o.inner_steps == 0 || !(o.stop_tol >= 0.0) {
            return Err(SgotError::Parameter("optimizer needs lr > 0, cycles and steps >= 1, stop_tol >= 0".into()));
        }
        if self.scenario.is_some() {
            for kind in self.scenario_kinds(None)? {
                self.scenario_spec(kind)?.validate()?;
            }
        }
        Ok(())
    }

    /// Kinds to run: an explicit flag, then the config's `kind`, then all four.
    pub fn scenario_kinds(&self, flag: Option<&str>) -> Result<Vec<ScenarioKind>> {
        if let Some(f) = flag {
            if f.eq_ignore_ascii_case("all") {
                return Ok(ScenarioKind::ALL.to_vec());
            }
            return f.split(',').map(ScenarioKind::parse).collect();
        }
        match self.scenario.as_ref().and_then(|v| v.get("kind")) {
            Some(Value::String(s)) => Ok(vec![ScenarioKind::parse(s)?]),
            Some(other) => Err(SgotError::Parse(format!("scenario kind must be a string, got {other}"))),
            None => Ok(ScenarioKind::ALL.to_vec()),
        }
    }

    /// The reference scenario of `kind` with the config's overrides applied.
    pub fn scenario_spec(&self, kind: ScenarioKind) -> Result<ScenarioSpec> {
        let mut spec = serde_json::to_value(ScenarioSpec::reference(kind))?;
        if let Some(Value::Object(over)) = &self.scenario {
            let obj = spec.as_object_mut().expect("scenario serializes to an object");
            for (k, v) in over {
                if k != "kind" {
                    if !obj.contains_key(k) {
                        return Err(SgotError::Parse(format!("unknown scenario field '{k}'")));
                    }
                    obj.insert(k.clone(), v.clone());
                }
            }
        } else if let Some(other) = &self.scenario {
            return Err(SgotError::Parse(format!("scenario must be an object, got {other}")));
        }
        let mut spec: ScenarioSpec =
            serde_json::from_value(spec).map_err(|e| SgotError::Parse(format!("scenario: {e}")))?;
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        Ok(spec)
    }

    pub fn barycenter_template(&self) -> BarycenterProblem {
        let b = &self.barycenter;
        BarycenterProblem {
            rank: b.rank,
            eta: self.metric.eta,
            eigenvalue_metric: b.eigenvalue_metric.unwrap_or(self.metric.eigenvalue_metric),
            objective: b.objective,
            optimizer: b.optimizer,
            optimize_control_points: b.optimize_control_points,
            control_points: b.control_points,
            ..BarycenterProblem::new(Vec::new(), Vec::new())
        }
    }
}

/// Wall-clock limit checked between stages of a command.
pub struct Budget {
    start: Instant,
    limit: Option<Duration>,
}

impl Budget {
    pub fn new(seconds: Option<f64>) -> Result<Self> {
        let limit = match seconds {
            Some(s) if s.is_finite() && s > 0.0 => Some(Duration::from_secs_f64(s)),
            Some(s) => return Err(SgotError::Parameter(format!("time budget must be positive, got {s}"))),
            None => None,
        };
        Ok(Self { start: Instant::now(), limit })
    }

    pub fn check(&self, stage: &str) -> Result<()> {
        match self.limit {
            Some(l) if self.start.elapsed() > l => Err(SgotError::NonConvergence(format!(
                "time budget of {:.3} s exceeded after {stage}",
                l.as_secs_f64()
            ))),
            _ => Ok(()),
        }
    }
}
