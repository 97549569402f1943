use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use sgot::error::{Result, SgotError};
use sgot::estimation::{read_trajectory_csv, windowed_pairs, write_trajectory_csv, fit_rrr, EstimatedOperator, Trajectory};
use sgot::harness::{
    classify_systems, forecast_from_window, interpolate, read_manifest, run_scenario, summary_rows,
    write_scenario_csv, write_summary_csv, EstimationConfig,
};
use sgot::harness::interpolate::default_gammas;
use sgot::kernels::KernelSpec;
use sgot::metrics::{distance_matrix, SystemSummary};
use sgot::spectral_measure::{measure_from_operator, SpectralMeasure};
use sgot::synth::{interpolation_pair, two_class_oscillators, INTERP_RANK, INTERP_TIKHONOV};

use crate::config::{parse_gammas, Budget, KernelChoice, RunConfig};
use crate::{Command, Common};

pub fn run(command: Command, common: &Common) -> Result<()> {
    let cfg = RunConfig::load(common)?;
    let budget = Budget::new(common.time_budget)?;
    if let Some(j) = common.jobs {
        if j == 0 {
            return Err(SgotError::Parameter("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| SgotError::Parameter(format!("thread pool: {e}")))?;
    }
    fs::create_dir_all(&common.out_dir)?;
    let out = common.out_dir.as_path();
    match command {
        Command::Estimate { inputs } => estimate(&inputs, &cfg, out, &budget),
        Command::Distmat { measures, output } => distmat(&measures, &cfg, &out.join(output), &budget),
        Command::Scenario { kind } => scenario(kind.as_deref(), &cfg, out, &budget),
        Command::Classify { manifest, synthetic } => classify(manifest.as_deref(), synthetic, &cfg, out, &budget),
        Command::Interpolate { source, target, synthetic, gammas } => {
            let gammas = match gammas {
                Some(g) => parse_gammas(&g)?,
                None => cfg.gammas.clone().unwrap_or_else(default_gammas),
            };
            let pair = if synthetic {
                synthetic_pair(common, &cfg)?
            } else {
                match (source, target) {
                    (Some(s), Some(t)) => (read_measure(&s)?, read_measure(&t)?),
                    _ => {
                        return Err(SgotError::Parameter(
                            "interpolate needs SOURCE and TARGET measures, or --synthetic".into(),
                        ))
                    }
                }
            };
            budget.check("estimation")?;
            interpolation(&pair.0, &pair.1, &gammas, &cfg, out, &budget)
        }
        Command::Forecast { init, measure, horizon } => forecast(&init, measure.as_deref(), horizon, &cfg, out),
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes)?;
    println!("{}", path.display());
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "system".into(), |s| s.to_string_lossy().into_owned())
}

fn read_measure(path: &Path) -> Result<SpectralMeasure> {
    let text = fs::read_to_string(path)?;
    SpectralMeasure::from_json(&text).map_err(|e| match e {
        SgotError::Json(j) => SgotError::Parse(format!("{}: {j}", path.display())),
        other => other,
    })
}

/// Estimation settings for one trajectory, resolving a median-lengthscale kernel.
fn resolve(traj: &Trajectory, cfg: &RunConfig) -> Result<EstimationConfig> {
    let mut est = cfg.estimation;
    if cfg.kernel == Some(KernelChoice::RbfMedian) {
        let data = windowed_pairs(&traj.states, est.context, traj.dt)?;
        est.kernel = KernelSpec::rbf_median(&data.x)?;
    }
    Ok(est)
}

fn fit(traj: &Trajectory, cfg: &RunConfig) -> Result<EstimatedOperator> {
    resolve(traj, cfg)?.fit(traj)
}

fn estimate(inputs: &[PathBuf], cfg: &RunConfig, out: &Path, budget: &Budget) -> Result<()> {
    let mut names = HashSet::new();
    for p in inputs {
        if !names.insert(stem(p)) {
            return Err(SgotError::Parameter(format!("two inputs share the output name '{}'", stem(p))));
        }
    }
    let measures: Vec<Result<SpectralMeasure>> = inputs
        .par_iter()
        .map(|p| {
            let traj = read_trajectory_csv(p)?;
            measure_from_operator(&fit(&traj, cfg)?)
        })
        .collect();
    budget.check("estimation")?;
    for (p, m) in inputs.iter().zip(measures) {
        let m = m.map_err(|e| annotate(e, p))?;
        write(&out.join(format!("{}.json", stem(p))), m.to_json()?.as_bytes())?;
    }
    Ok(())
}

/// Prefix input-side errors with the offending file.
fn annotate(e: SgotError, path: &Path) -> SgotError {
    let at = path.display();
    match e {
        SgotError::Parse(m) => SgotError::Parse(format!("{at}: {m}")),
        SgotError::InsufficientData(m) => SgotError::InsufficientData(format!("{at}: {m}")),
        SgotError::Dimension(m) => SgotError::Dimension(format!("{at}: {m}")),
        SgotError::Io(io) => SgotError::Io(std::io::Error::new(io.kind(), format!("{at}: {io}"))),
        other => other,
    }
}

/// Header of system identifiers, then one row per system.
pub fn distance_csv(ids: &[String], d: &DMatrix<f64>) -> String {
    let mut s = ids.join(",");
    s.push('\n');
    for i in 0..d.nrows() {
        let row: Vec<String> = (0..d.ncols()).map(|j| d[(i, j)].to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn distmat(paths: &[PathBuf], cfg: &RunConfig, dest: &Path, budget: &Budget) -> Result<()> {
    let systems: Vec<SystemSummary> = paths
        .iter()
        .map(|p| read_measure(p).map(SystemSummary::from_measure))
        .collect::<Result<_>>()?;
    let d = distance_matrix(&systems, &cfg.metric)?;
    budget.check("distances")?;
    let ids: Vec<String> = paths.iter().map(|p| stem(p)).collect();
    write(dest, distance_csv(&ids, &d).as_bytes())
}

fn scenario(kind: Option<&str>, cfg: &RunConfig, out: &Path, budget: &Budget) -> Result<()> {
    let kinds = cfg.scenario_kinds(kind)?;
    let specs = kinds.iter().map(|&k| cfg.scenario_spec(k)).collect::<Result<Vec<_>>>()?;
    for s in &specs {
        s.validate()?;
    }
    for spec in specs {
        let rows = run_scenario(&spec, &cfg.metric)?;
        budget.check(&format!("scenario {}", spec.kind.label()))?;
        let mut buf = Vec::new();
        write_scenario_csv(&mut buf, &rows)?;
        write(&out.join(format!("scenario_{}.csv", spec.kind.label())), &buf)?;
    }
    Ok(())
}

fn classify(manifest: Option<&Path>, synthetic: Option<usize>, cfg: &RunConfig, out: &Path, budget: &Budget) -> Result<()> {
    let (trajs, labels): (Vec<Trajectory>, Vec<String>) = match (manifest, synthetic) {
        (Some(m), None) => {
            let entries = read_manifest(m)?;
            let trajs = entries
                .iter()
                .map(|e| read_trajectory_csv(&e.path).map_err(|err| annotate(err, &e.path)))
                .collect::<Result<Vec<_>>>()?;
            (trajs, entries.into_iter().map(|e| e.label).collect())
        }
        (None, Some(n)) => two_class_oscillators(n, cfg.seed.unwrap_or(0))?
            .into_iter()
            .map(|t| (t.trajectory, t.label))
            .unzip(),
        _ => return Err(SgotError::Parameter("classify needs a MANIFEST or --synthetic".into())),
    };
    let systems = trajs
        .par_iter()
        .map(|t| SystemSummary::from_operator(&fit(t, cfg)?))
        .collect::<Result<Vec<_>>>()?;
    budget.check("estimation")?;
    let report = classify_systems(&systems, &labels, &cfg.metric, &cfg.cv)?;
    budget.check("classification")?;
    let name = format!("classify_{}.json", cfg.metric.kind.name());
    write(&out.join(name), serde_json::to_string_pretty(&report)?.as_bytes())
}

fn synthetic_pair(common: &Common, cfg: &RunConfig) -> Result<(SpectralMeasure, SpectralMeasure)> {
    let (a, b) = interpolation_pair(cfg.seed.unwrap_or(0))?;
    let rank = common.rank.unwrap_or(INTERP_RANK);
    let tikhonov = common.gamma.unwrap_or(INTERP_TIKHONOV);
    let kernel = match cfg.kernel {
        Some(KernelChoice::RbfMedian) => {
            return Err(SgotError::Parameter("the synthetic pair needs a fixed kernel shared by both systems".into()))
        }
        Some(KernelChoice::Fixed(k)) => k,
        None => KernelSpec::Linear,
    };
    Ok((
        measure_from_operator(&fit_rrr(&a, &kernel, rank, tikhonov)?)?,
        measure_from_operator(&fit_rrr(&b, &kernel, rank, tikhonov)?)?,
    ))
}

fn interpolation(
    source: &SpectralMeasure,
    target: &SpectralMeasure,
    gammas: &[f64],
    cfg: &RunConfig,
    out: &Path,
    budget: &Budget,
) -> Result<()> {
    let results = interpolate(source, target, gammas, &cfg.barycenter_template())?;
    budget.check("barycenters")?;
    for (i, r) in results.iter().enumerate() {
        if !r.result.converged {
            eprintln!("warning: barycenter at gamma={} stopped before convergence", r.gamma);
        }
        for w in &r.result.warnings {
            eprintln!("warning: gamma={}: {w}", r.gamma);
        }
        write(&out.join(format!("barycenter_{i:02}.json")), r.measure.to_json()?.as_bytes())?;
        let mut trace = Vec::new();
        r.result.write_trace_csv(&mut trace)?;
        write(&out.join(format!("trace_{i:02}.csv")), &trace)?;
    }
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, &summary_rows(&results))?;
    write(&out.join("summary.csv"), &buf)
}

fn forecast(init: &Path, measure: Option<&Path>, horizon: usize, cfg: &RunConfig, out: &Path) -> Result<()> {
    if horizon == 0 {
        return Err(SgotError::Parameter("horizon must be >= 1".into()));
    }
    let traj = read_trajectory_csv(init).map_err(|e| annotate(e, init))?;
    let m = match measure {
        Some(p) => read_measure(p)?,
        None => measure_from_operator(&fit(&traj, cfg)?)?,
    };
    let states = forecast_from_window(&m, &traj, horizon)?;
    let mut buf = Vec::new();
    write_trajectory_csv(&mut buf, &Trajectory { states, dt: m.dt })?;
    write(&out.join("forecast.csv"), &buf)
}
