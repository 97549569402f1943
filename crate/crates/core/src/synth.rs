//! Seeded synthetic oscillator systems and the four shift scenarios.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SgotError};
use crate::estimation::{windowed_pairs, Trajectory, TrajectoryDataset};

/// One damped sinusoid `a e^{rho t} sin(2 pi f t + phi)`; positive `decay`
/// grows the envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSpec {
    pub frequency: f64,
    #[serde(default)]
    pub decay: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

fn one() -> f64 {
    1.0
}

impl HarmonicSpec {
    pub fn sine(frequency: f64) -> Self {
        Self { frequency, decay: 0.0, amplitude: 1.0, phase: 0.0 }
    }

    pub fn new(frequency: f64, decay: f64, amplitude: f64) -> Self {
        Self { frequency, decay, amplitude, phase: 0.0 }
    }
}

fn check_sampling(fs: f64, length: usize, noise_std: f64) -> Result<()> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(SgotError::Parameter(format!("sampling frequency must be positive, got {fs}")));
    }
    if length == 0 {
        return Err(SgotError::Parameter("length must be >= 1".into()));
    }
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(SgotError::Parameter(format!("noise std must be >= 0, got {noise_std}")));
    }
    Ok(())
}

fn check_nyquist(freq: f64, fs: f64) -> Result<()> {
    if !(freq >= 0.0) {
        return Err(SgotError::Parameter(format!("frequency must be >= 0, got {freq}")));
    }
    if freq >= fs / 2.0 {
        return Err(SgotError::Parameter(format!(
            "frequency {freq} Hz is not below the Nyquist frequency {} Hz",
            fs / 2.0
        )));
    }
    Ok(())
}

fn add_noise(values: &mut [f64], noise_std: f64, seed: u64) -> Result<()> {
    if noise_std == 0.0 {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_std).map_err(|e| SgotError::Parameter(e.to_string()))?;
    for v in values.iter_mut() {
        *v += normal.sample(&mut rng);
    }
    Ok(())
}

fn finish(values: Vec<f64>, fs: f64) -> Trajectory {
    let n = values.len();
    Trajectory { states: DMatrix::from_vec(n, 1, values), dt: 1.0 / fs }
}

/// Sum of damped sinusoids sampled at `fs` plus i.i.d. Gaussian noise.
pub fn generate_trajectory(
    specs: &[HarmonicSpec],
    fs: f64,
    length: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Trajectory> {
    check_sampling(fs, length, noise_std)?;
    for s in specs {
        check_nyquist(s.frequency, fs)?;
    }
    let tp = 2.0 * std::f64::consts::PI;
    let mut values: Vec<f64> = (0..length)
        .map(|i| {
            let t = i as f64 / fs;
            specs
                .iter()
                .map(|s| s.amplitude * (s.decay * t).exp() * (tp * s.frequency * t + s.phase).sin())
                .sum()
        })
        .collect();
    add_noise(&mut values, noise_std, seed)?;
    Ok(finish(values, fs))
}

/// The harmonics of a truncated square-wave series at fundamental `f`:
/// orders `0..=order`, amplitudes `4 / (pi (2n + 1))`.
pub fn square_wave_harmonics(f: f64, order: usize) -> Vec<HarmonicSpec> {
    (0..=order)
        .map(|n| {
            let k = (2 * n + 1) as f64;
            HarmonicSpec::new(k * f, 0.0, 4.0 / (std::f64::consts::PI * k))
        })
        .collect()
}

/// Truncated Fourier series of a square wave of fundamental `f`.
pub fn square_wave_fourier(
    f: f64,
    order: usize,
    fs: f64,
    length: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Trajectory> {
    generate_trajectory(&square_wave_harmonics(f, order), fs, length, noise_std, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    FrequencyShift,
    DecayShift,
    SubspaceShift,
    SamplingShift,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::FrequencyShift,
        ScenarioKind::DecayShift,
        ScenarioKind::SubspaceShift,
        ScenarioKind::SamplingShift,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            ScenarioKind::FrequencyShift => "a",
            ScenarioKind::DecayShift => "b",
            ScenarioKind::SubspaceShift => "c",
            ScenarioKind::SamplingShift => "d",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" | "frequency" | "frequency_shift" => Ok(ScenarioKind::FrequencyShift),
            "b" | "decay" | "decay_shift" => Ok(ScenarioKind::DecayShift),
            "c" | "subspace" | "subspace_shift" => Ok(ScenarioKind::SubspaceShift),
            "d" | "sampling" | "sampling_shift" => Ok(ScenarioKind::SamplingShift),
            other => Err(SgotError::Parameter(format!("unknown scenario '{other}'"))),
        }
    }
}

/// Evenly spaced grid including both endpoints.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// A shift scenario around a base system. The shifted component is the
/// base harmonic at index `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// Shifted values: frequency in Hz (a), damping `-rho` in 1/s (b),
    /// square-wave order (c), sampling frequency in Hz (d).
    pub grid: Vec<f64>,
    pub base: Vec<HarmonicSpec>,
    pub target: usize,
    pub fs: f64,
    pub length: usize,
    pub noise_std: f64,
    pub seed: u64,
    /// Context window length in seconds.
    pub context_seconds: f64,
    pub tikhonov: f64,
}

impl ScenarioSpec {
    /// Reference settings: 0.5 Hz + 1.0 Hz sines at 200 Hz, 4001 samples,
    /// noise std 0.01, one-second windows, Tikhonov 1e-8.
    pub fn reference(kind: ScenarioKind) -> Self {
        let grid = match kind {
            ScenarioKind::FrequencyShift => linspace(0.6, 2.5, 39),
            ScenarioKind::DecayShift => linspace(-0.3, 3.0, 67),
            ScenarioKind::SubspaceShift => (0..50).map(|k| k as f64).collect(),
            ScenarioKind::SamplingShift => linspace(100.0, 300.0, 19),
        };
        Self {
            kind,
            grid,
            base: vec![HarmonicSpec::sine(0.5), HarmonicSpec::sine(1.0)],
            target: 1,
            fs: 200.0,
            length: 4001,
            noise_std: 1e-2,
            seed: 0,
            context_seconds: 1.0,
            tikhonov: 1e-8,
        }
    }

    /// The grid value at which the scenario reproduces the base system.
    pub fn base_value(&self) -> f64 {
        let h = &self.base[self.target];
        match self.kind {
            ScenarioKind::FrequencyShift => h.frequency,
            ScenarioKind::DecayShift => -h.decay,
            ScenarioKind::SubspaceShift => 0.0,
            ScenarioKind::SamplingShift => self.fs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(SgotError::Parameter("scenario grid is empty".into()));
        }
        if self.target >= self.base.len() {
            return Err(SgotError::Parameter(format!(
                "target harmonic {} out of range for {} base harmonics",
                self.target,
                self.base.len()
            )));
        }
        check_sampling(self.fs, self.length, self.noise_std)?;
        if !(self.context_seconds > 0.0) {
            return Err(SgotError::Parameter("context window must be positive".into()));
        }
        if !(self.tikhonov >= 0.0) {
            return Err(SgotError::Parameter("Tikhonov regularization must be >= 0".into()));
        }
        for h in &self.base {
            check_nyquist(h.frequency, self.fs)?;
        }
        if self.kind == ScenarioKind::SubspaceShift && self.grid.iter().any(|v| v.fract() != 0.0 || *v < 0.0) {
            return Err(SgotError::Parameter("square-wave orders must be nonnegative integers".into()));
        }
        Ok(())
    }
}

/// One estimated-system input of a scenario sweep.
#[derive(Debug, Clone)]
pub struct ScenarioPoint {
    pub value: f64,
    /// Operator rank: twice the number of harmonics.
    pub rank: usize,
    pub dataset: TrajectoryDataset,
}

fn windowed(traj: &Trajectory, context_seconds: f64) -> Result<TrajectoryDataset> {
    let fs = 1.0 / traj.dt;
    let context = ((context_seconds * fs).round() as usize).max(1);
    windowed_pairs(&traj.states, context, traj.dt)
}

fn subspace_harmonics(spec: &ScenarioSpec, order: usize) -> Vec<HarmonicSpec> {
    let h = spec.base[spec.target];
    // Fundamental keeps the base amplitude, so order 0 is the base system.
    let mut out: Vec<HarmonicSpec> = spec
        .base
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != spec.target)
        .map(|(_, s)| *s)
        .collect();
    out.extend((0..=order).map(|n| {
        let k = (2 * n + 1) as f64;
        HarmonicSpec { frequency: k * h.frequency, amplitude: h.amplitude / k, ..h }
    }));
    out
}

fn point(spec: &ScenarioSpec, index: usize, value: f64) -> Result<ScenarioPoint> {
    let duration = (spec.length - 1) as f64 / spec.fs;
    let mut seed = spec.seed;
    let (harmonics, fs, length) = match spec.kind {
        ScenarioKind::FrequencyShift => {
            let mut b = spec.base.clone();
            b[spec.target].frequency = value;
            (b, spec.fs, spec.length)
        }
        ScenarioKind::DecayShift => {
            let mut b = spec.base.clone();
            b[spec.target].decay = -value;
            (b, spec.fs, spec.length)
        }
        ScenarioKind::SubspaceShift => (subspace_harmonics(spec, value as usize), spec.fs, spec.length),
        ScenarioKind::SamplingShift => {
            let length = (duration * value).round() as usize + 1;
            seed = spec.seed.wrapping_add(1 + index as u64);
            (spec.base.clone(), value, length)
        }
    };
    let traj = generate_trajectory(&harmonics, fs, length, spec.noise_std, seed)?;
    Ok(ScenarioPoint { value, rank: 2 * harmonics.len(), dataset: windowed(&traj, spec.context_seconds)? })
}

/// The unshifted reference system.
pub fn scenario_base(spec: &ScenarioSpec) -> Result<ScenarioPoint> {
    spec.validate()?;
    let traj = generate_trajectory(&spec.base, spec.fs, spec.length, spec.noise_std, spec.seed)?;
    Ok(ScenarioPoint { value: spec.base_value(), rank: 2 * spec.base.len(), dataset: windowed(&traj, spec.context_seconds)? })
}

/// One windowed dataset per grid value, varying only the scenario parameter.
/// Scenarios (a) to (c) reuse the base noise seed, so the base value
/// reproduces the base data exactly. Each sampling rate of (d) is a separate
/// observation of the same system and draws its own noise (seed `seed + 1 + i`).
pub fn scenario_grid(spec: &ScenarioSpec) -> Result<Vec<ScenarioPoint>> {
    spec.validate()?;
    spec.grid.iter().enumerate().map(|(i, &v)| point(spec, i, v)).collect()
}

/// Settings of the two-system interpolation experiment.
pub const INTERP_FS: f64 = 800.0;
pub const INTERP_LENGTH: usize = 5000;
pub const INTERP_CONTEXT: usize = 400;
pub const INTERP_NOISE_STD: f64 = 1e-2;
pub const INTERP_RANK: usize = 4;
pub const INTERP_TIKHONOV: f64 = 1e-8;

pub fn interpolation_harmonics() -> (Vec<HarmonicSpec>, Vec<HarmonicSpec>) {
    (
        vec![HarmonicSpec::new(1.7, -0.2, 1.0), HarmonicSpec::new(4.7, 0.2, 0.2)],
        vec![HarmonicSpec::new(0.7, 0.2, 1.0), HarmonicSpec::new(11.3, -0.2, 1.0)],
    )
}

/// The two oscillator systems interpolated by barycenters, windowed with
/// 400-sample contexts.
pub fn interpolation_pair(seed: u64) -> Result<(TrajectoryDataset, TrajectoryDataset)> {
    let (s0, s1) = interpolation_harmonics();
    let t0 = generate_trajectory(&s0, INTERP_FS, INTERP_LENGTH, INTERP_NOISE_STD, seed)?;
    let t1 = generate_trajectory(&s1, INTERP_FS, INTERP_LENGTH, INTERP_NOISE_STD, seed.wrapping_add(1))?;
    Ok((
        windowed_pairs(&t0.states, INTERP_CONTEXT, t0.dt)?,
        windowed_pairs(&t1.states, INTERP_CONTEXT, t1.dt)?,
    ))
}

/// A labeled synthetic trajectory.
#[derive(Debug, Clone)]
pub struct LabeledTrajectory {
    pub label: String,
    pub trajectory: Trajectory,
}

/// Two classes of damped single oscillators (about 0.5 Hz and 2 Hz) with
/// random phase, amplitude, and small frequency and damping jitter.
pub fn two_class_oscillators(per_class: usize, seed: u64) -> Result<Vec<LabeledTrajectory>> {
    let fs = 50.0;
    let length = 501;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * per_class);
    for (label, f0) in [("slow", 0.5), ("fast", 2.0)] {
        for _ in 0..per_class {
            let spec = HarmonicSpec {
                frequency: f0 * (1.0 + rng.random_range(-0.05..0.05)),
                decay: -rng.random_range(0.05..0.3),
                amplitude: rng.random_range(0.5..1.5),
                phase: rng.random_range(0.0..2.0 * std::f64::consts::PI),
            };
            let noise_seed: u64 = rng.random();
            out.push(LabeledTrajectory {
                label: label.to_string(),
                trajectory: generate_trajectory(&[spec], fs, length, 1e-2, noise_seed)?,
            });
        }
    }
    Ok(out)
}
