use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SgotError};
use crate::estimation::Trajectory;
use crate::linalg::{to_complex, C64};
use crate::spectral_measure::{Representers, SpectralMeasure};

fn feature_dim(m: &SpectralMeasure) -> Result<usize> {
    match (&m.x_points, &m.y_points) {
        (Representers::Features(a), Representers::Features(b)) if a == b => Ok(*a),
        _ => Err(SgotError::IncompatibleSystems(
            "forecasting needs a linear-kernel measure in feature coordinates".into(),
        )),
    }
}

/// Evolve the state `x0` through the modal form of the measure: every mode
/// is advanced by `e^{lambda t}` and the state re-synthesized. Row `k` of
/// the result is the newest sample of the state after `k + 1` steps (the
/// full state when the measure has no window layout).
pub fn forecast(measure: &SpectralMeasure, x0: &DVector<f64>, horizon: usize) -> Result<DMatrix<f64>> {
    let d = feature_dim(measure)?;
    if x0.len() != d {
        return Err(SgotError::Dimension(format!("initial state has {} entries, expected {d}", x0.len())));
    }
    let ambient = measure.window.map_or(d, |w| w.ambient);
    let x0c = to_complex(&DMatrix::from_column_slice(d, 1, x0.as_slice()));
    // Per atom: the transposed spectral projector applied to x0.
    let mut modes: Vec<(C64, DMatrix<C64>)> = Vec::with_capacity(measure.atoms.len());
    for a in &measure.atoms {
        let inv = (a.alpha.adjoint() * &a.beta)
            .try_inverse()
            .ok_or_else(|| SgotError::DefectiveOperator("left and right bases are orthogonal".into()))?;
        let proj = &a.beta * inv * a.alpha.adjoint();
        modes.push((a.lambda, proj.transpose() * &x0c));
    }
    let mut out = DMatrix::zeros(horizon, ambient);
    for k in 0..horizon {
        let t = (k + 1) as f64 * measure.dt;
        let mut x = DMatrix::<C64>::zeros(d, 1);
        for (lambda, v) in &modes {
            x += v * (lambda * t).exp();
        }
        for c in 0..ambient {
            out[(k, c)] = x[(d - ambient + c, 0)].re;
        }
    }
    Ok(out)
}

/// Forecast from the last context window of an observed trajectory.
pub fn forecast_from_window(measure: &SpectralMeasure, init: &Trajectory, horizon: usize) -> Result<DMatrix<f64>> {
    let d = feature_dim(measure)?;
    let (context, ambient) = match measure.window {
        Some(w) => (w.context, w.ambient),
        None => (1, d),
    };
    if init.states.ncols() != ambient {
        return Err(SgotError::Dimension(format!(
            "initial trajectory has {} columns, expected {ambient}",
            init.states.ncols()
        )));
    }
    let t = init.states.nrows();
    if t < context {
        return Err(SgotError::InsufficientData(format!(
            "initial trajectory has {t} rows, the context window needs {context}"
        )));
    }
    let mut x0 = DVector::zeros(context * ambient);
    for s in 0..context {
        for c in 0..ambient {
            x0[s * ambient + c] = init.states[(t - context + s, c)];
        }
    }
    forecast(measure, &x0, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{fit_rrr, windowed_pairs, WindowLayout};
    use crate::kernels::KernelSpec;
    use crate::spectral_measure::{measure_from_operator, SpectralAtom};
    use crate::synth::{generate_trajectory, HarmonicSpec};

    fn scalar(lambda: f64) -> SpectralMeasure {
        let one = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        SpectralMeasure {
            kernel: KernelSpec::Linear,
            dt: 0.1,
            x_points: Representers::Features(1),
            y_points: Representers::Features(1),
            window: Some(WindowLayout { context: 1, ambient: 1, dt: 0.1 }),
            atoms: vec![SpectralAtom {
                lambda: C64::new(lambda, 0.0),
                multiplicity: 1,
                mass: 1.0,
                alpha: one.clone(),
                beta: one,
            }],
        }
    }

    #[test]
    fn zero_mode_is_constant() {
        let y = forecast(&scalar(0.0), &DVector::from_element(1, 2.5), 20).unwrap();
        assert!(y.iter().all(|v| *v == 2.5));
    }

    #[test]
    fn decaying_mode_follows_envelope() {
        let y = forecast(&scalar(-0.7), &DVector::from_element(1, 1.0), 50).unwrap();
        for k in 0..50 {
            let want = (-0.7 * (k + 1) as f64 * 0.1).exp();
            assert!((y[k] - want).abs() < 1e-6);
        }
    }

    #[test]
    fn noiseless_two_oscillators_one_period_ahead() {
        let specs = [HarmonicSpec::sine(0.5), HarmonicSpec::new(1.0, 0.0, 0.7)];
        let fs = 50.0;
        let full = generate_trajectory(&specs, fs, 801, 0.0, 0).unwrap();
        let train = full.states.rows(0, 600).into_owned();
        let data = windowed_pairs(&train, 50, full.dt).unwrap();
        let m = measure_from_operator(&fit_rrr(&data, &KernelSpec::Linear, 4, 1e-10).unwrap()).unwrap();
        let init = Trajectory { states: train, dt: full.dt };
        // One period of the slow component.
        let h = 100;
        let y = forecast_from_window(&m, &init, h).unwrap();
        let mut se = 0.0;
        for k in 0..h {
            se += (y[k] - full.states[600 + k]).powi(2);
        }
        let rmse = (se / h as f64).sqrt();
        let amp = full.states.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        assert!(rmse <= 1e-3 * amp, "{rmse}");
    }

    #[test]
    fn shape_errors() {
        let m = scalar(0.0);
        assert!(matches!(forecast(&m, &DVector::zeros(2), 3), Err(SgotError::Dimension(_))));
        let empty = Trajectory { states: DMatrix::zeros(0, 1), dt: 0.1 };
        assert!(matches!(forecast_from_window(&m, &empty, 3), Err(SgotError::InsufficientData(_))));
    }
}
