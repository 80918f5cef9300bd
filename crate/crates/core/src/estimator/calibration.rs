//! Least-squares fit of quadratic drag coefficients from flight data.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One accelerometer sample with the quantities the fit needs.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationSample {
    pub velocity: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
    /// Wind during the sample; zero for still-air calibration flights.
    pub wind: Vector3<f64>,
    /// Collective thrust used by the model, N.
    pub thrust: f64,
    /// Body-frame accelerometer reading.
    pub accel: Vector3<f64>,
}

/// Fitted coefficients and fit quality per body axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DragCalibration {
    pub coefficients: Vector3<f64>,
    /// Unclamped least-squares estimate.
    pub raw: Vector3<f64>,
    pub std_error: Vector3<f64>,
    /// RMS of the fit residual, N.
    pub residual_rms: Vector3<f64>,
    /// RMS of the regressor |va| va_i, (m/s)².
    pub excitation: Vector3<f64>,
    pub samples: usize,
    /// Axes whose fit is not trustworthy.
    pub weak_axes: [bool; 3],
}

impl DragCalibration {
    pub fn warning(&self) -> bool {
        self.weak_axes.iter().any(|w| *w)
    }
}

/// Regressor RMS below this is treated as no excitation.
pub const MIN_EXCITATION: f64 = 0.1;

/// Airspeed at which drag sensitivity is judged, m/s.
pub const SENSITIVITY_AIRSPEED: f64 = 1.0;

/// Smallest useful change in drag acceleration per m/s of airspeed
/// change at [`SENSITIVITY_AIRSPEED`], 1/s. Below this, a 1 m/s wind
/// error moves the predicted specific force by less than typical
/// accelerometer noise and wind is barely observable.
pub const MIN_SENSITIVITY: f64 = 0.1;

/// Fit `m a_i - T δ_i3 = -C_i |va| va_i` per body axis.
///
/// Axes where the coefficient is clamped, insignificant (below three
/// standard errors), poorly excited, or too small for the drag to
/// reveal the wind (see [`MIN_SENSITIVITY`]) are flagged in `weak_axes`.
pub fn calibrate_drag(samples: &[CalibrationSample], mass: f64) -> Result<DragCalibration> {
    if samples.len() < 2 {
        return Err(Error::EmptyWindow(format!(
            "drag calibration needs at least two samples, got {}",
            samples.len()
        )));
    }
    if !(mass > 0.0) {
        return Err(Error::Config("calibration mass must be positive".into()));
    }
    let n = samples.len();
    let mut yr = Vector3::zeros();
    let mut rr = Vector3::zeros();
    let mut rows = Vec::with_capacity(n);
    for s in samples {
        let va = s.attitude.inverse_transform_vector(&(s.velocity - s.wind));
        let r = va * va.norm();
        let y = s.accel * mass - Vector3::z() * s.thrust;
        yr += y.component_mul(&r);
        rr += r.component_mul(&r);
        rows.push((y, r));
    }
    let mut out = DragCalibration {
        coefficients: Vector3::zeros(),
        raw: Vector3::zeros(),
        std_error: Vector3::zeros(),
        residual_rms: Vector3::zeros(),
        excitation: Vector3::zeros(),
        samples: n,
        weak_axes: [false; 3],
    };
    for i in 0..3 {
        out.excitation[i] = (rr[i] / n as f64).sqrt();
        if rr[i] <= 0.0 {
            out.weak_axes[i] = true;
            out.residual_rms[i] = (rows.iter().map(|(y, _)| y[i] * y[i]).sum::<f64>() / n as f64).sqrt();
            out.std_error[i] = f64::INFINITY;
            continue;
        }
        let raw = -yr[i] / rr[i];
        let sse: f64 = rows.iter().map(|(y, r)| (y[i] + raw * r[i]).powi(2)).sum();
        out.raw[i] = raw;
        out.coefficients[i] = raw.max(0.0);
        out.residual_rms[i] = (sse / n as f64).sqrt();
        out.std_error[i] = (sse / (n - 1) as f64 / rr[i]).sqrt();
        let sensitivity = 2.0 * out.coefficients[i] * SENSITIVITY_AIRSPEED / mass;
        out.weak_axes[i] = raw <= 0.0
            || raw < 3.0 * out.std_error[i]
            || out.excitation[i] < MIN_EXCITATION
            || sensitivity < MIN_SENSITIVITY;
    }
    Ok(out)
}
