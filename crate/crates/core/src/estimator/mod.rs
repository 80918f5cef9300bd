//! Wind estimation with an unscented Kalman filter.
//!
//! The filter state is position, velocity, attitude, and wind. Attitude
//! lives on the unit quaternions; the covariance is kept over a 12-dim
//! error state with right-multiplied attitude perturbations. Wind enters
//! the model only through quadratic drag on the air-relative velocity,
//! which makes it observable from the accelerometer.

mod calibration;
mod model;
mod ukf;

pub use calibration::{
    calibrate_drag, CalibrationSample, DragCalibration, MIN_EXCITATION, MIN_SENSITIVITY, SENSITIVITY_AIRSPEED,
};
pub use model::{
    accel_model, model_drag, predict, process_model, update, AttitudeModel, ControlInput, MeasurementNoise,
    ProcessModelParams, ProcessNoise,
};
pub use ukf::{
    sigma_points, unscented_update, vector_sigma_points, Covariance, ErrorVector, NavState, SigmaPoints, UkfBelief,
    UnscentedScaling, UpdateResult, ERROR_DIM,
};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sensors::SensorMeasurement;

/// Which thrust value the filter is told about.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThrustSource {
    /// The controller's request, before motor saturation and lag.
    #[default]
    Commanded,
    /// The thrust the rotors actually produce.
    True,
}

/// Stateful wrapper that owns the belief and counts skipped updates.
#[derive(Clone, Debug)]
pub struct WindEstimator {
    belief: UkfBelief,
    params: ProcessModelParams,
    noise: MeasurementNoise,
    scaling: UnscentedScaling,
    tolerance: f64,
    skipped: usize,
    last_nis: Option<f64>,
}

impl WindEstimator {
    pub fn new(
        initial: UkfBelief,
        params: ProcessModelParams,
        noise: MeasurementNoise,
        scaling: UnscentedScaling,
    ) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            belief: initial,
            params,
            noise,
            scaling,
            tolerance: 1e-6,
            skipped: 0,
            last_nis: None,
        })
    }

    /// Maximum allowed gap between measurement and belief timestamps.
    pub fn with_time_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn predict(&mut self, u: &ControlInput, dt: f64) -> Result<()> {
        self.belief = predict(&self.belief, u, dt, &self.params, &self.scaling)?;
        Ok(())
    }

    /// Returns the NIS, or `None` if the update was skipped.
    pub fn update(&mut self, meas: &SensorMeasurement, thrust: f64) -> Result<Option<f64>> {
        let out = update(
            &self.belief,
            meas,
            &self.noise,
            thrust,
            &self.params,
            &self.scaling,
            self.tolerance,
        )?;
        if out.skipped {
            self.skipped += 1;
        }
        self.belief = out.belief;
        self.last_nis = out.nis;
        Ok(out.nis)
    }

    pub fn belief(&self) -> &UkfBelief {
        &self.belief
    }

    pub fn params(&self) -> &ProcessModelParams {
        &self.params
    }

    pub fn wind(&self) -> Vector3<f64> {
        self.belief.mean.wind
    }

    /// One-sigma wind uncertainty per axis.
    pub fn wind_std(&self) -> Vector3<f64> {
        Vector3::from_fn(|i, _| self.belief.cov[(9 + i, 9 + i)].max(0.0).sqrt())
    }

    pub fn skipped_updates(&self) -> usize {
        self.skipped
    }

    pub fn last_nis(&self) -> Option<f64> {
        self.last_nis
    }
}
