//! Process and measurement models used by the wind estimator.

use nalgebra::{Matrix3, SMatrix, SVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{exp_map, log_map, symmetrize};
use crate::sensors::{MeasurementKind, SensorMeasurement};

use super::ukf::{
    recombine, sigma_points, unscented_update, Covariance, NavState, UkfBelief, UnscentedScaling, UpdateResult,
};

/// How the filter propagates attitude between measurements.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttitudeModel {
    /// First-order lag toward the commanded attitude.
    FirstOrder { tau: f64 },
    /// Attitude held constant.
    Frozen,
}

/// Diagonal process-noise intensities, per second.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProcessNoise {
    /// m²/s
    pub position: f64,
    /// (m/s)²/s
    pub velocity: f64,
    /// rad²/s
    pub attitude: f64,
    /// Wind random-walk intensity, (m/s)²/s.
    pub wind: f64,
}

impl Default for ProcessNoise {
    fn default() -> Self {
        Self {
            position: 1e-6,
            velocity: 1e-2,
            attitude: 1e-3,
            wind: 0.5,
        }
    }
}

impl ProcessNoise {
    pub fn matrix(&self) -> Covariance {
        let mut q = Covariance::zeros();
        for i in 0..3 {
            q[(i, i)] = self.position;
            q[(3 + i, 3 + i)] = self.velocity;
            q[(6 + i, 6 + i)] = self.attitude;
            q[(9 + i, 9 + i)] = self.wind;
        }
        q
    }
}

/// What the filter believes about the vehicle.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessModelParams {
    pub mass: f64,
    /// Quadratic drag coefficients, N/(m/s)², body axes.
    pub drag: Vector3<f64>,
    pub gravity: f64,
    pub attitude_model: AttitudeModel,
    pub noise: ProcessNoise,
}

impl ProcessModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::Config("estimator mass must be positive".into()));
        }
        if !self.drag.iter().all(|c| *c >= 0.0 && c.is_finite()) {
            return Err(Error::Config("estimator drag coefficients must be nonnegative".into()));
        }
        if let AttitudeModel::FirstOrder { tau } = self.attitude_model {
            if !(tau > 0.0) {
                return Err(Error::Config("attitude time constant must be positive".into()));
            }
        }
        let n = self.noise;
        if [n.position, n.velocity, n.attitude, n.wind].iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("process noise must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Inputs the filter sees each step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlInput {
    /// Collective thrust, N.
    pub thrust: f64,
    /// Commanded attitude.
    pub attitude: UnitQuaternion<f64>,
}

/// Measurement noise covariances.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementNoise {
    pub accel: Matrix3<f64>,
    /// Position, velocity, attitude blocks.
    pub mocap: SMatrix<f64, 9, 9>,
}

/// Body-frame drag force predicted by the filter's model.
pub fn model_drag(body_airspeed: &Vector3<f64>, drag: &Vector3<f64>) -> Vector3<f64> {
    -body_airspeed.norm() * drag.component_mul(body_airspeed)
}

/// Predicted accelerometer reading (body frame).
pub fn accel_model(x: &NavState, thrust: f64, p: &ProcessModelParams) -> Vector3<f64> {
    let va = x.attitude.inverse_transform_vector(&(x.velocity - x.wind));
    (Vector3::z() * thrust + model_drag(&va, &p.drag)) / p.mass
}

fn translational_accel(
    v: &Vector3<f64>,
    wind: &Vector3<f64>,
    attitude: &UnitQuaternion<f64>,
    thrust: f64,
    p: &ProcessModelParams,
) -> Vector3<f64> {
    let va = attitude.inverse_transform_vector(&(v - wind));
    let body = Vector3::z() * thrust + model_drag(&va, &p.drag);
    attitude.transform_vector(&body) / p.mass - Vector3::z() * p.gravity
}

/// Propagate one state through the deterministic process model.
pub fn process_model(x: &NavState, u: &ControlInput, dt: f64, p: &ProcessModelParams) -> NavState {
    let attitude = match p.attitude_model {
        AttitudeModel::Frozen => x.attitude,
        AttitudeModel::FirstOrder { tau } => {
            let frac = 1.0 - (-dt / tau).exp();
            x.attitude * exp_map(&(log_map(&(x.attitude.inverse() * u.attitude)) * frac))
        }
    };
    // One RK4 step on (p, v) with the starting attitude held.
    let acc = |v: &Vector3<f64>| translational_accel(v, &x.wind, &x.attitude, u.thrust, p);
    let v0 = x.velocity;
    let a1 = acc(&v0);
    let v1 = v0 + a1 * (dt / 2.0);
    let a2 = acc(&v1);
    let v2 = v0 + a2 * (dt / 2.0);
    let a3 = acc(&v2);
    let v3 = v0 + a3 * dt;
    let a4 = acc(&v3);
    NavState {
        position: x.position + (v0 + 2.0 * v1 + 2.0 * v2 + v3) * (dt / 6.0),
        velocity: v0 + (a1 + 2.0 * a2 + 2.0 * a3 + a4) * (dt / 6.0),
        attitude,
        wind: x.wind,
    }
}

/// Time update.
pub fn predict(
    belief: &UkfBelief,
    u: &ControlInput,
    dt: f64,
    p: &ProcessModelParams,
    scaling: &UnscentedScaling,
) -> Result<UkfBelief> {
    let sp = sigma_points(belief, scaling)?;
    let propagated: Vec<NavState> = sp.points.iter().map(|x| process_model(x, u, dt, p)).collect();
    let (mean, devs) = recombine(&propagated, &sp.wm);
    let mut cov = p.noise.matrix() * dt;
    for (d, w) in devs.iter().zip(&sp.wc) {
        cov += d * d.transpose() * *w;
    }
    symmetrize(&mut cov);
    if !mean.is_finite() || !cov.iter().all(|c| c.is_finite()) {
        return Err(Error::Divergence { t: belief.t + dt });
    }
    Ok(UkfBelief {
        mean,
        cov,
        t: belief.t + dt,
    })
}

/// Measurement update for an IMU or mocap sample.
///
/// The gyroscope channel is not used. `tolerance` bounds the allowed gap
/// between the measurement and belief timestamps.
pub fn update(
    belief: &UkfBelief,
    meas: &SensorMeasurement,
    noise: &MeasurementNoise,
    thrust: f64,
    p: &ProcessModelParams,
    scaling: &UnscentedScaling,
    tolerance: f64,
) -> Result<UpdateResult> {
    if (meas.t - belief.t).abs() > tolerance {
        return Err(Error::Config(format!(
            "measurement at t = {} is not aligned with belief at t = {}",
            meas.t, belief.t
        )));
    }
    match &meas.kind {
        MeasurementKind::Imu { accel, .. } => {
            unscented_update(belief, scaling, accel, &noise.accel, |x, _| accel_model(x, thrust, p))
        }
        MeasurementKind::Mocap {
            position,
            velocity,
            attitude,
            ..
        } => {
            let mean_att = belief.mean.attitude;
            let z = stack(position, velocity, &log_map(&(mean_att.inverse() * attitude)));
            unscented_update(belief, scaling, &z, &noise.mocap, |x, _| {
                stack(&x.position, &x.velocity, &log_map(&(mean_att.inverse() * x.attitude)))
            })
        }
    }
}

fn stack(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> SVector<f64, 9> {
    let mut z = SVector::<f64, 9>::zeros();
    z.fixed_rows_mut::<3>(0).copy_from(a);
    z.fixed_rows_mut::<3>(3).copy_from(b);
    z.fixed_rows_mut::<3>(6).copy_from(c);
    z
}
