//! Scenario configuration, parsed from TOML.

use nalgebra::{Matrix3, SMatrix, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::control::{GainSet, Trajectory};
use crate::error::{Error, Result};
use crate::estimator::{AttitudeModel, ProcessNoise, ThrustSource, UnscentedScaling};
use crate::integrator::Tolerances;
use crate::params::{VehicleParams, VehiclePreset};
use crate::sensors::{ImuConfig, MocapConfig};
use crate::wind::WindProfile;

/// Version of the scenario file format this build reads.
pub const SCHEMA_VERSION: u32 = 1;

/// Everything needed to run one simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    /// Simulated time, s.
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    /// Controller and logging rate, Hz.
    #[serde(default = "default_control_rate")]
    pub control_rate: f64,
    #[serde(default = "yes")]
    pub aero: bool,
    #[serde(default)]
    pub vehicle: VehicleConfig,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default)]
    pub controller: GainSet,
    pub trajectory: Trajectory,
    #[serde(default)]
    pub wind: WindProfile,
    #[serde(default)]
    pub sensors: SensorsConfig,
    #[serde(default)]
    pub estimator: Option<EstimatorConfig>,
    #[serde(default)]
    pub integrator: Tolerances,
    /// Stop the run as failed once the position error exceeds this, m.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_position_error: Option<f64>,
}

fn default_control_rate() -> f64 {
    500.0
}

fn yes() -> bool {
    true
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs always serialize")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Config("duration must be positive".into()));
        }
        if !(self.control_rate > 0.0 && self.control_rate.is_finite()) {
            return Err(Error::Config("control_rate must be positive".into()));
        }
        self.vehicle.build()?;
        self.controller.validate()?;
        self.trajectory.validate()?;
        self.wind.validate()?;
        self.imu()?.validate()?;
        self.mocap()?.validate()?;
        self.rate_divisor(self.sensors.imu.rate)?;
        self.rate_divisor(self.sensors.mocap.rate)?;
        if let Some(est) = &self.estimator {
            est.validate()?;
        }
        if let Some(limit) = self.abort_position_error {
            if !(limit > 0.0) {
                return Err(Error::Config("abort_position_error must be positive".into()));
            }
        }
        if !(self.integrator.rtol > 0.0) || !(self.integrator.atol > 0.0) {
            return Err(Error::Config("integrator tolerances must be positive".into()));
        }
        Ok(())
    }

    pub fn control_dt(&self) -> f64 {
        1.0 / self.control_rate
    }

    /// Number of control steps between samples of a sensor at `rate`.
    pub fn rate_divisor(&self, rate: f64) -> Result<usize> {
        let ratio = self.control_rate / rate;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio {
            return Err(Error::Config(format!(
                "sensor rate {rate} Hz must divide the control rate {} Hz",
                self.control_rate
            )));
        }
        Ok(n as usize)
    }

    pub fn imu(&self) -> Result<ImuConfig> {
        let s = &self.sensors.imu;
        Ok(ImuConfig {
            lever_arm: s.lever_arm,
            mounting: rpy(&s.mounting_rpy),
            accel_noise: iso(s.accel_noise_std),
            gyro_noise: iso(s.gyro_noise_std),
            accel_bias_walk: s.accel_bias_walk,
            gyro_bias_walk: s.gyro_bias_walk,
            rate: s.rate,
        })
    }

    pub fn mocap(&self) -> Result<MocapConfig> {
        let s = &self.sensors.mocap;
        Ok(MocapConfig {
            position_noise: iso(s.position_noise_std),
            velocity_noise: iso(s.velocity_noise_std),
            attitude_noise: iso(s.attitude_noise_std),
            rate_noise: iso(s.rate_noise_std),
            rate: s.rate,
        })
    }

    /// Hash of the canonical serialized config.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("scenario configs always serialize");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn iso(std: f64) -> Matrix3<f64> {
    Matrix3::identity() * (std * std)
}

fn rpy(a: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_euler_angles(a.x, a.y, a.z)
}

/// A preset plus optional per-field overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleConfig {
    pub preset: VehiclePreset,
    /// Mass override; the preset inertia is scaled in proportion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parasitic_drag: Option<Vector3<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_flap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_max: Option<f64>,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self {
            preset: VehiclePreset::Default,
            mass: None,
            parasitic_drag: None,
            k_d: None,
            k_z: None,
            k_flap: None,
            tau_m: None,
            eta_min: None,
            eta_max: None,
        }
    }
}

impl VehicleConfig {
    pub fn build(&self) -> Result<VehicleParams> {
        let mut p = VehicleParams::preset(self.preset);
        if let Some(m) = self.mass {
            if !(m > 0.0) {
                return Err(Error::Config("vehicle mass must be positive".into()));
            }
            p.inertia *= m / p.mass;
            p.mass = m;
        }
        if let Some(c) = self.parasitic_drag {
            p.parasitic_drag = c;
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { p.$f = v; })* };
        }
        set!(k_d, k_z, k_flap, tau_m, eta_min, eta_max);
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialCondition {
    /// Start position; defaults to the trajectory's position at t = 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<Vector3<f64>>,
    pub velocity: Vector3<f64>,
    pub yaw: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorsConfig {
    pub imu: ImuSettings,
    pub mocap: MocapSettings,
}

/// IMU settings with isotropic noise, given as standard deviations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImuSettings {
    pub rate: f64,
    pub accel_noise_std: f64,
    pub gyro_noise_std: f64,
    pub accel_bias_walk: f64,
    pub gyro_bias_walk: f64,
    pub lever_arm: Vector3<f64>,
    /// Roll, pitch, yaw of the sensor relative to the body, rad.
    pub mounting_rpy: Vector3<f64>,
}

impl Default for ImuSettings {
    fn default() -> Self {
        Self {
            rate: 500.0,
            accel_noise_std: 0.05,
            gyro_noise_std: 0.005,
            accel_bias_walk: 0.0,
            gyro_bias_walk: 0.0,
            lever_arm: Vector3::zeros(),
            mounting_rpy: Vector3::zeros(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MocapSettings {
    pub rate: f64,
    pub position_noise_std: f64,
    pub velocity_noise_std: f64,
    pub attitude_noise_std: f64,
    pub rate_noise_std: f64,
}

impl Default for MocapSettings {
    fn default() -> Self {
        Self {
            rate: 100.0,
            position_noise_std: 1e-3,
            velocity_noise_std: 1e-2,
            attitude_noise_std: 1e-3,
            rate_noise_std: 1e-3,
        }
    }
}

/// Where the estimator's drag coefficients come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DragSource {
    /// Fly a still-air calibration trajectory first and fit the coefficients.
    Calibrate {
        trajectory: Trajectory,
        duration: f64,
        /// Seed of the calibration flight; defaults to the scenario seed + 1.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Fixed {
        coefficients: Vector3<f64>,
    },
    /// The vehicle's true parasitic drag coefficients.
    Truth,
}

/// Wind estimator settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub drag: DragSource,
    #[serde(default)]
    pub thrust_source: ThrustSource,
    #[serde(default = "default_attitude_model")]
    pub attitude_model: AttitudeModel,
    #[serde(default)]
    pub process_noise: ProcessNoise,
    #[serde(default)]
    pub scaling: UnscentedScaling,
    /// Accelerometer noise assumed by the filter; defaults to the sensor's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accel_noise_std: Option<f64>,
    /// Initial one-sigma uncertainty of each wind component, m/s.
    #[serde(default = "default_wind_std")]
    pub initial_wind_std: f64,
    /// Start of the error-metric window, s.
    #[serde(default = "default_window")]
    pub rmse_window_start: f64,
}

fn default_attitude_model() -> AttitudeModel {
    AttitudeModel::FirstOrder { tau: 0.05 }
}

fn default_wind_std() -> f64 {
    3.0
}

fn default_window() -> f64 {
    5.0
}

impl EstimatorConfig {
    pub fn new(drag: DragSource) -> Self {
        Self {
            drag,
            thrust_source: ThrustSource::Commanded,
            attitude_model: default_attitude_model(),
            process_noise: ProcessNoise::default(),
            scaling: UnscentedScaling::default(),
            accel_noise_std: None,
            initial_wind_std: default_wind_std(),
            rmse_window_start: default_window(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let DragSource::Calibrate { trajectory, duration, .. } = &self.drag {
            trajectory.validate()?;
            if !(*duration > 0.0) {
                return Err(Error::Config("calibration duration must be positive".into()));
            }
        }
        if let DragSource::Fixed { coefficients } = &self.drag {
            if coefficients.iter().any(|c| !(*c >= 0.0)) {
                return Err(Error::Config("drag coefficients must be nonnegative".into()));
            }
        }
        if !(self.initial_wind_std > 0.0) || !(self.rmse_window_start >= 0.0) {
            return Err(Error::Config("initial_wind_std must be positive and rmse_window_start nonnegative".into()));
        }
        let s = self.scaling;
        if !(s.alpha > 0.0) || !(s.alpha * s.alpha * (12.0 + s.kappa) > 0.0) {
            return Err(Error::Config("unscented scaling must give a positive spread".into()));
        }
        Ok(())
    }
}

/// Block-diagonal mocap covariance in the filter's measurement order.
pub(crate) fn mocap_covariance(m: &MocapSettings) -> SMatrix<f64, 9, 9> {
    let mut r = SMatrix::<f64, 9, 9>::zeros();
    for i in 0..3 {
        r[(i, i)] = m.position_noise_std.powi(2).max(1e-12);
        r[(3 + i, 3 + i)] = m.velocity_noise_std.powi(2).max(1e-12);
        r[(6 + i, 6 + i)] = m.attitude_noise_std.powi(2).max(1e-12);
    }
    r
}
