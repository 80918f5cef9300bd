//! Inertial measurement unit and motion-capture sensor models.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math::{exp_map, psd_cholesky};
use crate::state::VehicleState;

/// IMU intrinsics and extrinsics.
#[derive(Clone, Debug, PartialEq)]
pub struct ImuConfig {
    /// Sensor position in the body frame, m.
    pub lever_arm: Vector3<f64>,
    /// Rotation from the body frame to the sensor frame.
    pub mounting: UnitQuaternion<f64>,
    /// Accelerometer white-noise covariance, (m/s²)².
    pub accel_noise: Matrix3<f64>,
    /// Gyroscope white-noise covariance, (rad/s)².
    pub gyro_noise: Matrix3<f64>,
    /// Accelerometer bias random-walk intensity, m/s² per √s.
    pub accel_bias_walk: f64,
    /// Gyroscope bias random-walk intensity, rad/s per √s.
    pub gyro_bias_walk: f64,
    /// Sample rate, Hz.
    pub rate: f64,
}

impl ImuConfig {
    /// Noise-free, bias-free sensor at the center of mass.
    pub fn ideal(rate: f64) -> Self {
        Self {
            lever_arm: Vector3::zeros(),
            mounting: UnitQuaternion::identity(),
            accel_noise: Matrix3::zeros(),
            gyro_noise: Matrix3::zeros(),
            accel_bias_walk: 0.0,
            gyro_bias_walk: 0.0,
            rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_rate(self.rate)?;
        check_cov("accel_noise", &self.accel_noise)?;
        check_cov("gyro_noise", &self.gyro_noise)?;
        if !(self.accel_bias_walk >= 0.0) || !(self.gyro_bias_walk >= 0.0) {
            return Err(Error::Config("bias random-walk intensities must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Motion-capture noise model.
#[derive(Clone, Debug, PartialEq)]
pub struct MocapConfig {
    pub position_noise: Matrix3<f64>,
    pub velocity_noise: Matrix3<f64>,
    /// Covariance of the small-angle attitude perturbation, rad².
    pub attitude_noise: Matrix3<f64>,
    pub rate_noise: Matrix3<f64>,
    pub rate: f64,
}

impl MocapConfig {
    pub fn ideal(rate: f64) -> Self {
        Self {
            position_noise: Matrix3::zeros(),
            velocity_noise: Matrix3::zeros(),
            attitude_noise: Matrix3::zeros(),
            rate_noise: Matrix3::zeros(),
            rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_rate(self.rate)?;
        check_cov("position_noise", &self.position_noise)?;
        check_cov("velocity_noise", &self.velocity_noise)?;
        check_cov("attitude_noise", &self.attitude_noise)?;
        check_cov("rate_noise", &self.rate_noise)
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("sensor rate must be positive, got {rate}")))
    }
}

fn check_cov(name: &str, m: &Matrix3<f64>) -> Result<()> {
    let symmetric = (m - m.transpose()).abs().max() <= 1e-12 * m.abs().max().max(1.0);
    if symmetric && psd_cholesky(m).is_some() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be symmetric positive semidefinite")))
    }
}

/// Accelerometer and gyroscope biases.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ImuBias {
    pub accel: Vector3<f64>,
    pub gyro: Vector3<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeasurementKind {
    Imu {
        accel: Vector3<f64>,
        gyro: Vector3<f64>,
    },
    Mocap {
        position: Vector3<f64>,
        velocity: Vector3<f64>,
        attitude: UnitQuaternion<f64>,
        body_rates: Vector3<f64>,
    },
}

/// Timestamped sensor sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorMeasurement {
    pub t: f64,
    pub kind: MeasurementKind,
}

/// Draw from N(0, Σ) given a factor `L` with `L Lᵀ = Σ`.
fn gaussian<R: Rng + ?Sized>(factor: &Matrix3<f64>, rng: &mut R) -> Vector3<f64> {
    let n = Vector3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    factor * n
}

fn factor(cov: &Matrix3<f64>) -> Matrix3<f64> {
    psd_cholesky(cov).unwrap_or_else(Matrix3::zeros)
}

/// Noise-free specific force at the sensor, in the sensor frame.
///
/// `accel_world` is the center-of-mass acceleration from the dynamics.
pub fn ideal_specific_force(
    state: &VehicleState,
    accel_world: &Vector3<f64>,
    cfg: &ImuConfig,
    gravity: f64,
) -> Vector3<f64> {
    let omega = state.body_rates;
    let body = state
        .attitude
        .inverse_transform_vector(&(accel_world + Vector3::new(0.0, 0.0, gravity)));
    cfg.mounting.transform_vector(&body) + omega.cross(&omega.cross(&cfg.lever_arm))
}

/// IMU sample: specific force and angular rate with bias and white noise.
pub fn imu_measure<R: Rng + ?Sized>(
    state: &VehicleState,
    accel_world: &Vector3<f64>,
    cfg: &ImuConfig,
    bias: &ImuBias,
    gravity: f64,
    rng: &mut R,
) -> SensorMeasurement {
    let accel = ideal_specific_force(state, accel_world, cfg, gravity)
        + bias.accel
        + gaussian(&factor(&cfg.accel_noise), rng);
    let gyro = state.body_rates + bias.gyro + gaussian(&factor(&cfg.gyro_noise), rng);
    SensorMeasurement {
        t: state.t,
        kind: MeasurementKind::Imu { accel, gyro },
    }
}

/// Motion-capture sample. The attitude noise is a right (body-frame)
/// perturbation `q ⊗ Exp(θ)`, θ ~ N(0, Σ_q).
pub fn mocap_measure<R: Rng + ?Sized>(state: &VehicleState, cfg: &MocapConfig, rng: &mut R) -> SensorMeasurement {
    let position = state.position + gaussian(&factor(&cfg.position_noise), rng);
    let velocity = state.velocity + gaussian(&factor(&cfg.velocity_noise), rng);
    let theta = gaussian(&factor(&cfg.attitude_noise), rng);
    let attitude = state.attitude * exp_map(&theta);
    let body_rates = state.body_rates + gaussian(&factor(&cfg.rate_noise), rng);
    SensorMeasurement {
        t: state.t,
        kind: MeasurementKind::Mocap {
            position,
            velocity,
            attitude,
            body_rates,
        },
    }
}

/// Random-walk step `b + √dt · intensity · n`, n ~ N(0, I).
pub fn bias_step<R: Rng + ?Sized>(bias: &Vector3<f64>, intensity: f64, dt: f64, rng: &mut R) -> Vector3<f64> {
    let n = Vector3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    bias + dt.sqrt() * intensity * n
}

/// IMU with its own bias state and noise stream.
#[derive(Clone, Debug)]
pub struct Imu<R> {
    pub config: ImuConfig,
    pub bias: ImuBias,
    rng: R,
}

impl<R: Rng> Imu<R> {
    pub fn new(config: ImuConfig, rng: R) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            bias: ImuBias::default(),
            rng,
        })
    }

    /// Sample, then advance the biases by `dt`.
    pub fn sample(&mut self, state: &VehicleState, accel_world: &Vector3<f64>, gravity: f64, dt: f64) -> SensorMeasurement {
        let m = imu_measure(state, accel_world, &self.config, &self.bias, gravity, &mut self.rng);
        self.bias.accel = bias_step(&self.bias.accel, self.config.accel_bias_walk, dt, &mut self.rng);
        self.bias.gyro = bias_step(&self.bias.gyro, self.config.gyro_bias_walk, dt, &mut self.rng);
        m
    }
}

#[derive(Clone, Debug)]
pub struct Mocap<R> {
    pub config: MocapConfig,
    rng: R,
}

impl<R: Rng> Mocap<R> {
    pub fn new(config: MocapConfig, rng: R) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, rng })
    }

    pub fn sample(&mut self, state: &VehicleState) -> SensorMeasurement {
        mocap_measure(state, &self.config, &mut self.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::dynamics;
    use crate::params::VehicleParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn accel_of(state: &VehicleState, p: &VehicleParams) -> Vector3<f64> {
        dynamics(state, &state.rotor_speeds.clone(), &Vector3::zeros(), p, true)
            .unwrap()
            .velocity
    }

    #[test]
    fn hover_reads_gravity() {
        let p = VehicleParams::default_quad();
        let s = VehicleState::at_rest(Vector3::zeros(), 4, p.hover_rotor_speed());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = imu_measure(&s, &accel_of(&s, &p), &ImuConfig::ideal(500.0), &ImuBias::default(), p.gravity, &mut rng);
        let MeasurementKind::Imu { accel, gyro } = m.kind else { panic!() };
        assert!((accel - Vector3::new(0.0, 0.0, p.gravity)).norm() < 1e-12);
        assert_eq!(gyro, Vector3::zeros());
    }

    #[test]
    fn free_fall_reads_zero() {
        let p = VehicleParams::default_quad();
        let s = VehicleState::at_rest(Vector3::zeros(), 4, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = imu_measure(&s, &accel_of(&s, &p), &ImuConfig::ideal(500.0), &ImuBias::default(), p.gravity, &mut rng);
        let MeasurementKind::Imu { accel, .. } = m.kind else { panic!() };
        assert!(accel.norm() < 1e-12);
    }

    #[test]
    fn spin_adds_centripetal_term() {
        let p = VehicleParams::default_quad();
        let mut s = VehicleState::at_rest(Vector3::zeros(), 4, p.hover_rotor_speed());
        s.body_rates = Vector3::new(0.0, 0.0, 10.0);
        let mut cfg = ImuConfig::ideal(500.0);
        cfg.lever_arm = Vector3::new(0.01, 0.0, 0.0);
        // Ω × r = (0, 0.1, 0); Ω × (0, 0.1, 0) = (−1, 0, 0).
        let accel_world = Vector3::zeros();
        let base = ideal_specific_force(&s, &accel_world, &ImuConfig::ideal(500.0), p.gravity);
        let with_arm = ideal_specific_force(&s, &accel_world, &cfg, p.gravity);
        assert!((with_arm - base - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn stationary_any_attitude_reads_g() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let mut s = VehicleState::at_rest(Vector3::zeros(), 4, 0.0);
            s.attitude = UnitQuaternion::from_euler_angles(rng.random_range(-3.0..3.0), rng.random_range(-1.5..1.5), rng.random_range(-3.0..3.0));
            let mut cfg = ImuConfig::ideal(500.0);
            cfg.lever_arm = Vector3::new(rng.random_range(-0.1..0.1), 0.02, -0.01);
            cfg.mounting = UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3);
            let f = ideal_specific_force(&s, &Vector3::zeros(), &cfg, 9.81);
            assert!((f.norm() - 9.81).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_noise_mocap_is_exact() {
        let mut s = VehicleState::at_rest(Vector3::new(1.0, 2.0, 3.0), 4, 100.0);
        s.attitude = UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3);
        s.velocity = Vector3::new(0.1, 0.2, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = mocap_measure(&s, &MocapConfig::ideal(100.0), &mut rng);
        let MeasurementKind::Mocap { position, velocity, attitude, body_rates } = m.kind else { panic!() };
        assert_eq!(position, s.position);
        assert_eq!(velocity, s.velocity);
        assert_eq!(attitude, s.attitude);
        assert_eq!(body_rates, s.body_rates);
    }

    #[test]
    fn mocap_attitude_error_is_maxwell_distributed() {
        let sigma = 1e-3;
        let mut cfg = MocapConfig::ideal(100.0);
        cfg.attitude_noise = Matrix3::identity() * sigma * sigma;
        let mut s = VehicleState::at_rest(Vector3::zeros(), 4, 0.0);
        s.attitude = UnitQuaternion::from_euler_angles(0.5, -0.3, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let MeasurementKind::Mocap { attitude, .. } = mocap_measure(&s, &cfg, &mut rng).kind else { panic!() };
            assert!((attitude.norm() - 1.0).abs() < 1e-12);
            sum += s.attitude.angle_to(&attitude);
        }
        let mean = sum / n as f64;
        // Mean norm of a 3-D isotropic Gaussian vector.
        let expected = sigma * (8.0 / std::f64::consts::PI).sqrt();
        assert!((mean / expected - 1.0).abs() < 0.05, "mean {mean} expected {expected}");
    }

    #[test]
    fn bias_walk_variance_grows_linearly() {
        let (rw, dt, steps, paths) = (0.02, 0.01, 50, 100_000);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut sum_sq = 0.0;
        for _ in 0..paths {
            let mut b = Vector3::zeros();
            for _ in 0..steps {
                b = bias_step(&b, rw, dt, &mut rng);
            }
            sum_sq += b.x * b.x;
        }
        let var = sum_sq / paths as f64;
        let expected = steps as f64 * dt * rw * rw;
        // Sample variance of a Gaussian has relative std √(2/N).
        let bound = 3.0 * expected * (2.0 / paths as f64).sqrt();
        assert!((var - expected).abs() < bound, "var {var} expected {expected}");
    }

    #[test]
    fn bias_walk_zero_and_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = Vector3::new(0.1, 0.2, 0.3);
        assert_eq!(bias_step(&b, 0.0, 0.01, &mut rng), b);
        let path = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10).fold(Vector3::zeros(), |b, _| bias_step(&b, 0.1, 0.01, &mut rng))
        };
        assert_eq!(path(5), path(5));
        assert_ne!(path(5), path(6));
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let mut cfg = ImuConfig::ideal(500.0);
        cfg.accel_noise[(0, 0)] = -1.0;
        assert!(cfg.validate().is_err());
        assert!(ImuConfig::ideal(0.0).validate().is_err());
    }
}
