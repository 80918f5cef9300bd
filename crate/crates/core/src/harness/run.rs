//! The closed-loop simulation.

use nalgebra::{UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::actuators::Mixer;
use crate::control::{Se3Controller, Trajectory};
use crate::dynamics::{control_wrench, dynamics_unchecked};
use crate::error::{Error, Result};
use crate::estimator::{
    calibrate_drag, AttitudeModel, ControlInput, Covariance, DragCalibration, MeasurementNoise, NavState,
    ProcessModelParams, ThrustSource, UkfBelief, WindEstimator,
};
use crate::integrator::Integrator;
use crate::params::VehicleParams;
use crate::sensors::{Imu, MeasurementKind, Mocap};
use crate::state::VehicleState;
use crate::wind::{WindField, WindProfile};

use super::config::{mocap_covariance, DragSource, EstimatorConfig, ScenarioConfig};
use super::metrics::{derive_seed, rmse, Rmse};
use super::results::{EstimateSample, FailureRecord, ImuSample, MocapSample, ResultsRow, ResultsTable};

const IMU_STREAM: u64 = 1;
const MOCAP_STREAM: u64 = 2;
const WIND_STREAM: u64 = 3;
const CALIBRATION_STREAM: u64 = 4;

/// Position magnitude treated as a blow-up, m.
const BLOW_UP: f64 = 1e4;

/// Run a scenario.
///
/// Configuration problems are returned as errors. A simulation that fails
/// part-way returns the rows collected so far with
/// `metadata.failure` set.
pub fn run(config: &ScenarioConfig) -> Result<ResultsTable> {
    config.validate()?;
    let params = config.vehicle.build()?;
    let calibration = match calibration_flight_config(config) {
        Some(cfg) => {
            let flight = simulate(&cfg, &cfg.vehicle.build()?, None)?;
            if let Some(f) = &flight.metadata.failure {
                let mut table = ResultsTable::new(config);
                table.metadata.failure = Some(FailureRecord {
                    t: f.t,
                    cause: format!("calibration flight failed: {}", f.cause),
                });
                return Ok(table);
            }
            Some(calibrate_drag(&flight.calibration_samples(), params.mass)?)
        }
        None => None,
    };
    let drag = config.estimator.as_ref().map(|e| match &e.drag {
        DragSource::Calibrate { .. } => calibration.as_ref().expect("fitted above").coefficients,
        DragSource::Fixed { coefficients } => *coefficients,
        DragSource::Truth => params.parasitic_drag,
    });
    let mut table = simulate(config, &params, drag)?;
    table.metadata.calibration = calibration;
    Ok(table)
}

/// The still-air flight used to fit drag coefficients.
pub fn calibration_config(base: &ScenarioConfig, trajectory: &Trajectory, duration: f64, seed: u64) -> ScenarioConfig {
    let mut cfg = base.clone();
    cfg.name = format!("{}-calibration", base.name);
    cfg.trajectory = trajectory.clone();
    cfg.duration = duration;
    cfg.seed = seed;
    cfg.wind = WindProfile::default();
    cfg.estimator = None;
    cfg.initial = Default::default();
    cfg
}

/// The calibration flight `run` performs before `config`, if its estimator
/// fits drag from one.
pub fn calibration_flight_config(config: &ScenarioConfig) -> Option<ScenarioConfig> {
    match config.estimator.as_ref().map(|e| &e.drag) {
        Some(DragSource::Calibrate {
            trajectory,
            duration,
            seed,
        }) => {
            let seed = seed.unwrap_or_else(|| derive_seed(config.seed, CALIBRATION_STREAM));
            Some(calibration_config(config, trajectory, *duration, seed))
        }
        _ => None,
    }
}

/// Fit drag coefficients from a calibration flight of `config`'s vehicle.
pub fn calibrate(config: &ScenarioConfig) -> Result<(ResultsTable, DragCalibration)> {
    let table = run(config)?;
    if let Some(f) = &table.metadata.failure {
        return Err(Error::Config(format!("calibration flight failed at t = {}: {}", f.t, f.cause)));
    }
    let fit = calibrate_drag(&table.calibration_samples(), config.vehicle.build()?.mass)?;
    Ok((table, fit))
}

fn initial_state(config: &ScenarioConfig, params: &VehicleParams) -> VehicleState {
    let start = config.trajectory.sample(0.0);
    let position = config.initial.position.unwrap_or(start.position);
    let mut s = VehicleState::at_rest(position, params.rotor_count(), params.hover_rotor_speed());
    s.velocity = config.initial.velocity;
    s.attitude = UnitQuaternion::from_euler_angles(0.0, 0.0, config.initial.yaw);
    s
}

fn wind_field(config: &ScenarioConfig) -> Result<WindField> {
    let mut profile = config.wind.clone();
    if let WindProfile::Dryden(p) = &mut profile {
        p.seed = derive_seed(config.seed ^ p.seed, WIND_STREAM);
    }
    WindField::new(profile)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn build_estimator(
    est: &EstimatorConfig,
    config: &ScenarioConfig,
    params: &VehicleParams,
    drag: Vector3<f64>,
    first_fix: &MocapSample,
) -> Result<WindEstimator> {
    let dt = config.control_dt();
    let accel_std = est.accel_noise_std.unwrap_or(config.sensors.imu.accel_noise_std).max(1e-6);
    let mocap = mocap_covariance(&config.sensors.mocap);
    let mut cov = Covariance::zeros();
    for i in 0..3 {
        cov[(i, i)] = mocap[(i, i)];
        cov[(3 + i, 3 + i)] = mocap[(3 + i, 3 + i)];
        cov[(6 + i, 6 + i)] = match est.attitude_model {
            AttitudeModel::Frozen => 0.0,
            AttitudeModel::FirstOrder { .. } => mocap[(6 + i, 6 + i)],
        };
        cov[(9 + i, 9 + i)] = est.initial_wind_std.powi(2);
    }
    let belief = UkfBelief {
        mean: NavState {
            position: first_fix.position,
            velocity: first_fix.velocity,
            attitude: first_fix.attitude,
            wind: Vector3::zeros(),
        },
        cov,
        t: 0.0,
    };
    let process = ProcessModelParams {
        mass: params.mass,
        drag,
        gravity: params.gravity,
        attitude_model: est.attitude_model,
        noise: est.process_noise,
    };
    let noise = MeasurementNoise {
        accel: nalgebra::Matrix3::identity() * accel_std.powi(2),
        mocap,
    };
    Ok(WindEstimator::new(belief, process, noise, est.scaling)?.with_time_tolerance(0.5 * dt))
}

/// The control loop, with the estimator's drag coefficients given.
fn simulate(config: &ScenarioConfig, params: &VehicleParams, drag: Option<Vector3<f64>>) -> Result<ResultsTable> {
    let dt = config.control_dt();
    let steps = (config.duration * config.control_rate).round() as usize;
    let imu_div = config.rate_divisor(config.sensors.imu.rate)?;
    let mocap_div = config.rate_divisor(config.sensors.mocap.rate)?;

    let mut table = ResultsTable::new(config);
    let mut state = initial_state(config, params);
    let mut wind = wind_field(config)?;
    let mut controller = Se3Controller::new(config.controller.clone(), params)?;
    let mixer = Mixer::new(params)?;
    let mut integrator = Integrator::new(config.integrator)?;
    let mut imu = Imu::new(config.imu()?, stream(config.seed, IMU_STREAM))?;
    let mut mocap = Mocap::new(config.mocap()?, stream(config.seed, MOCAP_STREAM))?;
    let mut estimator: Option<WindEstimator> = None;
    let thrust_source = config.estimator.as_ref().map(|e| e.thrust_source);

    table.rows.reserve(steps + 1);
    for k in 0..=steps {
        // Step k runs at t = k dt; integrator times accumulate the same way.
        let t = state.t;
        let w = wind.sample(t, &state.position);
        let desired = config.trajectory.sample(t);
        let ctrl = controller.update(&state, &desired, dt);
        let cmd = mixer.mix(ctrl.thrust, &ctrl.moment);
        let thrust_true = control_wrench(&state.rotor_speeds, params).force.z;

        let imu_sample = (k % imu_div == 0).then(|| {
            let (deriv, _) = dynamics_unchecked(&state, &cmd.speeds, &w, params, config.aero);
            let m = imu.sample(&state, &deriv.velocity, params.gravity, dt * imu_div as f64);
            match m.kind {
                MeasurementKind::Imu { accel, gyro } => (m.t, ImuSample { accel, gyro }),
                _ => unreachable!("IMU yields IMU measurements"),
            }
        });
        let mocap_sample = (k % mocap_div == 0).then(|| {
            let m = mocap.sample(&state);
            match m.kind {
                MeasurementKind::Mocap {
                    position,
                    velocity,
                    attitude,
                    body_rates,
                } => (
                    m.t,
                    MocapSample {
                        position,
                        velocity,
                        attitude,
                        body_rates,
                    },
                ),
                _ => unreachable!("mocap yields mocap measurements"),
            }
        });

        let model_thrust = match thrust_source {
            Some(ThrustSource::True) => thrust_true,
            _ => ctrl.thrust,
        };
        let mut estimate = None;
        if let (Some(est_cfg), Some(drag)) = (&config.estimator, drag) {
            let step = (|| -> Result<EstimateSample> {
                if estimator.is_none() {
                    let (_, fix) = mocap_sample.as_ref().expect("mocap samples the first step");
                    estimator = Some(build_estimator(est_cfg, config, params, drag, fix)?);
                }
                let filter = estimator.as_mut().expect("initialized above");
                let mut accel_nis = None;
                if let Some((ts, s)) = &mocap_sample {
                    filter.update(&mocap_measurement(*ts, s), model_thrust)?;
                }
                if let Some((ts, s)) = &imu_sample {
                    accel_nis = filter.update(&imu_measurement(*ts, s), model_thrust)?;
                }
                Ok(EstimateSample {
                    wind: filter.wind(),
                    wind_std: filter.wind_std(),
                    accel_nis,
                })
            })();
            match step {
                Ok(e) => estimate = Some(e),
                Err(e) => {
                    table.metadata.failure = Some(FailureRecord {
                        t,
                        cause: e.to_string(),
                    });
                    break;
                }
            }
        }

        let tracking_error = (state.position - desired.position).norm();
        table.rows.push(ResultsRow {
            state: state.clone(),
            desired,
            thrust_cmd: ctrl.thrust,
            moment_cmd: ctrl.moment,
            eta_cmd: cmd.speeds.clone(),
            saturated: cmd.any_saturated(),
            thrust_true,
            wind: w,
            imu: imu_sample.map(|(_, s)| s),
            mocap: mocap_sample.map(|(_, s)| s),
            estimate,
        });
        if k == steps {
            break;
        }
        if let Some(limit) = config.abort_position_error {
            if tracking_error > limit {
                table.metadata.failure = Some(FailureRecord {
                    t,
                    cause: format!("lost tracking: position error {tracking_error:.3} m exceeds {limit} m"),
                });
                break;
            }
        }

        if let Some(filter) = estimator.as_mut() {
            let u = ControlInput {
                thrust: model_thrust,
                attitude: ctrl.attitude,
            };
            if let Err(e) = filter.predict(&u, dt) {
                table.metadata.failure = Some(FailureRecord {
                    t,
                    cause: e.to_string(),
                });
                break;
            }
        }

        match integrator.advance(&state, &cmd.speeds, &w, params, config.aero, dt) {
            Ok(next) if next.position.norm() < BLOW_UP => state = next,
            Ok(next) => {
                table.metadata.failure = Some(FailureRecord {
                    t: next.t,
                    cause: format!("state blow-up: |x| = {:e} m", next.position.norm()),
                });
                break;
            }
            Err(e) => {
                let t_fail = match &e {
                    Error::IntegrationFailure { t, .. } => *t,
                    _ => t,
                };
                table.metadata.failure = Some(FailureRecord {
                    t: t_fail,
                    cause: e.to_string(),
                });
                break;
            }
        }
    }

    let summary = &mut table.metadata.summary;
    summary.steps = table.rows.len();
    summary.simulated_time = table.rows.last().map_or(0.0, |r| r.t());
    summary.integrator_steps = integrator.stats.accepted;
    summary.integrator_rejected = integrator.stats.rejected;
    summary.skipped_updates = estimator.as_ref().map_or(0, |e| e.skipped_updates());
    if !table.rows.is_empty() {
        let errs: Vec<f64> = table
            .rows
            .iter()
            .map(|r| (r.state.position - r.desired.position).norm())
            .collect();
        summary.position_rmse = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();
        summary.max_position_error = errs.iter().copied().fold(0.0, f64::max);
        summary.saturated_fraction =
            table.rows.iter().filter(|r| r.saturated).count() as f64 / table.rows.len() as f64;
    }
    if let Some(est) = &config.estimator {
        table.metadata.summary.wind_rmse = wind_rmse(&table, est.rmse_window_start).ok().map(|r| r.as_array());
    }
    Ok(table)
}

/// Wind-estimate RMSE over rows with an estimate and `t >= window_start`.
pub fn wind_rmse(table: &ResultsTable, window_start: f64) -> Result<Rmse> {
    let rows: Vec<_> = table.rows.iter().filter(|r| r.estimate.is_some()).collect();
    let times: Vec<f64> = rows.iter().map(|r| r.t()).collect();
    let est: Vec<Vector3<f64>> = rows.iter().map(|r| r.estimate.as_ref().unwrap().wind).collect();
    let truth: Vec<Vector3<f64>> = rows.iter().map(|r| r.wind).collect();
    rmse(&times, &est, &truth, window_start)
}

fn imu_measurement(t: f64, s: &ImuSample) -> crate::sensors::SensorMeasurement {
    crate::sensors::SensorMeasurement {
        t,
        kind: MeasurementKind::Imu {
            accel: s.accel,
            gyro: s.gyro,
        },
    }
}

fn mocap_measurement(t: f64, s: &MocapSample) -> crate::sensors::SensorMeasurement {
    crate::sensors::SensorMeasurement {
        t,
        kind: MeasurementKind::Mocap {
            position: s.position,
            velocity: s.velocity,
            attitude: s.attitude,
            body_rates: s.body_rates,
        },
    }
}
