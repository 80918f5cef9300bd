//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{
    DVector, Matrix3, Matrix6, Quaternion, Rotation3, SMatrix, UnitQuaternion, Vector3, Vector6,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rotorsim::aero::aero_wrench;
use rotorsim::dynamics::dynamics;
use rotorsim::estimator::{
    predict, update, AttitudeModel, ControlInput, Covariance, MeasurementNoise, NavState, ProcessModelParams,
    ProcessNoise, ThrustSource, UkfBelief, UnscentedScaling,
};
use rotorsim::harness::scenarios::{self, BundledKind, BUNDLED};
use rotorsim::harness::{monte_carlo, run, MonteCarloReport, ResultsTable, ScenarioConfig};
use rotorsim::integrator::{Integrator, Tolerances};
use rotorsim::params::VehicleParams;
use rotorsim::sensors::{
    ideal_specific_force, imu_measure, mocap_measure, ImuBias, ImuConfig, MeasurementKind, MocapConfig,
    SensorMeasurement,
};
use rotorsim::state::VehicleState;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn budget(label: &str, start: Instant, limit: f64) -> Result<f64, String> {
    let secs = start.elapsed().as_secs_f64();
    if secs > limit {
        return Err(format!("{label} took {secs:.1} s, budget {limit} s"));
    }
    Ok(secs)
}

// ---------------------------------------------------------------------------
// 1. Adaptive integrator against fixed-step RK4

fn unpack(y: &DVector<f64>, t: f64) -> VehicleState {
    VehicleState {
        position: y.fixed_rows::<3>(0).into_owned(),
        velocity: y.fixed_rows::<3>(3).into_owned(),
        attitude: UnitQuaternion::new_unchecked(Quaternion::new(y[6], y[7], y[8], y[9])),
        body_rates: y.fixed_rows::<3>(10).into_owned(),
        rotor_speeds: y.rows(13, y.len() - 13).iter().copied().collect(),
        t,
    }
}

fn rk4_interval(
    state: &VehicleState,
    eta_cmd: &[f64],
    wind: &Vector3<f64>,
    params: &VehicleParams,
    aero: bool,
    interval: f64,
    h: f64,
) -> VehicleState {
    let f = |t: f64, y: &DVector<f64>| dynamics(&unpack(y, t), eta_cmd, wind, params, aero).unwrap().to_vector();
    let steps = (interval / h).round() as usize;
    let mut y = state.to_vector();
    let mut t = state.t;
    for _ in 0..steps {
        let k1 = f(t, &y);
        let k2 = f(t + 0.5 * h, &(&y + &k1 * (0.5 * h)));
        let k3 = f(t + 0.5 * h, &(&y + &k2 * (0.5 * h)));
        let k4 = f(t + h, &(&y + &k3 * h));
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        t += h;
        for eta in y.rows_mut(13, y.len() - 13).iter_mut() {
            *eta = eta.clamp(params.eta_min, params.eta_max);
        }
    }
    VehicleState::from_vector(&y, state.t + interval)
}

fn integrator_oracle() -> Outcome {
    let start = Instant::now();
    let mut cfg = scenarios::scenario("circle").map_err(err)?;
    cfg.duration = 2.0;
    let params = cfg.vehicle.build().map_err(err)?;
    let table = run(&cfg).map_err(err)?;
    let dt = cfg.control_dt();

    // Replay the logged commands open loop through RK4 and compare at every
    // control step.
    let mut oracle = table.rows[0].state.clone();
    let mut worst = 0.0f64;
    let mut worst_at = (0.0, 0usize);
    for pair in table.rows.windows(2) {
        let (row, next) = (&pair[0], &pair[1]);
        oracle = rk4_interval(&oracle, &row.eta_cmd, &row.wind, &params, cfg.aero, dt, 1e-4);
        let gap = oracle.to_vector() - next.state.to_vector();
        let (i, g) = gap.iter().map(|g| g.abs()).enumerate().fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        if g > worst {
            worst = g;
            worst_at = (next.t(), i);
        }
    }
    let secs = budget("oracle comparison", start, 30.0)?;
    check(
        worst <= 1e-5,
        format!(
            "max component gap {worst:.2e} (component {} at t = {:.3} s) over {} steps, {secs:.1} s",
            worst_at.1,
            worst_at.0,
            table.len() - 1
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. Motor first-order response

fn motor_response() -> Outcome {
    let params = VehicleParams::default_quad();
    let tol = Tolerances::default();
    let (eta0, eta_c) = (400.0, 700.0);
    let n = params.rotor_count();
    let mut state = VehicleState::at_rest(Vector3::zeros(), n, eta0);
    let cmd = vec![eta_c; n];
    let mut integ = Integrator::new(tol).map_err(err)?;
    let interval = params.tau_m / 2.0;
    let mut worst = 0.0f64;
    for k in 1..=10 {
        state = integ
            .advance(&state, &cmd, &Vector3::zeros(), &params, false, interval)
            .map_err(err)?;
        let t = k as f64 * interval;
        let expected = eta_c + (eta0 - eta_c) * (-t / params.tau_m).exp();
        for &eta in &state.rotor_speeds {
            let allowed = tol.rtol * expected.abs() + tol.atol;
            worst = worst.max((eta - expected).abs() / allowed);
        }
    }
    check(
        worst <= 1.0,
        format!("worst error {worst:.3} of rtol|η| + atol over 10 checkpoints to 5 τ"),
    )
}

// ---------------------------------------------------------------------------
// 3. Aerodynamic sign and zero properties

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
    Vector3::new(
        uniform(rng, -scale, scale),
        uniform(rng, -scale, scale),
        uniform(rng, -scale, scale),
    )
}

fn aero_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = Vec::new();
    let cases = 10_000;
    for case in 0..cases {
        let mut p = VehicleParams::default_quad();
        p.parasitic_drag = Vector3::new(
            uniform(&mut rng, 0.0, 1e-3),
            uniform(&mut rng, 0.0, 1e-3),
            uniform(&mut rng, 0.0, 2e-2),
        );
        p.k_d = uniform(&mut rng, 0.0, 1.19e-3);
        p.k_z = uniform(&mut rng, 0.0, 2.32e-3);
        p.k_flap = uniform(&mut rng, 0.0, 1e-4);
        let va = random_vec(&mut rng, 20.0);
        let rates = random_vec(&mut rng, 10.0);
        let speeds: Vec<f64> = (0..4).map(|_| uniform(&mut rng, 0.0, p.eta_max)).collect();

        let still = aero_wrench(&va, &Vector3::zeros(), &speeds, &p);
        if still.force.dot(&va) > 0.0 {
            violations.push(format!("case {case}: f_a·v_a = {:e}", still.force.dot(&va)));
        }
        let spinning = aero_wrench(&va, &rates, &speeds, &p);
        let power: f64 = spinning.parasitic.dot(&va)
            + spinning
                .rotor_drag
                .iter()
                .zip(&p.rotor_positions)
                .map(|(d, r)| d.dot(&(va + rates.cross(r))))
                .sum::<f64>();
        if power > 0.0 {
            violations.push(format!("case {case}: drag power {power:e} with body rates"));
        }
        for (i, flap) in spinning.flapping.iter().enumerate() {
            if flap.z != 0.0 {
                violations.push(format!("case {case}: flapping moment {i} has b3 component {:e}", flap.z));
            }
        }
        let zero = aero_wrench(&Vector3::zeros(), &Vector3::zeros(), &speeds, &p);
        if zero.force != Vector3::zeros() || zero.moment != Vector3::zeros() {
            violations.push(format!("case {case}: nonzero wrench at zero airspeed"));
        }
    }
    check(
        violations.is_empty(),
        match violations.first() {
            None => format!("{cases} random inputs, 0 violations"),
            Some(v) => format!("{} violations, first: {v}", violations.len()),
        },
    )
}

// ---------------------------------------------------------------------------
// 4. Noise-free sensors against their closed forms

fn random_attitude(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    let q = Quaternion::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    UnitQuaternion::from_quaternion(q)
}

fn sensor_exactness() -> Outcome {
    let g = 9.81;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    let mocap_cfg = MocapConfig::ideal(100.0);
    for _ in 0..1000 {
        let state = VehicleState {
            position: random_vec(&mut rng, 10.0),
            velocity: random_vec(&mut rng, 5.0),
            attitude: random_attitude(&mut rng),
            body_rates: random_vec(&mut rng, 3.0),
            rotor_speeds: vec![500.0; 4],
            t: uniform(&mut rng, 0.0, 10.0),
        };
        let accel = random_vec(&mut rng, 10.0);
        let cfg = ImuConfig {
            lever_arm: random_vec(&mut rng, 0.1),
            mounting: random_attitude(&mut rng),
            ..ImuConfig::ideal(500.0)
        };
        let r_wb: Rotation3<f64> = state.attitude.to_rotation_matrix();
        let r_ib: Rotation3<f64> = cfg.mounting.to_rotation_matrix();
        let w = state.body_rates;
        let expected = r_ib.matrix() * r_wb.matrix().transpose() * (accel + Vector3::new(0.0, 0.0, g))
            + w.cross(&w.cross(&cfg.lever_arm));

        worst = worst.max((ideal_specific_force(&state, &accel, &cfg, g) - expected).amax());
        match imu_measure(&state, &accel, &cfg, &ImuBias::default(), g, &mut rng).kind {
            MeasurementKind::Imu { accel: a, gyro } => {
                worst = worst.max((a - expected).amax()).max((gyro - w).amax());
            }
            _ => return Err("IMU returned a mocap sample".into()),
        }
        match mocap_measure(&state, &mocap_cfg, &mut rng).kind {
            MeasurementKind::Mocap {
                position,
                velocity,
                attitude,
                body_rates,
            } => {
                worst = worst
                    .max((position - state.position).amax())
                    .max((velocity - state.velocity).amax())
                    .max(attitude.angle_to(&state.attitude))
                    .max((body_rates - state.body_rates).amax());
            }
            _ => return Err("mocap returned an IMU sample".into()),
        }
    }

    let params = VehicleParams::default_quad();
    let hover = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.0), 4, params.hover_rotor_speed());
    let d = dynamics(&hover, &hover.rotor_speeds, &Vector3::zeros(), &params, true).map_err(err)?;
    let reading = ideal_specific_force(&hover, &d.velocity, &ImuConfig::ideal(500.0), params.gravity);
    let hover_gap = (reading - Vector3::new(0.0, 0.0, params.gravity)).amax();
    check(
        worst <= 1e-12 && hover_gap <= 1e-12,
        format!("1000 random states: max gap {worst:.1e}; hover reading gap {hover_gap:.1e}"),
    )
}

// ---------------------------------------------------------------------------
// 5. Drag signature on the circle benchmark

/// Per-block mean horizontal body-frame specific force magnitudes after `t0`.
fn horizontal_accel_blocks(table: &ResultsTable, t0: f64, block: usize) -> Vec<f64> {
    let samples: Vec<Vector3<f64>> = table
        .rows
        .iter()
        .filter(|r| r.t() >= t0)
        .filter_map(|r| r.imu.as_ref().map(|s| s.accel))
        .collect();
    samples
        .chunks_exact(block)
        .map(|c| {
            let m = c.iter().fold(Vector3::zeros(), |a, s| a + s) / block as f64;
            m.xy().norm()
        })
        .collect()
}

fn circle_signature() -> Outcome {
    let start = Instant::now();
    let on_cfg = scenarios::scenario("circle").map_err(err)?;
    let off_cfg = ScenarioConfig {
        aero: false,
        ..on_cfg.clone()
    };
    let on = run(&on_cfg).map_err(err)?;
    let off = run(&off_cfg).map_err(err)?;
    let secs = budget("circle pair", start, 60.0)?;
    // 20 ms blocks after the speed ramp has finished.
    let t0 = 3.0;
    let block = 10;
    let on_blocks = horizontal_accel_blocks(&on, t0, block);
    let off_blocks = horizontal_accel_blocks(&off, t0, block);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let on_mean = mean(&on_blocks);
    let on_min = on_blocks.iter().copied().fold(f64::INFINITY, f64::min);
    let off_mean = mean(&off_blocks);
    check(
        off_mean < 0.05 && on_min > 0.05 && on_mean > 10.0 * off_mean,
        format!(
            "body xy specific force: aero on mean {on_mean:.3} (min block {on_min:.3}), aero off mean {off_mean:.4} m/s², {secs:.1} s"
        ),
    )
}

// ---------------------------------------------------------------------------
// 6. UKF against a linear Kalman filter

fn ukf_linear() -> Outcome {
    let dt = 0.01;
    let mass = 0.5;
    let params = ProcessModelParams {
        mass,
        drag: Vector3::zeros(),
        gravity: 9.81,
        attitude_model: AttitudeModel::Frozen,
        noise: ProcessNoise {
            position: 1e-4,
            velocity: 2e-2,
            attitude: 0.0,
            wind: 0.0,
        },
    };
    let scaling = UnscentedScaling::default();
    let lift = 0.4;
    let thrust = mass * 9.81 + lift;
    let u = ControlInput {
        thrust,
        attitude: UnitQuaternion::identity(),
    };
    let accel = Vector3::new(0.0, 0.0, lift / mass);

    let mut cov = Covariance::zeros();
    for i in 0..3 {
        cov[(i, i)] = 0.04;
        cov[(3 + i, 3 + i)] = 0.09;
        cov[(i, 3 + i)] = 0.02;
        cov[(3 + i, i)] = 0.02;
        cov[(9 + i, 9 + i)] = 0.5;
    }
    let mut belief = UkfBelief {
        mean: NavState {
            position: Vector3::new(1.0, -2.0, 1.5),
            velocity: Vector3::new(0.5, 0.2, 0.0),
            attitude: UnitQuaternion::identity(),
            wind: Vector3::new(2.0, 0.0, 0.0),
        },
        cov,
        t: 0.0,
    };
    let mut r = SMatrix::<f64, 9, 9>::zeros();
    for i in 0..3 {
        r[(i, i)] = 2e-3;
        r[(3 + i, 3 + i)] = 5e-3;
        r[(6 + i, 6 + i)] = 1e-4;
    }
    let noise = MeasurementNoise {
        accel: Matrix3::identity(),
        mocap: r,
    };

    let mut m = Vector6::zeros();
    m.fixed_rows_mut::<3>(0).copy_from(&belief.mean.position);
    m.fixed_rows_mut::<3>(3).copy_from(&belief.mean.velocity);
    let mut p = cov.fixed_view::<6, 6>(0, 0).into_owned();
    let mut f = Matrix6::identity();
    f.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Matrix3::identity() * dt));
    let mut b = Vector6::zeros();
    b.fixed_rows_mut::<3>(0).copy_from(&(accel * (0.5 * dt * dt)));
    b.fixed_rows_mut::<3>(3).copy_from(&(accel * dt));
    let q = Matrix6::from_diagonal(&Vector6::new(1e-4, 1e-4, 1e-4, 2e-2, 2e-2, 2e-2)) * dt;
    let r6 = r.fixed_view::<6, 6>(0, 0).into_owned();

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut mean_gap, mut cov_gap) = (0.0f64, 0.0f64);
    for k in 0..100 {
        belief = predict(&belief, &u, dt, &params, &scaling).map_err(err)?;
        m = f * m + b;
        p = f * p * f.transpose() + q;
        if k % 4 == 3 {
            let z = m + Vector6::from_fn(|_, _| 0.1 * rng.sample::<f64, _>(StandardNormal));
            let meas = SensorMeasurement {
                t: belief.t,
                kind: MeasurementKind::Mocap {
                    position: z.fixed_rows::<3>(0).into_owned(),
                    velocity: z.fixed_rows::<3>(3).into_owned(),
                    attitude: UnitQuaternion::identity(),
                    body_rates: Vector3::zeros(),
                },
            };
            belief = update(&belief, &meas, &noise, thrust, &params, &scaling, 1e-9)
                .map_err(err)?
                .belief;
            let s = p + r6;
            let gain = p * s.try_inverse().ok_or("singular innovation covariance")?;
            m += gain * (z - m);
            p = (Matrix6::identity() - gain) * p * (Matrix6::identity() - gain).transpose()
                + gain * r6 * gain.transpose();
        }
        let mut mu = Vector6::zeros();
        mu.fixed_rows_mut::<3>(0).copy_from(&belief.mean.position);
        mu.fixed_rows_mut::<3>(3).copy_from(&belief.mean.velocity);
        mean_gap = mean_gap.max((mu - m).amax());
        cov_gap = cov_gap.max((belief.cov.fixed_view::<6, 6>(0, 0) - p).amax());
    }
    check(
        mean_gap <= 1e-8 && cov_gap <= 1e-8,
        format!("100 steps: max mean gap {mean_gap:.1e}, max covariance gap {cov_gap:.1e}"),
    )
}

// ---------------------------------------------------------------------------
// 7. Nominal wind estimation

fn constant_wind() -> Outcome {
    let start = Instant::now();
    let cfg = scenarios::scenario("constant_wind").map_err(err)?;
    let table = run(&cfg).map_err(err)?;
    let secs = budget("constant wind", start, 60.0)?;
    let s = &table.metadata.summary;
    let rmse = s.wind_rmse.ok_or("no wind estimate")?;
    let fit = table
        .metadata
        .calibration
        .as_ref()
        .map(|c| format!("[{:.3}, {:.3}, {:.3}]", c.coefficients.x, c.coefficients.y, c.coefficients.z))
        .unwrap_or_default();
    check(
        !table.failed() && rmse[3] <= 0.5 && s.saturated_fraction == 0.0,
        format!(
            "wind RMSE {:.3} m/s (x {:.3}, y {:.3}, z {:.3}), saturated {:.2}, fitted drag {fit}, {secs:.1} s",
            rmse[3], rmse[0], rmse[1], rmse[2], s.saturated_fraction
        ),
    )
}

// ---------------------------------------------------------------------------
// 8. Monte Carlo study

fn study(report: &MonteCarloReport, secs: f64) -> Outcome {
    let s = &report.summary;
    let test = s.decile_test.as_ref().ok_or("too few successful trials for the decile test")?;
    check(
        s.fraction_within_threshold >= 0.4 && test.p_value < 0.05 && secs <= 1200.0,
        format!(
            "{}/{} trials succeeded, {:.0}% within {} m/s, median {:.3}; weakest vs strongest drag decile (n = {}) U = {}, p = {:.4}; sequential {secs:.1} s",
            s.succeeded,
            s.trials,
            100.0 * s.fraction_within_threshold,
            s.threshold,
            s.median,
            s.decile_size,
            test.u,
            test.p_value
        ),
    )
}

// ---------------------------------------------------------------------------
// 9. Saturation discrepancy

fn saturation() -> Outcome {
    let base = scenarios::scenario("saturation").map_err(err)?;
    let mut oracle = base.clone();
    oracle.estimator.as_mut().ok_or("saturation scenario has no estimator")?.thrust_source = ThrustSource::True;
    let mut roomy = base.clone();
    roomy.vehicle.eta_max = Some(3000.0);

    let mut out = Vec::new();
    for cfg in [&base, &oracle, &roomy] {
        let t = run(cfg).map_err(err)?;
        if t.failed() {
            return Err(format!("run failed: {:?}", t.metadata.failure));
        }
        let s = &t.metadata.summary;
        out.push((s.wind_rmse.ok_or("no wind estimate")?[3], s.saturated_fraction));
    }
    let [(sat, sat_frac), (orc, _), (free, free_frac)] = [out[0], out[1], out[2]];
    let closed = (sat - orc) / (sat - free);
    check(
        sat_frac > 0.0 && free_frac == 0.0 && sat >= 2.0 * free && closed > 0.5,
        format!(
            "wind RMSE saturated {sat:.3} ({:.0}% of steps), unsaturated {free:.3}, ratio {:.1}; true-thrust oracle {orc:.3} closes {:.0}% of the gap",
            100.0 * sat_frac,
            sat / free,
            100.0 * closed
        ),
    )
}

// ---------------------------------------------------------------------------
// 10. Determinism

fn determinism(sequential: &MonteCarloReport) -> Outcome {
    let mut names = Vec::new();
    for b in BUNDLED.iter().filter(|b| b.kind == BundledKind::Scenario) {
        let cfg = scenarios::scenario(b.name).map_err(err)?;
        let first = run(&cfg).map_err(err)?;
        let second = run(&cfg).map_err(err)?;
        if first.to_csv_string().map_err(err)? != second.to_csv_string().map_err(err)? {
            return Err(format!("scenario `{}` CSV differs between reruns", b.name));
        }
        if first.metadata_json().map_err(err)? != second.metadata_json().map_err(err)? {
            return Err(format!("scenario `{}` metadata differs between reruns", b.name));
        }
        names.push(b.name);
    }
    let spec = scenarios::monte_carlo_spec("wind_study").map_err(err)?;
    let parallel = monte_carlo(&spec, 4).map_err(err)?;
    let csv = |r: &MonteCarloReport| -> Result<Vec<u8>, String> {
        let mut buf = Vec::new();
        r.write_trials_csv(&mut buf).map_err(err)?;
        Ok(buf)
    };
    check(
        csv(&parallel)? == csv(sequential)?
            && parallel.summary_json().map_err(err)? == sequential.summary_json().map_err(err)?,
        format!(
            "byte-identical reruns of {}; Monte Carlo with 4 workers matches sequential",
            names.join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        match &outcome {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL {n:>2} {name}: {detail}");
            }
        }
    };

    report(1, "integrator oracle", integrator_oracle());
    report(2, "motor response", motor_response());
    report(3, "aero properties", aero_properties());
    report(4, "sensor exactness", sensor_exactness());
    report(5, "circle drag signature", circle_signature());
    report(6, "UKF linear-Gaussian", ukf_linear());
    report(7, "constant wind", constant_wind());

    let start = Instant::now();
    let sequential = scenarios::monte_carlo_spec("wind_study").and_then(|spec| monte_carlo(&spec, 1));
    let secs = start.elapsed().as_secs_f64();
    match &sequential {
        Ok(r) => report(8, "Monte Carlo study", study(r, secs)),
        Err(e) => report(8, "Monte Carlo study", Err(e.to_string())),
    }
    report(9, "saturation discrepancy", saturation());
    match &sequential {
        Ok(r) => report(10, "determinism", determinism(r)),
        Err(e) => report(10, "determinism", Err(e.to_string())),
    }

    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
