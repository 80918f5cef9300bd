//! Adaptive Dormand–Prince 5(4) integration of the vehicle dynamics.
//!
//! The solver advances the full state (rigid body plus rotor speeds) jointly
//! with embedded error control. After every accepted internal step the rotor
//! speeds are clamped to their saturation bounds; the quaternion is
//! renormalized once the output time is reached.

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::dynamics_unchecked;
use crate::error::{Error, Result};
use crate::params::VehicleParams;
use crate::state::{check_vec, VehicleState, RIGID_BODY_DIM};

/// Relative and absolute error tolerances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-6, atol: 1e-8 }
    }
}

const C: [f64; 6] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0];
const A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
];
const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
// Difference between the 5th- and embedded 4th-order weights (7 stages, FSAL).
const E: [f64; 7] = [
    -71.0 / 57600.0,
    0.0,
    71.0 / 16695.0,
    -71.0 / 1920.0,
    17253.0 / 339200.0,
    -22.0 / 525.0,
    1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const ERROR_EXPONENT: f64 = -1.0 / 5.0;

/// Counters for a solve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Why a solve stopped early.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveFailure {
    pub t: f64,
    pub y: DVector<f64>,
    pub reason: String,
}

/// Integrate `f` from `(t0, y0)` to `t1`.
///
/// `h_hint` seeds the first trial step and receives the next suggested step.
/// `post_step` may modify the state after each accepted step; it returns
/// `true` when it changed anything, which invalidates the FSAL derivative.
pub fn dopri45<F, P>(
    mut f: F,
    t0: f64,
    y0: DVector<f64>,
    t1: f64,
    tol: Tolerances,
    h_hint: &mut Option<f64>,
    mut post_step: P,
    stats: &mut SolveStats,
) -> std::result::Result<DVector<f64>, SolveFailure>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
    P: FnMut(&mut DVector<f64>) -> bool,
{
    let mut t = t0;
    let mut y = y0;
    if t1 <= t0 {
        return Ok(y);
    }
    let mut k0 = f(t, &y);
    stats.evaluations += 1;
    let mut h = match *h_hint {
        Some(h) if h > 0.0 => h,
        _ => {
            let h = initial_step(&mut f, t, &y, &k0, t1 - t0, tol);
            stats.evaluations += 1;
            h
        }
    };
    let n = y.len();
    let mut k: Vec<DVector<f64>> = vec![DVector::zeros(n); 7];
    let mut y_stage = DVector::zeros(n);

    while t < t1 {
        let min_step = 10.0 * f64::EPSILON * t.abs().max(1.0);
        let mut step_rejected = false;
        loop {
            if h < min_step {
                return Err(SolveFailure {
                    t,
                    y,
                    reason: format!("step size {h:.3e} below minimum {min_step:.3e}"),
                });
            }
            let mut h_try = h;
            let last = t + h_try >= t1;
            if last {
                h_try = t1 - t;
            }
            k[0].copy_from(&k0);
            for s in 1..6 {
                y_stage.copy_from(&y);
                for (j, a) in A[s][..s].iter().enumerate() {
                    if *a != 0.0 {
                        y_stage.axpy(h_try * a, &k[j], 1.0);
                    }
                }
                k[s] = f(t + C[s] * h_try, &y_stage);
            }
            let mut y_new = y.clone();
            for (j, b) in B.iter().enumerate() {
                if *b != 0.0 {
                    y_new.axpy(h_try * b, &k[j], 1.0);
                }
            }
            k[6] = f(t + h_try, &y_new);
            stats.evaluations += 6;

            let mut acc = 0.0;
            for i in 0..n {
                let mut e = 0.0;
                for (j, c) in E.iter().enumerate() {
                    e += c * k[j][i];
                }
                e *= h_try;
                let scale = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
                acc += (e / scale).powi(2);
            }
            let err = (acc / n as f64).sqrt();

            if !err.is_finite() {
                stats.rejected += 1;
                h = h_try * MIN_FACTOR;
                step_rejected = true;
                continue;
            }
            if err < 1.0 {
                let factor = if err == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * err.powf(ERROR_EXPONENT)).min(MAX_FACTOR)
                };
                let factor = if step_rejected { factor.min(1.0) } else { factor };
                stats.accepted += 1;
                t = if last { t1 } else { t + h_try };
                y = y_new;
                if post_step(&mut y) {
                    k0 = f(t, &y);
                    stats.evaluations += 1;
                } else {
                    k0 = k[6].clone();
                }
                let next = h_try * factor;
                // A step truncated to land on t1 says nothing against the
                // untruncated proposal; keep it for the next call.
                h = if last && h_try < h { h.max(next) } else { next };
                break;
            }
            stats.rejected += 1;
            h = h_try * (SAFETY * err.powf(ERROR_EXPONENT)).max(MIN_FACTOR);
            step_rejected = true;
        }
    }
    *h_hint = Some(h);
    Ok(y)
}

fn rms_scaled(v: &DVector<f64>, y: &DVector<f64>, tol: Tolerances) -> f64 {
    let n = v.len() as f64;
    (v.iter()
        .zip(y.iter())
        .map(|(a, b)| (a / (tol.atol + tol.rtol * b.abs())).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
}

/// Starting step estimate (Hairer, Nørsett & Wanner, II.4).
fn initial_step<F>(f: &mut F, t: f64, y: &DVector<f64>, f0: &DVector<f64>, span: f64, tol: Tolerances) -> f64
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    let d0 = rms_scaled(y, y, tol);
    let d1 = rms_scaled(f0, y, tol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1 = y + f0 * h0;
    let f1 = f(t + h0, &y1);
    let d2 = rms_scaled(&(f1 - f0), y, tol) / h0;
    let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
        (1e-6f64).max(h0 * 1e-3)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Advances the plant between control updates, carrying the step-size
/// estimate from one call to the next.
#[derive(Clone, Debug)]
pub struct Integrator {
    pub tolerances: Tolerances,
    step_hint: Option<f64>,
    pub stats: SolveStats,
}

impl Integrator {
    pub fn new(tolerances: Tolerances) -> Result<Self> {
        if !(tolerances.rtol > 0.0) || !(tolerances.atol > 0.0) {
            return Err(Error::Config(format!(
                "tolerances must be positive, got rtol {} atol {}",
                tolerances.rtol, tolerances.atol
            )));
        }
        Ok(Self {
            tolerances,
            step_hint: None,
            stats: SolveStats::default(),
        })
    }

    /// State at `state.t + dt_out` under constant command and wind.
    pub fn advance(
        &mut self,
        state: &VehicleState,
        eta_cmd: &[f64],
        wind: &Vector3<f64>,
        params: &VehicleParams,
        aero_enabled: bool,
        dt_out: f64,
    ) -> Result<VehicleState> {
        if !(dt_out > 0.0) {
            return Err(Error::Config(format!("output interval must be positive, got {dt_out}")));
        }
        state.check_finite()?;
        check_vec("wind", wind)?;
        if !eta_cmd.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite { field: "eta_cmd" });
        }
        if eta_cmd.len() != params.rotor_count() || state.rotor_speeds.len() != params.rotor_count() {
            return Err(Error::Config("rotor vector length mismatch".into()));
        }

        let rhs = |t: f64, y: &DVector<f64>| {
            let s = unpack_raw(y, t);
            dynamics_unchecked(&s, eta_cmd, wind, params, aero_enabled)
                .0
                .to_vector()
        };
        let (lo, hi) = (params.eta_min, params.eta_max);
        let clamp = |y: &mut DVector<f64>| {
            let mut changed = false;
            for eta in y.rows_mut(RIGID_BODY_DIM, y.len() - RIGID_BODY_DIM).iter_mut() {
                let c = eta.clamp(lo, hi);
                if c != *eta {
                    *eta = c;
                    changed = true;
                }
            }
            changed
        };

        let t0 = state.t;
        let t1 = t0 + dt_out;
        let y = dopri45(
            rhs,
            t0,
            state.to_vector(),
            t1,
            self.tolerances,
            &mut self.step_hint,
            clamp,
            &mut self.stats,
        )
        .map_err(|fail| Error::IntegrationFailure {
            t: fail.t,
            reason: fail.reason,
            last_state: Box::new(VehicleState::from_vector(&fail.y, fail.t)),
        })?;
        let out = VehicleState::from_vector(&y, t1);
        out.check_finite()?;
        Ok(out)
    }
}

/// One-shot integration over `dt_out` with wind sampled at the interval start.
pub fn integrate<W>(
    state: &VehicleState,
    eta_cmd: &[f64],
    mut wind_fn: W,
    params: &VehicleParams,
    aero_enabled: bool,
    dt_out: f64,
    tolerances: Tolerances,
) -> Result<VehicleState>
where
    W: FnMut(f64, &Vector3<f64>) -> Vector3<f64>,
{
    let wind = wind_fn(state.t, &state.position);
    Integrator::new(tolerances)?.advance(state, eta_cmd, &wind, params, aero_enabled, dt_out)
}

/// Unpack without renormalizing the quaternion so the right-hand side sees
/// exactly the integrated coordinates.
fn unpack_raw(y: &DVector<f64>, t: f64) -> VehicleState {
    let q = nalgebra::Quaternion::new(y[6], y[7], y[8], y[9]);
    VehicleState {
        position: y.fixed_rows::<3>(0).into_owned(),
        velocity: y.fixed_rows::<3>(3).into_owned(),
        attitude: nalgebra::UnitQuaternion::new_unchecked(q),
        body_rates: y.fixed_rows::<3>(10).into_owned(),
        rotor_speeds: y.rows(RIGID_BODY_DIM, y.len() - RIGID_BODY_DIM).iter().copied().collect(),
        t,
    }
}
