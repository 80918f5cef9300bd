//! Newton–Euler equations of motion with the first-order rotor lag.

use nalgebra::{Quaternion, Vector3};

use crate::aero::{total_aero_wrench, AeroWrench};
use crate::error::{Error, Result};
use crate::params::VehicleParams;
use crate::state::{check_vec, StateDerivative, VehicleState};

/// Body-frame force and moment.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub moment: Vector3<f64>,
}

/// Thrust and rotor torque produced by the given rotor speeds.
pub fn control_wrench(rotor_speeds: &[f64], params: &VehicleParams) -> Wrench {
    let mut thrust = 0.0;
    let mut moment = Vector3::zeros();
    for ((r, &eps), &eta) in params
        .rotor_positions
        .iter()
        .zip(&params.rotor_directions)
        .zip(rotor_speeds)
    {
        let eta2 = eta * eta;
        let f_i = Vector3::new(0.0, 0.0, params.k_eta * eta2);
        thrust += f_i.z;
        moment += r.cross(&f_i);
        moment.z += params.k_m * eps * eta2;
    }
    Wrench {
        force: Vector3::new(0.0, 0.0, thrust),
        moment,
    }
}

/// Time derivative of the vehicle state under rotor-speed command `eta_cmd`
/// and world wind `wind`.
pub fn dynamics(
    state: &VehicleState,
    eta_cmd: &[f64],
    wind: &Vector3<f64>,
    params: &VehicleParams,
    aero_enabled: bool,
) -> Result<StateDerivative> {
    state.check_finite()?;
    check_vec("wind", wind)?;
    if !eta_cmd.iter().all(|c| c.is_finite()) {
        return Err(Error::NonFinite { field: "eta_cmd" });
    }
    let n = params.rotor_count();
    if eta_cmd.len() != n || state.rotor_speeds.len() != n {
        return Err(Error::Config(format!(
            "rotor vector length mismatch: params {n}, state {}, command {}",
            state.rotor_speeds.len(),
            eta_cmd.len()
        )));
    }
    Ok(dynamics_unchecked(state, eta_cmd, wind, params, aero_enabled).0)
}

/// [`dynamics`] without validation; also returns the aerodynamic wrench.
pub(crate) fn dynamics_unchecked(
    state: &VehicleState,
    eta_cmd: &[f64],
    wind: &Vector3<f64>,
    params: &VehicleParams,
    aero_enabled: bool,
) -> (StateDerivative, AeroWrench) {
    let control = control_wrench(&state.rotor_speeds, params);
    let aero = if aero_enabled {
        total_aero_wrench(state, wind, params)
    } else {
        AeroWrench::zero(params.rotor_count())
    };

    let force = control.force + aero.force;
    let accel = state.attitude.transform_vector(&force) / params.mass
        - Vector3::new(0.0, 0.0, params.gravity);

    let omega = state.body_rates;
    let j_omega = params.inertia * omega;
    let torque = control.moment + aero.moment - omega.cross(&j_omega);
    // Inertia is validated SPD, so the solve only fails on corrupted params.
    let omega_dot = params
        .inertia
        .cholesky()
        .map(|c| c.solve(&torque))
        .unwrap_or_else(|| Vector3::repeat(f64::NAN));

    let q = state.attitude.quaternion();
    let q_dot = q * Quaternion::from_imag(omega) * 0.5;

    let eta_dot = state
        .rotor_speeds
        .iter()
        .zip(eta_cmd)
        .map(|(&eta, &cmd)| (cmd - eta) / params.tau_m)
        .collect();

    (
        StateDerivative {
            position: state.velocity,
            velocity: accel,
            attitude: q_dot,
            body_rates: omega_dot,
            rotor_speeds: eta_dot,
        },
        aero,
    )
}
