//! Aerodynamic wrench: parasitic drag, rotor drag, and blade flapping.
//!
//! Every term depends on the air-relative velocity of the vehicle. The body
//! airspeed is `v_a = Rᵀ(v − w)`, and each rotor additionally sees the
//! rigid-body contribution `Ω × r_i` of the body rates at its hub.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::params::VehicleParams;
use crate::state::VehicleState;

const B3: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);

/// Body-frame aerodynamic force and moment with the per-term breakdown.
///
/// `force == parasitic + Σ rotor_drag[i]` and
/// `moment == Σ (flapping[i] + r_i × rotor_drag[i])`, summed in rotor order.
#[derive(Clone, Debug, PartialEq)]
pub struct AeroWrench {
    pub force: Vector3<f64>,
    pub moment: Vector3<f64>,
    pub parasitic: Vector3<f64>,
    pub rotor_drag: Vec<Vector3<f64>>,
    pub flapping: Vec<Vector3<f64>>,
}

impl AeroWrench {
    pub fn zero(rotor_count: usize) -> Self {
        Self {
            force: Vector3::zeros(),
            moment: Vector3::zeros(),
            parasitic: Vector3::zeros(),
            rotor_drag: vec![Vector3::zeros(); rotor_count],
            flapping: vec![Vector3::zeros(); rotor_count],
        }
    }
}

/// Air-relative velocity of the center of mass in the body frame.
pub fn body_airspeed(
    velocity: &Vector3<f64>,
    wind: &Vector3<f64>,
    attitude: &UnitQuaternion<f64>,
) -> Vector3<f64> {
    attitude.inverse_transform_vector(&(velocity - wind))
}

/// Airspeed at a rotor hub located at `rotor_position` (body frame).
pub fn rotor_airspeed(
    body_airspeed: &Vector3<f64>,
    body_rates: &Vector3<f64>,
    rotor_position: &Vector3<f64>,
) -> Vector3<f64> {
    body_airspeed + body_rates.cross(rotor_position)
}

/// `−C ‖v_a‖ v_a` with `C = diag(coefficients)`.
pub fn parasitic_drag(body_airspeed: &Vector3<f64>, coefficients: &Vector3<f64>) -> Vector3<f64> {
    -body_airspeed.norm() * coefficients.component_mul(body_airspeed)
}

/// `−K η_i v_a_i`.
pub fn rotor_drag(
    rotor_airspeed: &Vector3<f64>,
    rotor_speed: f64,
    drag_matrix: &Matrix3<f64>,
) -> Vector3<f64> {
    -rotor_speed * (drag_matrix * rotor_airspeed)
}

/// `−k_flap η_i (v_a_i × b3)`.
pub fn flapping_moment(rotor_airspeed: &Vector3<f64>, rotor_speed: f64, k_flap: f64) -> Vector3<f64> {
    -k_flap * rotor_speed * rotor_airspeed.cross(&B3)
}

/// Aerodynamic wrench from body airspeed, body rates, and rotor speeds.
pub fn aero_wrench(
    body_airspeed: &Vector3<f64>,
    body_rates: &Vector3<f64>,
    rotor_speeds: &[f64],
    params: &VehicleParams,
) -> AeroWrench {
    let n = params.rotor_count();
    let drag_matrix = params.rotor_drag_matrix();
    let parasitic = parasitic_drag(body_airspeed, &params.parasitic_drag);

    let mut force = parasitic;
    let mut moment = Vector3::zeros();
    let mut rotor_terms = Vec::with_capacity(n);
    let mut flap_terms = Vec::with_capacity(n);
    for (r, &eta) in params.rotor_positions.iter().zip(rotor_speeds) {
        let va_i = rotor_airspeed(body_airspeed, body_rates, r);
        let d = rotor_drag(&va_i, eta, &drag_matrix);
        let flap = flapping_moment(&va_i, eta, params.k_flap);
        force += d;
        moment += flap + r.cross(&d);
        rotor_terms.push(d);
        flap_terms.push(flap);
    }
    AeroWrench {
        force,
        moment,
        parasitic,
        rotor_drag: rotor_terms,
        flapping: flap_terms,
    }
}

/// Aerodynamic wrench acting on `state` in the world wind field `wind`.
pub fn total_aero_wrench(state: &VehicleState, wind: &Vector3<f64>, params: &VehicleParams) -> AeroWrench {
    let va = body_airspeed(&state.velocity, wind, &state.attitude);
    aero_wrench(&va, &state.body_rates, &state.rotor_speeds, params)
}
