//! Vehicle parameters and the bundled presets.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical description of a multirotor with co-planar rotors.
#[derive(Clone, Debug, PartialEq)]
pub struct VehicleParams {
    /// Total mass, kg.
    pub mass: f64,
    /// Inertia tensor in the body frame, kg·m².
    pub inertia: Matrix3<f64>,
    /// Rotor hub positions relative to the center of mass, body frame, m.
    pub rotor_positions: Vec<Vector3<f64>>,
    /// Spin direction of each rotor, ±1.
    pub rotor_directions: Vec<f64>,
    /// Static thrust coefficient, N·s²/rad².
    pub k_eta: f64,
    /// Rotor drag-torque coefficient, N·m·s²/rad².
    pub k_m: f64,
    /// Parasitic drag coefficients (c_Dx, c_Dy, c_Dz), N·s²/m².
    pub parasitic_drag: Vector3<f64>,
    /// In-plane rotor drag coefficient k_d.
    pub k_d: f64,
    /// Axial rotor drag (inflow thrust loss) coefficient k_z.
    pub k_z: f64,
    /// Blade flapping coefficient.
    pub k_flap: f64,
    /// Motor time constant, s.
    pub tau_m: f64,
    /// Rotor speed bounds, rad/s.
    pub eta_min: f64,
    pub eta_max: f64,
    /// Gravitational acceleration, m/s².
    pub gravity: f64,
}

/// Named parameter sets. These approximate typical vehicles; they are not
/// identified from flight data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehiclePreset {
    /// ~0.66 kg quadrotor with mid-range drag coefficients.
    Default,
    /// ~30 g micro quadrotor.
    Crazyflie,
}

impl VehicleParams {
    pub fn preset(preset: VehiclePreset) -> Self {
        match preset {
            VehiclePreset::Default => Self::default_quad(),
            VehiclePreset::Crazyflie => Self::crazyflie(),
        }
    }

    /// Mid-size quadrotor used by the wind-estimation studies.
    ///
    /// Drag coefficients sit at the middle of the Monte Carlo ranges and the
    /// speed limit places hover at roughly 55% of maximum rotor speed.
    pub fn default_quad() -> Self {
        let mass = 0.65625;
        let scale = mass / 0.5;
        Self {
            mass,
            inertia: Matrix3::from_diagonal(&Vector3::new(3.65e-3, 3.68e-3, 7.03e-3)) * scale,
            rotor_positions: x_layout(0.17),
            rotor_directions: vec![1.0, -1.0, 1.0, -1.0],
            k_eta: 5.57e-6,
            k_m: 1.36e-7,
            parasitic_drag: Vector3::new(5.0e-4, 5.0e-4, 1.0e-2),
            k_d: 5.95e-4,
            k_z: 1.16e-3,
            k_flap: 0.0,
            tau_m: 0.005,
            eta_min: 0.0,
            eta_max: 980.0,
            gravity: 9.81,
        }
    }

    /// Micro quadrotor for the circle benchmark.
    pub fn crazyflie() -> Self {
        Self {
            mass: 0.03,
            inertia: Matrix3::from_diagonal(&Vector3::new(1.43e-5, 1.43e-5, 2.89e-5)),
            rotor_positions: x_layout(0.043),
            rotor_directions: vec![1.0, -1.0, 1.0, -1.0],
            k_eta: 2.3e-8,
            k_m: 7.8e-10,
            parasitic_drag: Vector3::new(0.5e-2, 0.5e-2, 1.0e-2),
            k_d: 1.19e-7,
            k_z: 2.32e-7,
            k_flap: 0.0,
            tau_m: 0.005,
            eta_min: 0.0,
            eta_max: 2500.0,
            gravity: 9.81,
        }
    }

    pub fn rotor_count(&self) -> usize {
        self.rotor_positions.len()
    }

    /// diag(k_d, k_d, k_z).
    pub fn rotor_drag_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(self.k_d, self.k_d, self.k_z))
    }

    /// diag(c_Dx, c_Dy, c_Dz).
    pub fn parasitic_drag_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.parasitic_drag)
    }

    /// Equal rotor speed that balances gravity.
    pub fn hover_rotor_speed(&self) -> f64 {
        (self.mass * self.gravity / (self.rotor_count() as f64 * self.k_eta)).sqrt()
    }

    pub fn max_thrust(&self) -> f64 {
        self.rotor_count() as f64 * self.k_eta * self.eta_max * self.eta_max
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.rotor_count();
        let fail = |msg: String| Err(Error::Config(msg));
        if n < 4 {
            return fail(format!("need at least 4 rotors, got {n}"));
        }
        if self.rotor_directions.len() != n {
            return fail(format!(
                "{} rotor directions for {n} rotors",
                self.rotor_directions.len()
            ));
        }
        if self.rotor_directions.iter().any(|&e| (e.abs() - 1.0).abs() > 0.0) {
            return fail("rotor directions must be +1 or -1".into());
        }
        if !(self.mass > 0.0) {
            return fail(format!("mass must be positive, got {}", self.mass));
        }
        if !(self.tau_m > 0.0) {
            return fail(format!("motor time constant must be positive, got {}", self.tau_m));
        }
        if !(self.k_eta > 0.0) {
            return fail(format!("thrust coefficient must be positive, got {}", self.k_eta));
        }
        if !(self.gravity >= 0.0) {
            return fail("gravity must be nonnegative".into());
        }
        if (self.inertia - self.inertia.transpose()).abs().max() > 1e-12 * self.inertia.abs().max()
        {
            return fail("inertia tensor is not symmetric".into());
        }
        if self.inertia.cholesky().is_none() {
            return fail("inertia tensor is not positive definite".into());
        }
        if self.parasitic_drag.iter().any(|&c| !(c >= 0.0))
            || !(self.k_d >= 0.0)
            || !(self.k_z >= 0.0)
        {
            return fail("drag coefficients must be nonnegative".into());
        }
        if !(self.k_flap >= 0.0) || !self.k_flap.is_finite() {
            return fail("flapping coefficient must be nonnegative".into());
        }
        if !(self.eta_min >= 0.0) || !(self.eta_max > self.eta_min) {
            return fail(format!(
                "rotor speed bounds must satisfy 0 <= min < max, got [{}, {}]",
                self.eta_min, self.eta_max
            ));
        }
        let all_finite = self.rotor_positions.iter().all(|r| r.iter().all(|c| c.is_finite()))
            && self.k_m.is_finite()
            && self.inertia.iter().all(|c| c.is_finite());
        if !all_finite {
            return fail("non-finite vehicle parameter".into());
        }
        Ok(())
    }
}

/// Four rotors on the diagonals of an X frame, ordered front-left,
/// back-left, back-right, front-right.
fn x_layout(arm: f64) -> Vec<Vector3<f64>> {
    let d = arm * std::f64::consts::FRAC_1_SQRT_2;
    vec![
        Vector3::new(d, d, 0.0),
        Vector3::new(-d, d, 0.0),
        Vector3::new(-d, -d, 0.0),
        Vector3::new(d, -d, 0.0),
    ]
}
