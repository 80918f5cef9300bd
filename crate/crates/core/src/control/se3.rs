use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::control::FlatOutput;
use crate::error::{Error, Result};
use crate::math::vee;
use crate::params::VehicleParams;
use crate::state::VehicleState;

const E3: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);
const MIN_FORCE: f64 = 1e-6;

/// Tracking gains. Attitude and rate gains are per unit inertia.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainSet {
    pub kp: Vector3<f64>,
    pub kd: Vector3<f64>,
    pub ki: Vector3<f64>,
    pub k_att: Vector3<f64>,
    pub k_rate: Vector3<f64>,
    /// Bound on each component of the integrated position error, m·s.
    pub integral_limit: f64,
}

impl Default for GainSet {
    fn default() -> Self {
        Self {
            kp: Vector3::new(6.5, 6.5, 15.0),
            kd: Vector3::new(4.0, 4.0, 9.0),
            ki: Vector3::zeros(),
            k_att: Vector3::repeat(544.0),
            k_rate: Vector3::repeat(46.64),
            integral_limit: 1.0,
        }
    }
}

impl GainSet {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: &Vector3<f64>| v.iter().all(|&g| g > 0.0 && g.is_finite());
        if !positive(&self.kp) || !positive(&self.kd) || !positive(&self.k_att) || !positive(&self.k_rate) {
            return Err(Error::Config("controller gains must be positive".into()));
        }
        if self.ki.iter().any(|&g| !(g >= 0.0)) || !(self.integral_limit >= 0.0) {
            return Err(Error::Config("integral gains and limit must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Controller output: collective thrust along body z, body moment, and the
/// attitude the thrust direction is steering toward.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlOutput {
    pub thrust: f64,
    pub moment: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
}

/// Geometric tracking controller on SE(3).
#[derive(Clone, Debug)]
pub struct Se3Controller {
    gains: GainSet,
    mass: f64,
    gravity: f64,
    inertia: Matrix3<f64>,
    integral: Vector3<f64>,
    last_attitude: Rotation3<f64>,
}

impl Se3Controller {
    pub fn new(gains: GainSet, params: &VehicleParams) -> Result<Self> {
        gains.validate()?;
        Ok(Self {
            gains,
            mass: params.mass,
            gravity: params.gravity,
            inertia: params.inertia,
            integral: Vector3::zeros(),
            last_attitude: Rotation3::identity(),
        })
    }

    pub fn gains(&self) -> &GainSet {
        &self.gains
    }

    /// Compute the command for `state` tracking `flat`; `dt` advances the
    /// integral term.
    pub fn update(&mut self, state: &VehicleState, flat: &FlatOutput, dt: f64) -> ControlOutput {
        let g = &self.gains;
        let e_x = state.position - flat.position;
        let e_v = state.velocity - flat.velocity;
        let lim = g.integral_limit;
        self.integral = (self.integral + e_x * dt).map(|c| c.clamp(-lim, lim));

        let f_des = self.mass
            * (flat.acceleration + self.gravity * E3
                - g.kp.component_mul(&e_x)
                - g.kd.component_mul(&e_v)
                - g.ki.component_mul(&self.integral));

        let r = state.rotation();
        let b3 = r * E3;
        let thrust_dir = f_des.norm();
        let (r_des, thrust) = if thrust_dir < MIN_FORCE {
            (self.last_attitude, 0.0)
        } else {
            let b3_des = f_des / thrust_dir;
            let c1 = Vector3::new(flat.yaw.cos(), flat.yaw.sin(), 0.0);
            let b2 = b3_des.cross(&c1);
            let r_des = if b2.norm() < 1e-9 {
                self.last_attitude
            } else {
                let b2 = b2.normalize();
                let b1 = b2.cross(&b3_des);
                Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[b1, b2, b3_des]))
            };
            (r_des, f_des.dot(&b3).max(0.0))
        };
        self.last_attitude = r_des;

        // Feed-forward body rates from the trajectory jerk.
        let b1d = r_des * Vector3::x();
        let b2d = r_des * Vector3::y();
        let b3d = r_des * E3;
        let omega_des = if thrust > MIN_FORCE {
            let h = self.mass / thrust * (flat.jerk - b3d.dot(&flat.jerk) * b3d);
            Vector3::new(-h.dot(&b2d), h.dot(&b1d), flat.yaw_rate * E3.dot(&b3d))
        } else {
            Vector3::new(0.0, 0.0, flat.yaw_rate)
        };

        let rm = r.matrix();
        let rdm = r_des.matrix();
        let e_r = 0.5 * vee(&(rdm.transpose() * rm - rm.transpose() * rdm));
        let omega = state.body_rates;
        let e_omega = omega - rm.transpose() * rdm * omega_des;
        let moment = self.inertia * (-g.k_att.component_mul(&e_r) - g.k_rate.component_mul(&e_omega))
            + omega.cross(&(self.inertia * omega));

        ControlOutput {
            thrust,
            moment,
            attitude: UnitQuaternion::from_rotation_matrix(&r_des),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hover_setup() -> (VehicleParams, VehicleState, FlatOutput) {
        let p = VehicleParams::default_quad();
        let s = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.0), 4, p.hover_rotor_speed());
        let f = FlatOutput {
            position: s.position,
            ..Default::default()
        };
        (p, s, f)
    }

    #[test]
    fn zero_error_hover() {
        let (p, s, f) = hover_setup();
        let mut c = Se3Controller::new(GainSet::default(), &p).unwrap();
        let out = c.update(&s, &f, 0.002);
        assert!((out.thrust - p.mass * p.gravity).abs() < 1e-12);
        assert!(out.moment.norm() < 1e-15);
    }

    #[test]
    fn below_setpoint_pushes_up() {
        let (p, mut s, f) = hover_setup();
        s.position.z -= 0.2;
        let mut c = Se3Controller::new(GainSet::default(), &p).unwrap();
        let out = c.update(&s, &f, 0.002);
        assert!(out.thrust > p.mass * p.gravity);
        assert!(out.moment.norm() < 1e-15);
    }

    #[test]
    fn free_fall_command_holds_attitude() {
        let (p, s, mut f) = hover_setup();
        let mut c = Se3Controller::new(GainSet::default(), &p).unwrap();
        let first = c.update(&s, &f, 0.002);
        f.acceleration = Vector3::new(0.0, 0.0, -p.gravity);
        let out = c.update(&s, &f, 0.002);
        assert_eq!(out.thrust, 0.0);
        assert_eq!(out.attitude, first.attitude);
        assert!(out.moment.iter().all(|m| m.is_finite()));
    }

    #[test]
    fn thrust_magnitude_invariant_under_yawed_error() {
        let (p, s, f) = hover_setup();
        let mut gains = GainSet::default();
        gains.kp = Vector3::new(6.0, 6.0, 6.0);
        gains.kd = Vector3::new(4.0, 4.0, 4.0);
        let err = Vector3::new(0.3, -0.1, 0.05);
        let mut thrusts = Vec::new();
        for k in 0..8 {
            let yaw = UnitQuaternion::from_euler_angles(0.0, 0.0, 0.7 * k as f64);
            let mut fk = f;
            fk.position = s.position + yaw * err;
            let mut c = Se3Controller::new(gains.clone(), &p).unwrap();
            // Compare the commanded force norm, which is what yaw symmetry preserves.
            let out = c.update(&s, &fk, 0.0);
            let tilt = out.attitude * Vector3::z();
            thrusts.push(out.thrust / tilt.z);
        }
        for t in &thrusts {
            assert!((t - thrusts[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_nonpositive_gains() {
        let p = VehicleParams::default_quad();
        let mut g = GainSet::default();
        g.kp.x = 0.0;
        assert!(Se3Controller::new(g, &p).is_err());
    }
}
