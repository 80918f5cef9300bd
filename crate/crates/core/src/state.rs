use nalgebra::{DVector, Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Integrated vehicle state.
#[derive(Clone, Debug, PartialEq)]
pub struct VehicleState {
    /// World position (ENU), m.
    pub position: Vector3<f64>,
    /// World velocity, m/s.
    pub velocity: Vector3<f64>,
    /// Body-to-world rotation.
    pub attitude: UnitQuaternion<f64>,
    /// Body angular velocity, rad/s.
    pub body_rates: Vector3<f64>,
    /// Rotor speeds, rad/s.
    pub rotor_speeds: Vec<f64>,
    /// Simulation time, s.
    pub t: f64,
}

/// Time derivative of [`VehicleState`].
#[derive(Clone, Debug, PartialEq)]
pub struct StateDerivative {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Rate of the (not necessarily unit) attitude quaternion.
    pub attitude: Quaternion<f64>,
    pub body_rates: Vector3<f64>,
    pub rotor_speeds: Vec<f64>,
}

/// Number of packed components ahead of the rotor speeds.
pub(crate) const RIGID_BODY_DIM: usize = 13;

impl VehicleState {
    /// At rest at `position`, level, with every rotor spinning at `rotor_speed`.
    pub fn at_rest(position: Vector3<f64>, rotor_count: usize, rotor_speed: f64) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            attitude: UnitQuaternion::identity(),
            body_rates: Vector3::zeros(),
            rotor_speeds: vec![rotor_speed; rotor_count],
            t: 0.0,
        }
    }

    /// Body-to-world rotation matrix.
    pub fn rotation(&self) -> nalgebra::Rotation3<f64> {
        self.attitude.to_rotation_matrix()
    }

    /// Reject the state if any component is NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        check_vec("position", &self.position)?;
        check_vec("velocity", &self.velocity)?;
        if !self.attitude.coords.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite { field: "attitude" });
        }
        check_vec("body_rates", &self.body_rates)?;
        if !self.rotor_speeds.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite { field: "rotor_speeds" });
        }
        if !self.t.is_finite() {
            return Err(Error::NonFinite { field: "t" });
        }
        Ok(())
    }

    /// Flatten to `[x, v, q(w,i,j,k), Ω, η]`.
    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.rotor_speeds.len();
        let mut y = DVector::zeros(RIGID_BODY_DIM + n);
        y.fixed_rows_mut::<3>(0).copy_from(&self.position);
        y.fixed_rows_mut::<3>(3).copy_from(&self.velocity);
        let q = self.attitude.quaternion();
        y[6] = q.w;
        y[7] = q.i;
        y[8] = q.j;
        y[9] = q.k;
        y.fixed_rows_mut::<3>(10).copy_from(&self.body_rates);
        for (i, &eta) in self.rotor_speeds.iter().enumerate() {
            y[RIGID_BODY_DIM + i] = eta;
        }
        y
    }

    /// Inverse of [`to_vector`](Self::to_vector); the quaternion is renormalized.
    pub fn from_vector(y: &DVector<f64>, t: f64) -> Self {
        let q = Quaternion::new(y[6], y[7], y[8], y[9]);
        Self {
            position: y.fixed_rows::<3>(0).into_owned(),
            velocity: y.fixed_rows::<3>(3).into_owned(),
            attitude: UnitQuaternion::from_quaternion(q),
            body_rates: y.fixed_rows::<3>(10).into_owned(),
            rotor_speeds: y.rows(RIGID_BODY_DIM, y.len() - RIGID_BODY_DIM).iter().copied().collect(),
            t,
        }
    }
}

impl StateDerivative {
    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.rotor_speeds.len();
        let mut y = DVector::zeros(RIGID_BODY_DIM + n);
        y.fixed_rows_mut::<3>(0).copy_from(&self.position);
        y.fixed_rows_mut::<3>(3).copy_from(&self.velocity);
        y[6] = self.attitude.w;
        y[7] = self.attitude.i;
        y[8] = self.attitude.j;
        y[9] = self.attitude.k;
        y.fixed_rows_mut::<3>(10).copy_from(&self.body_rates);
        for (i, &d) in self.rotor_speeds.iter().enumerate() {
            y[RIGID_BODY_DIM + i] = d;
        }
        y
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|c| c.is_finite())
    }
}

pub(crate) fn check_vec(field: &'static str, v: &Vector3<f64>) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { field })
    }
}
