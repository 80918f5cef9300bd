//! Rotor-speed command path: control allocation and saturation.
//!
//! The rotor lag itself is integrated with the rest of the state; see
//! [`first_order_response`] for its closed form.

use nalgebra::{DMatrix, DVector, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::params::VehicleParams;

/// Saturated rotor-speed command.
#[derive(Clone, Debug, PartialEq)]
pub struct MotorCommand {
    /// Commanded rotor speeds, clamped to `[eta_min, eta_max]`, rad/s.
    pub speeds: Vec<f64>,
    /// Whether the unclamped command fell outside the bounds.
    pub saturated: Vec<bool>,
}

impl MotorCommand {
    pub fn any_saturated(&self) -> bool {
        self.saturated.iter().any(|&s| s)
    }
}

/// Maps a desired collective thrust and body moment to rotor speeds.
///
/// The allocation matrix relates squared rotor speeds to
/// (thrust, moment_x, moment_y, moment_z) and is inverted once with an SVD.
#[derive(Clone, Debug)]
pub struct Mixer {
    allocation: DMatrix<f64>,
    inverse: DMatrix<f64>,
    eta_min: f64,
    eta_max: f64,
}

impl Mixer {
    pub fn new(params: &VehicleParams) -> Result<Self> {
        params.validate()?;
        let allocation = allocation_matrix(params);
        let svd = allocation.clone().svd(true, true);
        let s_max = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-9 * s_max)
            .count();
        if rank < 4 {
            return Err(Error::Config(format!(
                "rotor allocation matrix has rank {rank}; thrust and all three moments must be controllable"
            )));
        }
        let inverse = svd
            .pseudo_inverse(1e-12 * s_max)
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            allocation,
            inverse,
            eta_min: params.eta_min,
            eta_max: params.eta_max,
        })
    }

    /// 4×n map from squared rotor speeds to (thrust, moment).
    pub fn allocation(&self) -> &DMatrix<f64> {
        &self.allocation
    }

    pub fn mix(&self, thrust: f64, moment: &Vector3<f64>) -> MotorCommand {
        let wrench = DVector::from_column_slice(Vector4::new(thrust, moment.x, moment.y, moment.z).as_slice());
        let eta_sq = &self.inverse * wrench;
        let mut speeds = Vec::with_capacity(eta_sq.len());
        let mut saturated = Vec::with_capacity(eta_sq.len());
        for &e2 in eta_sq.iter() {
            let raw = e2.max(0.0).sqrt();
            let clamped = raw.clamp(self.eta_min, self.eta_max);
            saturated.push(raw > self.eta_max || raw < self.eta_min);
            speeds.push(clamped);
        }
        MotorCommand { speeds, saturated }
    }

    /// Thrust and moment produced by the given rotor speeds.
    pub fn forward(&self, speeds: &[f64]) -> (f64, Vector3<f64>) {
        let sq = DVector::from_iterator(speeds.len(), speeds.iter().map(|e| e * e));
        let w = &self.allocation * sq;
        (w[0], Vector3::new(w[1], w[2], w[3]))
    }
}

/// Rows: thrust, then body moments from rotor thrust (r_i × k_η η² b3) and
/// rotor drag torque (k_m ε_i η² b3).
pub fn allocation_matrix(params: &VehicleParams) -> DMatrix<f64> {
    let n = params.rotor_count();
    let mut a = DMatrix::zeros(4, n);
    for (i, (r, &eps)) in params
        .rotor_positions
        .iter()
        .zip(&params.rotor_directions)
        .enumerate()
    {
        let m = r.cross(&Vector3::new(0.0, 0.0, params.k_eta));
        a[(0, i)] = params.k_eta;
        a[(1, i)] = m.x;
        a[(2, i)] = m.y;
        a[(3, i)] = m.z + params.k_m * eps;
    }
    a
}

/// Closed-form rotor speed after `t` seconds of constant command.
pub fn first_order_response(eta0: f64, eta_cmd: f64, tau_m: f64, t: f64) -> f64 {
    eta_cmd + (eta0 - eta_cmd) * (-t / tau_m).exp()
}
