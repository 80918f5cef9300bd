//! Unscented transform over the navigation error state.

use nalgebra::{DMatrix, DVector, SMatrix, SVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{exp_map, log_map, psd_cholesky, psd_cholesky_dyn, symmetrize};

/// Dimension of the error state: position, velocity, attitude, wind.
pub const ERROR_DIM: usize = 12;
pub type ErrorVector = SVector<f64, ERROR_DIM>;
pub type Covariance = SMatrix<f64, ERROR_DIM, ERROR_DIM>;

/// Mean of the filter state.
#[derive(Clone, Debug, PartialEq)]
pub struct NavState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
    pub wind: Vector3<f64>,
}

impl NavState {
    /// `self ⊞ dx`; attitude errors act on the right (body frame).
    pub fn retract(&self, dx: &ErrorVector) -> NavState {
        NavState {
            position: self.position + dx.fixed_rows::<3>(0),
            velocity: self.velocity + dx.fixed_rows::<3>(3),
            attitude: self.attitude * exp_map(&dx.fixed_rows::<3>(6).into_owned()),
            wind: self.wind + dx.fixed_rows::<3>(9),
        }
    }

    /// `other ⊟ self`.
    pub fn local(&self, other: &NavState) -> ErrorVector {
        let mut dx = ErrorVector::zeros();
        dx.fixed_rows_mut::<3>(0).copy_from(&(other.position - self.position));
        dx.fixed_rows_mut::<3>(3).copy_from(&(other.velocity - self.velocity));
        dx.fixed_rows_mut::<3>(6).copy_from(&log_map(&(self.attitude.inverse() * other.attitude)));
        dx.fixed_rows_mut::<3>(9).copy_from(&(other.wind - self.wind));
        dx
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).chain(self.wind.iter()).all(|c| c.is_finite())
            && self.attitude.coords.iter().all(|c| c.is_finite())
    }
}

/// Mean, error-state covariance, and time.
#[derive(Clone, Debug, PartialEq)]
pub struct UkfBelief {
    pub mean: NavState,
    pub cov: Covariance,
    pub t: f64,
}

/// Scaled unscented transform parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnscentedScaling {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UnscentedScaling {
    fn default() -> Self {
        Self {
            alpha: 1e-1,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

impl UnscentedScaling {
    /// (λ, mean weights, covariance weights) for dimension `n`.
    pub fn weights(&self, n: usize) -> (f64, Vec<f64>, Vec<f64>) {
        let nf = n as f64;
        let lambda = self.alpha * self.alpha * (nf + self.kappa) - nf;
        let w = 1.0 / (2.0 * (nf + lambda));
        let mut wm = vec![w; 2 * n + 1];
        let mut wc = vec![w; 2 * n + 1];
        wm[0] = lambda / (nf + lambda);
        wc[0] = wm[0] + 1.0 - self.alpha * self.alpha + self.beta;
        (lambda, wm, wc)
    }
}

/// Weighted sigma points around a belief.
#[derive(Clone, Debug)]
pub struct SigmaPoints {
    pub points: Vec<NavState>,
    /// Tangent offset of each point from the mean.
    pub offsets: Vec<ErrorVector>,
    pub wm: Vec<f64>,
    pub wc: Vec<f64>,
}

pub fn sigma_points(belief: &UkfBelief, scaling: &UnscentedScaling) -> Result<SigmaPoints> {
    let (lambda, wm, wc) = scaling.weights(ERROR_DIM);
    let scaled = belief.cov * (ERROR_DIM as f64 + lambda);
    let l = psd_cholesky(&scaled).ok_or_else(|| Error::SquareRoot {
        min_diagonal: (0..ERROR_DIM).map(|i| belief.cov[(i, i)]).fold(f64::INFINITY, f64::min),
    })?;
    let mut offsets = Vec::with_capacity(2 * ERROR_DIM + 1);
    offsets.push(ErrorVector::zeros());
    for i in 0..ERROR_DIM {
        offsets.push(l.column(i).into_owned());
    }
    for i in 0..ERROR_DIM {
        offsets.push(-l.column(i).into_owned());
    }
    let points = offsets.iter().map(|dx| belief.mean.retract(dx)).collect();
    Ok(SigmaPoints {
        points,
        offsets,
        wm,
        wc,
    })
}

/// Sigma points of a plain vector Gaussian.
pub fn vector_sigma_points(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    scaling: &UnscentedScaling,
) -> Result<(Vec<DVector<f64>>, Vec<f64>, Vec<f64>)> {
    let n = mean.len();
    let (lambda, wm, wc) = scaling.weights(n);
    let l = psd_cholesky_dyn(&(cov * (n as f64 + lambda))).ok_or_else(|| Error::SquareRoot {
        min_diagonal: cov.diagonal().min(),
    })?;
    let mut pts = vec![mean.clone()];
    for i in 0..n {
        pts.push(mean + l.column(i));
    }
    for i in 0..n {
        pts.push(mean - l.column(i));
    }
    Ok((pts, wm, wc))
}

/// Recombine propagated points into a mean and deviation set. Attitudes
/// are averaged in the tangent space of the first (central) point.
pub(crate) fn recombine(points: &[NavState], wm: &[f64]) -> (NavState, Vec<ErrorVector>) {
    let reference = NavState {
        position: Vector3::zeros(),
        velocity: Vector3::zeros(),
        attitude: points[0].attitude,
        wind: Vector3::zeros(),
    };
    let raw: Vec<ErrorVector> = points.iter().map(|p| reference.local(p)).collect();
    let mut mean_dx = ErrorVector::zeros();
    for (dx, w) in raw.iter().zip(wm) {
        mean_dx += dx * *w;
    }
    let mean = reference.retract(&mean_dx);
    let devs = raw.into_iter().map(|dx| dx - mean_dx).collect();
    (mean, devs)
}

/// Outcome of a measurement update.
#[derive(Clone, Debug)]
pub struct UpdateResult {
    pub belief: UkfBelief,
    /// Normalized innovation squared; `None` if the update was skipped.
    pub nis: Option<f64>,
    pub skipped: bool,
}

/// Unscented update with an `M`-dimensional measurement.
///
/// `h` maps a sigma point and its tangent offset to the predicted
/// measurement; `z` must be expressed in the same coordinates.
pub fn unscented_update<const M: usize, H>(
    belief: &UkfBelief,
    scaling: &UnscentedScaling,
    z: &SVector<f64, M>,
    noise: &SMatrix<f64, M, M>,
    h: H,
) -> Result<UpdateResult>
where
    H: Fn(&NavState, &ErrorVector) -> SVector<f64, M>,
{
    let sp = sigma_points(belief, scaling)?;
    let zs: Vec<SVector<f64, M>> = sp.points.iter().zip(&sp.offsets).map(|(p, dx)| h(p, dx)).collect();
    let mut z_hat = SVector::<f64, M>::zeros();
    for (zj, w) in zs.iter().zip(&sp.wm) {
        z_hat += zj * *w;
    }
    let mut pzz = *noise;
    let mut pxz = SMatrix::<f64, ERROR_DIM, M>::zeros();
    for ((zj, dx), w) in zs.iter().zip(&sp.offsets).zip(&sp.wc) {
        let dz = zj - z_hat;
        pzz += dz * dz.transpose() * *w;
        pxz += dx * dz.transpose() * *w;
    }
    let pzz = 0.5 * (pzz + pzz.transpose());
    let Some(chol) = pzz.cholesky() else {
        return Ok(UpdateResult {
            belief: belief.clone(),
            nis: None,
            skipped: true,
        });
    };
    let innovation = z - z_hat;
    let nis = innovation.dot(&chol.solve(&innovation));
    // K = Pxz Pzz⁻¹, via the transpose solve.
    let gain = chol.solve(&pxz.transpose()).transpose();
    let dx = gain * innovation;
    let mut cov = belief.cov - gain * pzz * gain.transpose();
    symmetrize(&mut cov);
    let mean = belief.mean.retract(&dx);
    if !mean.is_finite() || !cov.iter().all(|c| c.is_finite()) {
        return Err(Error::Divergence { t: belief.t });
    }
    Ok(UpdateResult {
        belief: UkfBelief {
            mean,
            cov,
            t: belief.t,
        },
        nis: Some(nis),
        skipped: false,
    })
}
