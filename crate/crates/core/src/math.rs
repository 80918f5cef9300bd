//! Small linear-algebra and rotation helpers shared across the crate.

use nalgebra::{DMatrix, Matrix3, SMatrix, UnitQuaternion, Vector3};

/// Skew-symmetric matrix such that `hat(a) * b == a.cross(&b)`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`] for a skew-symmetric matrix.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Exponential map from a rotation vector to a unit quaternion.
pub fn exp_map(theta: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(*theta)
}

/// Logarithm map returning the rotation vector of `q` (angle in [0, pi]).
pub fn log_map(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    // Pick the short way around so that the angle never exceeds pi.
    let q = if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        *q
    };
    q.scaled_axis()
}

/// Lower-triangular factor `L` with `L Lᵀ = a` for a symmetric positive
/// semidefinite matrix.
///
/// Pivots at or below `floor` (relative to the largest diagonal) zero out their
/// column instead of failing, so rank-deficient covariances are accepted.
/// Returns `None` when a pivot is clearly negative.
pub fn psd_cholesky<const N: usize>(a: &SMatrix<f64, N, N>) -> Option<SMatrix<f64, N, N>> {
    let scale = (0..N).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let floor = 1e-13 * scale.max(f64::MIN_POSITIVE);
    let mut l = SMatrix::<f64, N, N>::zeros();
    for j in 0..N {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= floor {
            if d < -1e-9 * scale.max(1.0) {
                return None;
            }
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..N {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// Dynamic-size counterpart of [`psd_cholesky`].
pub fn psd_cholesky_dyn(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let floor = 1e-13 * scale.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= floor {
            if d < -1e-9 * scale.max(1.0) {
                return None;
            }
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// Replace `m` with `(m + mᵀ) / 2`.
pub fn symmetrize<const N: usize>(m: &mut SMatrix<f64, N, N>) {
    for i in 0..N {
        for j in (i + 1)..N {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
}
