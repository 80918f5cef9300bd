//! Error metrics, the rank test used by the Monte Carlo study, and seed
//! derivation.

use nalgebra::Vector3;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-axis and vector-norm RMSE.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rmse {
    pub axes: Vector3<f64>,
    pub norm: f64,
    pub samples: usize,
}

impl Rmse {
    pub fn as_array(&self) -> [f64; 4] {
        [self.axes.x, self.axes.y, self.axes.z, self.norm]
    }
}

/// RMSE of `estimate` against `truth` over samples with `t >= window_start`.
pub fn rmse(times: &[f64], estimate: &[Vector3<f64>], truth: &[Vector3<f64>], window_start: f64) -> Result<Rmse> {
    if times.len() != estimate.len() || times.len() != truth.len() {
        return Err(Error::Config(format!(
            "misaligned series: {} times, {} estimates, {} truths",
            times.len(),
            estimate.len(),
            truth.len()
        )));
    }
    let mut sum = Vector3::zeros();
    let mut n = 0usize;
    for ((t, e), w) in times.iter().zip(estimate).zip(truth) {
        if *t >= window_start {
            let d = e - w;
            sum += d.component_mul(&d);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyWindow(format!("no samples at or after t = {window_start}")));
    }
    let mean = sum / n as f64;
    Ok(Rmse {
        axes: mean.map(f64::sqrt),
        norm: mean.sum().sqrt(),
        samples: n,
    })
}

/// Result of a one-sided Mann–Whitney test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTest {
    /// Number of pairs (a, b) with a > b; ties count one half.
    pub u: f64,
    /// P(U ≥ u) under the null of identical distributions.
    pub p_value: f64,
}

/// Exact one-sided Mann–Whitney U test of "`a` tends to exceed `b`".
///
/// The null distribution is enumerated exactly, which assumes no ties;
/// with ties the half-counted pairs make the test slightly conservative.
pub fn mann_whitney_greater(a: &[f64], b: &[f64]) -> Result<RankTest> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyWindow("rank test needs two nonempty samples".into()));
    }
    let mut u = 0.0f64;
    for x in a {
        for y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    let (m, n) = (a.len(), b.len());
    let counts = u_distribution(m, n);
    let total: f64 = counts.iter().sum();
    let threshold = u.ceil() as usize;
    let tail: f64 = counts.iter().skip(threshold).sum();
    Ok(RankTest {
        u,
        p_value: tail / total,
    })
}

/// Number of arrangements giving each U value, for sample sizes `m`, `n`.
fn u_distribution(m: usize, n: usize) -> Vec<f64> {
    // f[i][j][u]: arrangements of i a's and j b's with statistic u.
    let max_u = m * n;
    let mut prev: Vec<Vec<f64>> = vec![vec![0.0; max_u + 1]; n + 1];
    for row in prev.iter_mut() {
        row[0] = 1.0;
    }
    for _ in 1..=m {
        let mut cur: Vec<Vec<f64>> = vec![vec![0.0; max_u + 1]; n + 1];
        cur[0][0] = 1.0;
        for j in 1..=n {
            for u in 0..=max_u {
                // Largest element is an a (beats all j b's) or a b.
                let from_a = if u >= j { prev[j][u - j] } else { 0.0 };
                cur[j][u] = from_a + cur[j - 1][u];
            }
        }
        prev = cur;
    }
    prev.swap_remove(n)
}

/// Independent 64-bit seed for stream `stream` of `master`.
///
/// Uses ChaCha's stream counter, so any stream can be derived directly
/// without generating the ones before it.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}
