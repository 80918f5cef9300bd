//! Wind profiles: constant, step, sinusoid, and Dryden turbulence.
//!
//! The wind acts at the center of mass. Dryden gusts use the low-altitude
//! MIL-F-8785C forms: a first-order longitudinal filter and second-order
//! lateral/vertical filters, discretized exactly at 100 Hz and started from
//! their stationary distribution, so no burn-in is needed.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Internal update interval of the turbulence filters, s.
pub const DRYDEN_DT: f64 = 0.01;

const FT_PER_M: f64 = 3.28084;
const KNOT: f64 = 0.514444;
/// Lower bound on the mean-wind speed used in the scale-length time constants.
const MIN_REFERENCE_SPEED: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WindProfile {
    Constant {
        velocity: Vector3<f64>,
    },
    Step {
        before: Vector3<f64>,
        after: Vector3<f64>,
        t_step: f64,
    },
    /// `mean + amplitude ∘ sin(2π f t)` per axis.
    Sinusoid {
        mean: Vector3<f64>,
        amplitude: Vector3<f64>,
        frequency: Vector3<f64>,
    },
    Dryden(DrydenParams),
}

impl Default for WindProfile {
    fn default() -> Self {
        WindProfile::Constant {
            velocity: Vector3::zeros(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrydenParams {
    /// Mean wind, world frame, m/s.
    pub mean: Vector3<f64>,
    /// Altitude above ground, m.
    pub altitude: f64,
    pub intensity: TurbulenceIntensity,
    #[serde(default)]
    pub seed: u64,
}

/// Turbulence level, expressed through the wind speed at 20 ft (W20).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurbulenceIntensity {
    Off,
    /// W20 = 15 kt.
    Light,
    /// W20 = 30 kt.
    Moderate,
    /// W20 = 45 kt.
    Severe,
    /// W20 equal to the magnitude of the mean wind.
    MeanWind,
    Custom { w20: f64 },
}

impl TurbulenceIntensity {
    /// W20 in m/s for the given mean wind.
    pub fn w20(&self, mean: &Vector3<f64>) -> f64 {
        match *self {
            TurbulenceIntensity::Off => 0.0,
            TurbulenceIntensity::Light => 15.0 * KNOT,
            TurbulenceIntensity::Moderate => 30.0 * KNOT,
            TurbulenceIntensity::Severe => 45.0 * KNOT,
            TurbulenceIntensity::MeanWind => mean.norm(),
            TurbulenceIntensity::Custom { w20 } => w20,
        }
    }
}

impl WindProfile {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &Vector3<f64>| v.iter().all(|c| c.is_finite());
        let ok = match self {
            WindProfile::Constant { velocity } => finite(velocity),
            WindProfile::Step { before, after, t_step } => finite(before) && finite(after) && t_step.is_finite(),
            WindProfile::Sinusoid { mean, amplitude, frequency } => {
                if frequency.iter().any(|&f| !(f > 0.0)) {
                    return Err(Error::Config("sinusoid frequencies must be positive".into()));
                }
                finite(mean) && finite(amplitude) && finite(frequency)
            }
            WindProfile::Dryden(p) => {
                let w20 = p.intensity.w20(&p.mean);
                if !(p.altitude > 0.0) || !(w20 >= 0.0) {
                    return Err(Error::Config("Dryden altitude must be positive and W20 nonnegative".into()));
                }
                finite(&p.mean) && w20.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config("non-finite wind parameter".into()))
        }
    }
}

/// Stateful sampler for a [`WindProfile`].
#[derive(Clone, Debug)]
pub struct WindField {
    profile: WindProfile,
    dryden: Option<DrydenGust>,
}

impl WindField {
    pub fn new(profile: WindProfile) -> Result<Self> {
        profile.validate()?;
        let dryden = match &profile {
            WindProfile::Dryden(p) => Some(DrydenGust::new(p)),
            _ => None,
        };
        Ok(Self { profile, dryden })
    }

    pub fn profile(&self) -> &WindProfile {
        &self.profile
    }

    /// Wind at time `t` and world position `_position`.
    ///
    /// For Dryden turbulence this is a deterministic function of `(t, seed)`:
    /// the filters advance forward in time and replay from the seed if asked
    /// for an earlier instant.
    pub fn sample(&mut self, t: f64, _position: &Vector3<f64>) -> Vector3<f64> {
        match &self.profile {
            WindProfile::Constant { velocity } => *velocity,
            WindProfile::Step { before, after, t_step } => {
                if t < *t_step {
                    *before
                } else {
                    *after
                }
            }
            WindProfile::Sinusoid { mean, amplitude, frequency } => {
                let phase = frequency.map(|f| (2.0 * std::f64::consts::PI * f * t).sin());
                mean + amplitude.component_mul(&phase)
            }
            WindProfile::Dryden(p) => {
                let gust = self.dryden.as_mut().expect("dryden state").gust_at(t);
                p.mean + gust
            }
        }
    }
}

/// Dryden gust generator in the mean-wind-aligned frame.
#[derive(Clone, Debug)]
pub struct DrydenGust {
    seed: u64,
    rng: ChaCha8Rng,
    step: u64,
    heading: f64,
    sigma: Vector3<f64>,
    scale_length: Vector3<f64>,
    reference_speed: f64,
    // Longitudinal first-order filter.
    u_phi: f64,
    u_drive: f64,
    u: f64,
    // Lateral and vertical second-order filters.
    lateral: SecondOrder,
    vertical: SecondOrder,
}

#[derive(Clone, Debug)]
struct SecondOrder {
    phi: Matrix2<f64>,
    drive: Matrix2<f64>,
    stationary: Matrix2<f64>,
    output: Vector2<f64>,
    x: Vector2<f64>,
}

impl SecondOrder {
    /// Shaping filter `(1 + √3 a s) / (1 + a s)²` with output variance σ².
    fn new(sigma: f64, a: f64) -> Self {
        let q = sigma * sigma * a;
        let a_mat = Matrix2::new(0.0, 1.0, -1.0 / (a * a), -2.0 / a);
        let b = Vector2::new(0.0, 1.0);
        let output = Vector2::new(1.0 / (a * a), 3f64.sqrt() / a);
        let (phi, qd) = van_loan(&a_mat, &(b * q * b.transpose()), DRYDEN_DT);
        let drive = qd.cholesky().map(|c| c.l()).unwrap_or_else(Matrix2::zeros);
        let stationary = discrete_lyapunov(&phi, &qd);
        Self {
            phi,
            drive,
            stationary,
            output,
            x: Vector2::zeros(),
        }
    }

    fn reset<R: Rng>(&mut self, rng: &mut R) {
        let l = self.stationary.cholesky().map(|c| c.l()).unwrap_or_else(Matrix2::zeros);
        self.x = l * Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    }

    fn step<R: Rng>(&mut self, rng: &mut R) {
        let n = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        self.x = self.phi * self.x + self.drive * n;
    }

    fn value(&self) -> f64 {
        self.output.dot(&self.x)
    }
}

/// Exact discretization of `ẋ = A x + w`, `E[w wᵀ] = Q_c δ`.
fn van_loan(a: &Matrix2<f64>, qc: &Matrix2<f64>, dt: f64) -> (Matrix2<f64>, Matrix2<f64>) {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&(-a * dt));
    m.fixed_view_mut::<2, 2>(0, 2).copy_from(&(qc * dt));
    m.fixed_view_mut::<2, 2>(2, 2).copy_from(&(a.transpose() * dt));
    let e = m.exp();
    let phi = e.fixed_view::<2, 2>(2, 2).transpose();
    let qd = phi * e.fixed_view::<2, 2>(0, 2);
    let qd = 0.5 * (qd + qd.transpose());
    (phi, qd)
}

/// Solve `P = Φ P Φᵀ + Q` by doubling.
fn discrete_lyapunov(phi: &Matrix2<f64>, q: &Matrix2<f64>) -> Matrix2<f64> {
    let mut p = *q;
    let mut f = *phi;
    for _ in 0..64 {
        p += f * p * f.transpose();
        f = f * f;
        if f.abs().max() < 1e-300 {
            break;
        }
    }
    0.5 * (p + p.transpose())
}

impl DrydenGust {
    pub fn new(params: &DrydenParams) -> Self {
        let h_ft = (params.altitude * FT_PER_M).clamp(10.0, 1000.0);
        let w20 = params.intensity.w20(&params.mean);
        let denom = 0.177 + 0.000823 * h_ft;
        let sigma_w = 0.1 * w20;
        let sigma_uv = sigma_w / denom.powf(0.4);
        let l_uv = h_ft / denom.powf(1.2) / FT_PER_M;
        let l_w = h_ft / FT_PER_M;
        let reference_speed = params.mean.norm().max(MIN_REFERENCE_SPEED);
        let heading = if params.mean.xy().norm() > 1e-12 {
            params.mean.y.atan2(params.mean.x)
        } else {
            0.0
        };

        let a_u = l_uv / reference_speed;
        let u_phi = (-DRYDEN_DT / a_u).exp();
        let mut gust = Self {
            seed: params.seed,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            step: 0,
            heading,
            sigma: Vector3::new(sigma_uv, sigma_uv, sigma_w),
            scale_length: Vector3::new(l_uv, l_uv, l_w),
            reference_speed,
            u_phi,
            u_drive: sigma_uv * (1.0 - u_phi * u_phi).sqrt(),
            u: 0.0,
            lateral: SecondOrder::new(sigma_uv, l_uv / reference_speed),
            vertical: SecondOrder::new(sigma_w, l_w / reference_speed),
        };
        gust.reset();
        gust
    }

    fn reset(&mut self) {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.step = 0;
        self.u = self.sigma.x * self.rng.sample::<f64, _>(StandardNormal);
        self.lateral.reset(&mut self.rng);
        self.vertical.reset(&mut self.rng);
    }

    fn advance(&mut self) {
        let n: f64 = self.rng.sample(StandardNormal);
        self.u = self.u_phi * self.u + self.u_drive * n;
        self.lateral.step(&mut self.rng);
        self.vertical.step(&mut self.rng);
        self.step += 1;
    }

    /// Gust components (longitudinal, lateral, vertical) in the mean-wind frame.
    pub fn components(&self) -> Vector3<f64> {
        Vector3::new(self.u, self.lateral.value(), self.vertical.value())
    }

    /// World-frame gust held constant over each filter interval.
    pub fn gust_at(&mut self, t: f64) -> Vector3<f64> {
        let target = (t.max(0.0) / DRYDEN_DT + 1e-9).floor() as u64;
        if target < self.step {
            self.reset();
        }
        while self.step < target {
            self.advance();
        }
        let c = self.components();
        let (s, co) = self.heading.sin_cos();
        Vector3::new(c.x * co - c.y * s, c.x * s + c.y * co, c.z)
    }

    /// Stationary standard deviations (σ_u, σ_v, σ_w), m/s.
    pub fn sigmas(&self) -> Vector3<f64> {
        self.sigma
    }

    /// Scale lengths (L_u, L_v, L_w), m.
    pub fn scale_lengths(&self) -> Vector3<f64> {
        self.scale_length
    }

    /// Speed used to turn scale lengths into time constants, m/s.
    pub fn reference_speed(&self) -> f64 {
        self.reference_speed
    }
}
