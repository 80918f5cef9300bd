use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Desired position and yaw with the derivatives the controller uses.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FlatOutput {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub jerk: Vector3<f64>,
    pub yaw: f64,
    pub yaw_rate: f64,
}

/// Reference trajectories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Trajectory {
    Hover {
        position: Vector3<f64>,
        #[serde(default)]
        yaw: f64,
    },
    /// Horizontal circle starting at `center + (radius, 0, 0)`, spun up
    /// smoothly from rest over `ramp_time`.
    Circle {
        center: Vector3<f64>,
        radius: f64,
        speed: f64,
        #[serde(default = "default_ramp")]
        ramp_time: f64,
        #[serde(default)]
        yaw: f64,
    },
    /// `center + (a_x sin φ, a_y sin 2φ, a_z sin φ)` with the phase rate
    /// swept smoothly from zero to `max_rate` over `sweep_time`.
    FigureEight {
        center: Vector3<f64>,
        amplitude: Vector3<f64>,
        max_rate: f64,
        sweep_time: f64,
        #[serde(default)]
        yaw: f64,
    },
}

fn default_ramp() -> f64 {
    2.0
}

/// Phase φ(t) whose rate follows a quintic smoothstep from 0 to `rate`.
#[derive(Clone, Copy, Debug)]
struct PhaseRamp {
    rate: f64,
    ramp_time: f64,
}

impl PhaseRamp {
    /// (φ, φ̇, φ̈, φ⃛)
    fn eval(&self, t: f64) -> [f64; 4] {
        let t = t.max(0.0);
        let w = self.rate;
        let tr = self.ramp_time;
        if tr <= 0.0 {
            return [w * t, w, 0.0, 0.0];
        }
        if t >= tr {
            return [w * (0.5 * tr + (t - tr)), w, 0.0, 0.0];
        }
        let u = t / tr;
        let (u2, u3) = (u * u, u * u * u);
        let s = 10.0 * u3 - 15.0 * u3 * u + 6.0 * u3 * u2;
        let ds = 30.0 * u2 - 60.0 * u3 + 30.0 * u2 * u2;
        let dds = 60.0 * u - 180.0 * u2 + 120.0 * u3;
        let integral = 2.5 * u2 * u2 - 3.0 * u2 * u3 + u3 * u3;
        [w * tr * integral, w * s, w * ds / tr, w * dds / (tr * tr)]
    }
}

/// `amp · sin(k φ + offset)` and its first three time derivatives.
fn harmonic(amp: f64, k: f64, offset: f64, phase: &[f64; 4]) -> [f64; 4] {
    let [p, dp, ddp, dddp] = *phase;
    let (s, c) = (k * p + offset).sin_cos();
    [
        amp * s,
        amp * k * c * dp,
        amp * k * (c * ddp - k * s * dp * dp),
        amp * k * (c * dddp - 3.0 * k * s * dp * ddp - k * k * c * dp * dp * dp),
    ]
}

impl Trajectory {
    pub fn validate(&self) -> Result<()> {
        match self {
            Trajectory::Hover { .. } => Ok(()),
            Trajectory::Circle { radius, speed, ramp_time, .. } => {
                if !(*radius > 0.0) || !(*speed >= 0.0) || !(*ramp_time >= 0.0) {
                    Err(Error::Config("circle needs radius > 0, speed >= 0, ramp_time >= 0".into()))
                } else {
                    Ok(())
                }
            }
            Trajectory::FigureEight { max_rate, sweep_time, .. } => {
                if !(*max_rate >= 0.0) || !(*sweep_time >= 0.0) {
                    Err(Error::Config("figure eight needs max_rate >= 0 and sweep_time >= 0".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn sample(&self, t: f64) -> FlatOutput {
        match *self {
            Trajectory::Hover { position, yaw } => FlatOutput {
                position,
                yaw,
                ..Default::default()
            },
            Trajectory::Circle {
                center,
                radius,
                speed,
                ramp_time,
                yaw,
            } => {
                let phase = PhaseRamp {
                    rate: speed / radius,
                    ramp_time,
                }
                .eval(t);
                let x = harmonic(radius, 1.0, std::f64::consts::FRAC_PI_2, &phase);
                let y = harmonic(radius, 1.0, 0.0, &phase);
                assemble(center, [x, y, [0.0; 4]], yaw)
            }
            Trajectory::FigureEight {
                center,
                amplitude,
                max_rate,
                sweep_time,
                yaw,
            } => {
                let phase = PhaseRamp {
                    rate: max_rate,
                    ramp_time: sweep_time,
                }
                .eval(t);
                let x = harmonic(amplitude.x, 1.0, 0.0, &phase);
                let y = harmonic(amplitude.y, 2.0, 0.0, &phase);
                let z = harmonic(amplitude.z, 1.0, 0.0, &phase);
                assemble(center, [x, y, z], yaw)
            }
        }
    }
}

fn assemble(center: Vector3<f64>, axes: [[f64; 4]; 3], yaw: f64) -> FlatOutput {
    let col = |i: usize| Vector3::new(axes[0][i], axes[1][i], axes[2][i]);
    FlatOutput {
        position: center + col(0),
        velocity: col(1),
        acceleration: col(2),
        jerk: col(3),
        yaw,
        yaw_rate: 0.0,
    }
}
