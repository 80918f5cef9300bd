//! Randomized-parameter study of the wind estimator.

use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wind::WindProfile;

use super::config::{DragSource, ScenarioConfig, SCHEMA_VERSION};
use super::metrics::{mann_whitney_greater, RankTest};
use super::run::run;

/// Closed interval `[lo, hi]` sampled uniformly.
pub type Range = [f64; 2];

/// Vehicle parameter ranges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterRanges {
    pub mass: Range,
    pub c_dx: Range,
    pub c_dy: Range,
    pub c_dz: Range,
    pub k_d: Range,
    pub k_z: Range,
}

impl Default for ParameterRanges {
    fn default() -> Self {
        Self {
            mass: [0.375, 0.9375],
            c_dx: [0.0, 1e-3],
            c_dy: [0.0, 1e-3],
            c_dz: [0.0, 2e-2],
            k_d: [0.0, 1.19e-3],
            k_z: [0.0, 2.32e-3],
        }
    }
}

/// Which error summary decides a trial's score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMetric {
    /// RMSE of the full 3-D wind error vector.
    #[default]
    Norm,
    /// RMSE of the horizontal wind error.
    Horizontal,
}

/// A study: `trials` evaluations of `scenario` with randomized vehicles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub ranges: ParameterRanges,
    /// Mean wind speed range, m/s; the direction is uniform in the plane.
    pub wind_speed: Range,
    #[serde(default = "default_threshold")]
    pub rmse_threshold: f64,
    #[serde(default)]
    pub score: ScoreMetric,
    /// Airspeed at which the drag-strength key linearizes parasitic drag, m/s.
    #[serde(default = "default_reference_airspeed")]
    pub reference_airspeed: f64,
    /// Evaluation scenario. Its estimator must calibrate drag; vehicle
    /// parameters, wind mean, and seeds are overwritten per trial.
    pub scenario: ScenarioConfig,
}

fn default_threshold() -> f64 {
    0.5
}

fn default_reference_airspeed() -> f64 {
    2.5
}

impl MonteCarloSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: MonteCarloSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.trials == 0 {
            return Err(Error::Config("trial count must be at least 1".into()));
        }
        let r = &self.ranges;
        for (name, range) in [
            ("mass", r.mass),
            ("c_dx", r.c_dx),
            ("c_dy", r.c_dy),
            ("c_dz", r.c_dz),
            ("k_d", r.k_d),
            ("k_z", r.k_z),
            ("wind_speed", self.wind_speed),
        ] {
            if !(range[0] >= 0.0 && range[1] >= range[0] && range[1].is_finite()) {
                return Err(Error::Config(format!("range {name} must satisfy 0 <= lo <= hi")));
            }
        }
        if !(r.mass[0] > 0.0) {
            return Err(Error::Config("mass range must be positive".into()));
        }
        match self.scenario.estimator.as_ref().map(|e| &e.drag) {
            Some(DragSource::Calibrate { .. }) => {}
            _ => {
                return Err(Error::Config(
                    "Monte Carlo scenario needs an estimator with drag calibration".into(),
                ))
            }
        }
        self.scenario.validate()
    }

    /// The parameters and configuration of trial `index`.
    pub fn trial(&self, index: usize) -> (TrialDraw, ScenarioConfig) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let mut draw = |r: Range| if r[1] > r[0] { rng.random_range(r[0]..=r[1]) } else { r[0] };
        let r = &self.ranges;
        let mass = draw(r.mass);
        let c_d = Vector3::new(draw(r.c_dx), draw(r.c_dy), draw(r.c_dz));
        let k_d = draw(r.k_d);
        let k_z = draw(r.k_z);
        let speed = draw(self.wind_speed);
        let heading = draw([0.0, std::f64::consts::TAU]);
        let mean_wind = Vector3::new(speed * heading.cos(), speed * heading.sin(), 0.0);
        let seeds = [rng.next_u64(), rng.next_u64(), rng.next_u64()];

        let mut cfg = self.scenario.clone();
        cfg.name = format!("{}-trial{index:03}", self.name);
        cfg.seed = seeds[0];
        cfg.vehicle.mass = Some(mass);
        cfg.vehicle.parasitic_drag = Some(c_d);
        cfg.vehicle.k_d = Some(k_d);
        cfg.vehicle.k_z = Some(k_z);
        match &mut cfg.wind {
            WindProfile::Dryden(p) => {
                p.mean = mean_wind;
                p.seed = seeds[1];
            }
            other => {
                *other = WindProfile::Constant { velocity: mean_wind };
            }
        }
        if let Some(DragSource::Calibrate { seed, .. }) = cfg.estimator.as_mut().map(|e| &mut e.drag) {
            *seed = Some(seeds[2]);
        }

        let vehicle = cfg.vehicle.build().expect("validated ranges give valid vehicles");
        let key = drag_strength(&vehicle, self.reference_airspeed);
        (
            TrialDraw {
                mass,
                c_d,
                k_d,
                k_z,
                wind_mean: mean_wind,
                drag_strength: key,
            },
            cfg,
        )
    }
}

/// Horizontal drag acceleration per unit airspeed near `v_ref`, 1/s:
/// the slope of parasitic drag at `v_ref` plus rotor drag at hover,
/// divided by mass.
pub fn drag_strength(p: &crate::params::VehicleParams, v_ref: f64) -> f64 {
    let parasitic = (p.parasitic_drag.x + p.parasitic_drag.y) * v_ref;
    let rotor = p.rotor_count() as f64 * p.k_d * p.hover_rotor_speed();
    (parasitic + rotor) / p.mass
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialDraw {
    pub mass: f64,
    pub c_d: Vector3<f64>,
    pub k_d: f64,
    pub k_z: f64,
    pub wind_mean: Vector3<f64>,
    pub drag_strength: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub index: usize,
    pub draw: TrialDraw,
    /// Per-axis and norm wind RMSE; absent if the trial failed.
    pub rmse: Option<[f64; 4]>,
    pub horizontal_rmse: Option<f64>,
    pub fitted_drag: Option<Vector3<f64>>,
    pub calibration_warning: bool,
    pub saturated_fraction: f64,
    pub failure: Option<String>,
}

impl TrialResult {
    pub fn score(&self, metric: ScoreMetric) -> Option<f64> {
        match metric {
            ScoreMetric::Norm => self.rmse.map(|r| r[3]),
            ScoreMetric::Horizontal => self.horizontal_rmse,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub score: ScoreMetric,
    pub threshold: f64,
    /// Fraction of successful trials scoring at or under the threshold.
    pub fraction_within_threshold: f64,
    pub median: f64,
    pub quartiles: [f64; 2],
    /// Scores of the weakest-drag decile versus the strongest.
    pub decile_test: Option<RankTest>,
    pub decile_size: usize,
    pub calibration_warnings: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub name: String,
    pub seed: u64,
    pub crate_version: String,
    pub trials: Vec<TrialResult>,
    pub summary: MonteCarloSummary,
}

/// Run trial `index` of `spec`.
pub fn run_trial(spec: &MonteCarloSpec, index: usize) -> TrialResult {
    let (draw, cfg) = spec.trial(index);
    let window = cfg.estimator.as_ref().map_or(0.0, |e| e.rmse_window_start);
    let mut result = TrialResult {
        index,
        draw,
        rmse: None,
        horizontal_rmse: None,
        fitted_drag: None,
        calibration_warning: false,
        saturated_fraction: 0.0,
        failure: None,
    };
    match run(&cfg) {
        Ok(table) => {
            if let Some(cal) = &table.metadata.calibration {
                result.fitted_drag = Some(cal.coefficients);
                result.calibration_warning = cal.warning();
            }
            result.saturated_fraction = table.metadata.summary.saturated_fraction;
            if let Some(f) = &table.metadata.failure {
                result.failure = Some(format!("t = {}: {}", f.t, f.cause));
            } else {
                match super::run::wind_rmse(&table, window) {
                    Ok(r) => {
                        result.rmse = Some(r.as_array());
                        result.horizontal_rmse = Some((r.axes.x.powi(2) + r.axes.y.powi(2)).sqrt());
                    }
                    Err(e) => result.failure = Some(e.to_string()),
                }
            }
        }
        Err(e) => result.failure = Some(e.to_string()),
    }
    result
}

/// Run every trial. `parallelism` is the worker count; 1 runs in the
/// calling thread. Results do not depend on it.
pub fn monte_carlo(spec: &MonteCarloSpec, parallelism: usize) -> Result<MonteCarloReport> {
    spec.validate()?;
    let trials: Vec<TrialResult> = if parallelism <= 1 {
        (0..spec.trials).map(|i| run_trial(spec, i)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| (0..spec.trials).into_par_iter().map(|i| run_trial(spec, i)).collect())
    };
    let summary = summarize(&trials, spec.score, spec.rmse_threshold)?;
    Ok(MonteCarloReport {
        name: spec.name.clone(),
        seed: spec.seed,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        trials,
        summary,
    })
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(trials: &[TrialResult], metric: ScoreMetric, threshold: f64) -> Result<MonteCarloSummary> {
    let ok: Vec<&TrialResult> = trials.iter().filter(|t| t.score(metric).is_some()).collect();
    if ok.is_empty() {
        return Err(Error::EmptyWindow("every Monte Carlo trial failed".into()));
    }
    let mut scores: Vec<f64> = ok.iter().map(|t| t.score(metric).unwrap()).collect();
    scores.sort_by(f64::total_cmp);
    let within = scores.iter().filter(|s| **s <= threshold).count();

    let mut by_drag = ok.clone();
    by_drag.sort_by(|a, b| a.draw.drag_strength.total_cmp(&b.draw.drag_strength));
    let decile = ok.len() / 10;
    let decile_test = if decile >= 1 {
        let weak: Vec<f64> = by_drag[..decile].iter().map(|t| t.score(metric).unwrap()).collect();
        let strong: Vec<f64> = by_drag[ok.len() - decile..].iter().map(|t| t.score(metric).unwrap()).collect();
        Some(mann_whitney_greater(&weak, &strong)?)
    } else {
        None
    };
    Ok(MonteCarloSummary {
        trials: trials.len(),
        succeeded: ok.len(),
        failed: trials.len() - ok.len(),
        score: metric,
        threshold,
        fraction_within_threshold: within as f64 / ok.len() as f64,
        median: quantile(&scores, 0.5),
        quartiles: [quantile(&scores, 0.25), quantile(&scores, 0.75)],
        decile_test,
        decile_size: decile,
        calibration_warnings: trials.iter().filter(|t| t.calibration_warning).count(),
    })
}

/// Flat per-trial record for CSV export.
#[derive(Serialize)]
struct TrialRecord {
    index: usize,
    mass: f64,
    c_dx: f64,
    c_dy: f64,
    c_dz: f64,
    k_d: f64,
    k_z: f64,
    wind_x: f64,
    wind_y: f64,
    drag_strength: f64,
    fit_c_dx: Option<f64>,
    fit_c_dy: Option<f64>,
    fit_c_dz: Option<f64>,
    calibration_warning: bool,
    rmse_x: Option<f64>,
    rmse_y: Option<f64>,
    rmse_z: Option<f64>,
    rmse_norm: Option<f64>,
    rmse_horizontal: Option<f64>,
    saturated_fraction: f64,
    failure: Option<String>,
}

impl MonteCarloReport {
    pub fn write_trials_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for t in &self.trials {
            let d = &t.draw;
            w.serialize(TrialRecord {
                index: t.index,
                mass: d.mass,
                c_dx: d.c_d.x,
                c_dy: d.c_d.y,
                c_dz: d.c_d.z,
                k_d: d.k_d,
                k_z: d.k_z,
                wind_x: d.wind_mean.x,
                wind_y: d.wind_mean.y,
                drag_strength: d.drag_strength,
                fit_c_dx: t.fitted_drag.map(|c| c.x),
                fit_c_dy: t.fitted_drag.map(|c| c.y),
                fit_c_dz: t.fitted_drag.map(|c| c.z),
                calibration_warning: t.calibration_warning,
                rmse_x: t.rmse.map(|r| r[0]),
                rmse_y: t.rmse.map(|r| r[1]),
                rmse_z: t.rmse.map(|r| r[2]),
                rmse_norm: t.rmse.map(|r| r[3]),
                rmse_horizontal: t.horizontal_rmse,
                saturated_fraction: t.saturated_fraction,
                failure: t.failure.clone(),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Out<'a> {
            name: &'a str,
            seed: u64,
            crate_version: &'a str,
            summary: &'a MonteCarloSummary,
        }
        Ok(serde_json::to_string_pretty(&Out {
            name: &self.name,
            seed: self.seed,
            crate_version: &self.crate_version,
            summary: &self.summary,
        })?)
    }

    /// Write `trials.csv` and `summary.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let f = std::fs::File::create(dir.join("trials.csv"))?;
        self.write_trials_csv(std::io::BufWriter::new(f))?;
        std::fs::write(dir.join("summary.json"), self.summary_json()?)?;
        Ok(())
    }
}
