//! Time-series results and their CSV / JSON export.

use std::io::Write;
use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::control::FlatOutput;
use crate::error::{Error, Result};
use crate::estimator::{CalibrationSample, DragCalibration};
use crate::state::VehicleState;

use super::config::ScenarioConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct ImuSample {
    pub accel: Vector3<f64>,
    pub gyro: Vector3<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MocapSample {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
    pub body_rates: Vector3<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateSample {
    pub wind: Vector3<f64>,
    pub wind_std: Vector3<f64>,
    /// NIS of the accelerometer update made at this step, if any.
    pub accel_nis: Option<f64>,
}

/// One control step.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultsRow {
    pub state: VehicleState,
    pub desired: FlatOutput,
    /// Collective thrust requested by the controller, N.
    pub thrust_cmd: f64,
    pub moment_cmd: Vector3<f64>,
    pub eta_cmd: Vec<f64>,
    pub saturated: bool,
    /// Thrust the rotors actually produce, N.
    pub thrust_true: f64,
    pub wind: Vector3<f64>,
    pub imu: Option<ImuSample>,
    pub mocap: Option<MocapSample>,
    pub estimate: Option<EstimateSample>,
}

impl ResultsRow {
    pub fn t(&self) -> f64 {
        self.state.t
    }
}

/// Why a run stopped early.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub t: f64,
    pub cause: String,
}

/// Scalar summary written to the JSON sidecar.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub simulated_time: f64,
    pub position_rmse: f64,
    pub max_position_error: f64,
    pub saturated_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wind_rmse: Option<[f64; 4]>,
    pub skipped_updates: usize,
    pub integrator_steps: usize,
    pub integrator_rejected: usize,
}

/// Sidecar metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub schema_version: u32,
    pub crate_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub summary: RunSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<DragCalibration>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureRecord>,
}

/// Output of [`run`](super::run): rows at the control rate plus metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultsRow>,
    pub metadata: RunMetadata,
}

impl ResultsTable {
    pub(crate) fn new(config: &ScenarioConfig) -> Self {
        Self {
            rows: Vec::new(),
            metadata: RunMetadata {
                schema_version: super::config::SCHEMA_VERSION,
                crate_version: env!("CARGO_PKG_VERSION").to_string(),
                config_hash: config.hash(),
                seed: config.seed,
                config: serde_json::to_value(config).expect("scenario configs always serialize"),
                summary: RunSummary::default(),
                calibration: None,
                failure: None,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn failed(&self) -> bool {
        self.metadata.failure.is_some()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t()).collect()
    }

    /// Rows carrying an IMU sample, as calibration input.
    pub fn calibration_samples(&self) -> Vec<CalibrationSample> {
        self.rows
            .iter()
            .filter_map(|r| {
                r.imu.as_ref().map(|imu| CalibrationSample {
                    velocity: r.state.velocity,
                    attitude: r.state.attitude,
                    wind: r.wind,
                    thrust: r.thrust_cmd,
                    accel: imu.accel,
                })
            })
            .collect()
    }

    /// Column names of the wide CSV.
    pub fn header(&self) -> Vec<String> {
        let rotors = self.rows.first().map_or(4, |r| r.state.rotor_speeds.len());
        csv_header(rotors)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        let mut record = Vec::new();
        for row in &self.rows {
            record.clear();
            push_row(&mut record, row);
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn metadata_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.metadata)?)
    }

    /// Write `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let csv = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
        self.write_csv(std::io::BufWriter::new(csv))?;
        std::fs::write(dir.join(format!("{stem}.json")), self.metadata_json()?)?;
        Ok(())
    }
}

fn vec3(prefix: &str, out: &mut Vec<String>) {
    for axis in ["x", "y", "z"] {
        out.push(format!("{prefix}_{axis}"));
    }
}

fn quat(prefix: &str, out: &mut Vec<String>) {
    for c in ["w", "x", "y", "z"] {
        out.push(format!("{prefix}_q{c}"));
    }
}

/// Header for a vehicle with `rotors` rotors.
///
/// Ground truth (`x`, `v`, `q`, `w_body`, `eta_i`), the reference
/// (`des_*`), commands (`thrust_cmd`, `moment_cmd_*`, `eta_cmd_i`,
/// `saturated`, `thrust_true`), wind truth (`wind_*`), sensors (`imu_*`,
/// `mocap_*`), and the estimate (`wind_est_*`, `wind_std_*`, `nis_accel`).
/// Cells are empty where a sensor or the estimator produced nothing.
pub fn csv_header(rotors: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    vec3("x", &mut h);
    vec3("v", &mut h);
    h.extend(["q_w", "q_x", "q_y", "q_z"].map(String::from));
    vec3("w_body", &mut h);
    h.extend((0..rotors).map(|i| format!("eta_{i}")));
    vec3("des_x", &mut h);
    vec3("des_v", &mut h);
    vec3("des_a", &mut h);
    vec3("des_j", &mut h);
    h.push("des_yaw".into());
    h.push("des_yaw_rate".into());
    h.push("thrust_cmd".into());
    vec3("moment_cmd", &mut h);
    h.extend((0..rotors).map(|i| format!("eta_cmd_{i}")));
    h.push("saturated".into());
    h.push("thrust_true".into());
    vec3("wind", &mut h);
    vec3("imu_accel", &mut h);
    vec3("imu_gyro", &mut h);
    vec3("mocap_x", &mut h);
    vec3("mocap_v", &mut h);
    quat("mocap", &mut h);
    vec3("mocap_w_body", &mut h);
    vec3("wind_est", &mut h);
    vec3("wind_std", &mut h);
    h.push("nis_accel".into());
    h
}

fn num(out: &mut Vec<String>, v: f64) {
    out.push(format!("{v}"));
}

fn nums(out: &mut Vec<String>, v: &Vector3<f64>) {
    for c in v.iter() {
        num(out, *c);
    }
}

fn blanks(out: &mut Vec<String>, n: usize) {
    out.extend(std::iter::repeat_n(String::new(), n));
}

fn push_quat(out: &mut Vec<String>, q: &UnitQuaternion<f64>) {
    for c in [q.w, q.i, q.j, q.k] {
        num(out, c);
    }
}

fn push_row(out: &mut Vec<String>, r: &ResultsRow) {
    let s = &r.state;
    num(out, s.t);
    nums(out, &s.position);
    nums(out, &s.velocity);
    push_quat(out, &s.attitude);
    nums(out, &s.body_rates);
    for e in &s.rotor_speeds {
        num(out, *e);
    }
    let d = &r.desired;
    nums(out, &d.position);
    nums(out, &d.velocity);
    nums(out, &d.acceleration);
    nums(out, &d.jerk);
    num(out, d.yaw);
    num(out, d.yaw_rate);
    num(out, r.thrust_cmd);
    nums(out, &r.moment_cmd);
    for e in &r.eta_cmd {
        num(out, *e);
    }
    out.push(if r.saturated { "1" } else { "0" }.into());
    num(out, r.thrust_true);
    nums(out, &r.wind);
    match &r.imu {
        Some(imu) => {
            nums(out, &imu.accel);
            nums(out, &imu.gyro);
        }
        None => blanks(out, 6),
    }
    match &r.mocap {
        Some(m) => {
            nums(out, &m.position);
            nums(out, &m.velocity);
            push_quat(out, &m.attitude);
            nums(out, &m.body_rates);
        }
        None => blanks(out, 13),
    }
    match &r.estimate {
        Some(e) => {
            nums(out, &e.wind);
            nums(out, &e.wind_std);
            match e.accel_nis {
                Some(n) => num(out, n),
                None => blanks(out, 1),
            }
        }
        None => blanks(out, 7),
    }
}
