//! Scenario configuration, the simulation loop, results export, and the
//! Monte Carlo study.
//!
//! Each control step samples wind and the reference, runs the controller
//! and mixer, samples the sensors that are due, updates the estimator,
//! logs a row, predicts the estimator forward, and integrates the plant
//! over the control interval with the command and wind held.

mod config;
mod metrics;
mod montecarlo;
mod results;
mod run;
pub mod scenarios;

pub use config::{
    DragSource, EstimatorConfig, ImuSettings, InitialCondition, MocapSettings, ScenarioConfig, SensorsConfig,
    VehicleConfig, SCHEMA_VERSION,
};
pub use metrics::{derive_seed, mann_whitney_greater, rmse, RankTest, Rmse};
pub use montecarlo::{
    drag_strength, monte_carlo, run_trial, summarize, MonteCarloReport, MonteCarloSpec, MonteCarloSummary,
    ParameterRanges, ScoreMetric, TrialDraw, TrialResult,
};
pub use results::{
    csv_header, EstimateSample, FailureRecord, ImuSample, MocapSample, ResultsRow, ResultsTable, RunMetadata,
    RunSummary,
};
pub use run::{calibrate, calibration_config, calibration_flight_config, run, wind_rmse};
