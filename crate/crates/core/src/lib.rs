//! Multirotor flight simulation with aerodynamic wrenches, motor lag,
//! sensors and wind, plus an unscented Kalman filter that estimates wind
//! from the vehicle's response to drag.
//!
//! The quickest entry point is [`harness::run`] on a bundled scenario:
//!
//! ```
//! use rotorsim::harness::{run, scenarios};
//!
//! let mut cfg = scenarios::scenario("circle").unwrap();
//! cfg.duration = 1.0;
//! let table = run(&cfg).unwrap();
//! assert!(!table.failed());
//! ```
//!
//! The world frame is z-up; quaternions rotate body vectors into the world
//! frame. Units are SI throughout, with rotor speeds in rad/s.

pub mod actuators;
pub mod aero;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod integrator;
pub mod math;
pub mod params;
pub mod sensors;
pub mod state;
pub mod wind;

pub use error::{Error, Result};
