//! Reference trajectories and the geometric tracking controller.

mod se3;
mod trajectory;

pub use se3::{ControlOutput, GainSet, Se3Controller};
pub use trajectory::{FlatOutput, Trajectory};
