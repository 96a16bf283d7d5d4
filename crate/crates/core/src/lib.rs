//! Force-feedback teleoperation middleware: UR3 kinematics, operator frame
//! mapping, FSR force chain, simulated gripper contact, board wire protocol,
//! the control-loop server and an imitation-learning dataset recorder.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod batch;
pub mod config;
pub mod dataset;
pub mod frames;
pub mod gripper;
pub mod haptics;
pub mod kinematics;
pub mod server;
pub mod session;
pub mod wire;

pub use config::Config;
