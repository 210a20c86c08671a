//! Pose estimation for a magnetically actuated capsule robot by recurrent
//! fusion of a 50 Hz magnetic localization stream and a 25 Hz visual
//! odometry stream.
//!
//! The math core ([`geometry`], [`linalg`], [`neural`]) is generic over the
//! scalar type; the aliases below fix it to `f64`, which every pipeline stage
//! uses.

pub mod align;
pub mod config;
pub mod error;
pub mod evalbench;
pub mod fusenet;
pub mod geometry;
pub mod linalg;
pub mod magloc;
pub mod neural;
pub mod pipeline;
pub mod scalar;
pub mod sim;

pub use config::{Profile, RunConfig};
pub use error::{Error, Result};
pub use scalar::Real;

pub type Vec3 = linalg::Vec3<f64>;
pub type Mat3 = linalg::Mat3<f64>;
pub type Pose = geometry::Pose<f64>;
pub type RigidTransform = geometry::RigidTransform<f64>;
pub type Trajectory = geometry::Trajectory<f64>;
pub type TimedPose = geometry::TimedPose<f64>;
pub type Matrix = neural::Matrix<f64>;
pub type LstmWeights = neural::LstmWeights<f64>;
pub type LstmState = neural::LstmState<f64>;
