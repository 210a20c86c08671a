//! SE(3) pose algebra, trajectories and pose-error metrics.

mod pose;
pub mod rotation;
mod trajectory;

pub use pose::{compose, pose_error, relative_pose, Decomposed, Pose, PoseError, RigidTransform};
pub use rotation::{
    euler_to_matrix, matrix_to_euler, rotation_angle, so3_exp, so3_log, wrap_angle, EulerAngles,
};
pub use trajectory::{format_timed_pose, parse_timed_pose, TimedPose, Trajectory};
pub(crate) use trajectory::parse_floats;
