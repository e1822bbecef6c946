//! Navigation filter: constant-velocity Kalman prediction, speed and heading
//! updates from the optical sensors, and absolute corrections from surveyed
//! tags.

mod kalman;
mod tag;
mod trajectory;

pub use kalman::{
    heading_measurement, kf_predict, kf_update_velocity, wrap_angle, HeadingMeasurement, NavState,
    ProcessNoise,
};
pub use tag::{
    apply_tag_correction, body_pose_covariance, body_pose_from_tag, tag_corners, tag_planar_pose,
    tag_pose_covariance, CameraMount, TagCorrection, TagObservation, TagRelativePose, TagWorldPose,
    TAG_GATE,
};
pub use trajectory::{integrate_pose, PlanarPose, Trajectory, TrajectoryPoint};
