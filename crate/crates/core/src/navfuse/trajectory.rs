use nalgebra::{Matrix3, Matrix4, Rotation3, Vector3};

use super::kalman::NavState;
use crate::{Error, Result};

/// Train pose on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl PlanarPose {
    pub fn rotation(&self) -> Matrix3<f64> {
        *Rotation3::from_axis_angle(&Vector3::z_axis(), self.heading).matrix()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub cov: Matrix4<f64>,
}

impl From<&NavState> for TrajectoryPoint {
    fn from(s: &NavState) -> Self {
        TrajectoryPoint {
            t: s.t,
            x: s.x,
            y: s.y,
            heading: s.heading,
            v: s.v,
            cov: s.cov,
        }
    }
}

/// Estimated trajectory with the travelled distance `Σ v·dt`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub path_length: f64,
}

/// Appends the state reached after `dt` seconds and accumulates the
/// distance travelled at its speed.
pub fn integrate_pose(traj: &mut Trajectory, state: &NavState, dt: f64) -> Result<()> {
    if let Some(last) = traj.points.last() {
        if state.t < last.t {
            return Err(Error::NonMonotonic {
                last: last.t,
                got: state.t,
            });
        }
    }
    if !(dt >= 0.0) {
        return Err(Error::InvalidParameter(format!("time step {dt}")));
    }
    traj.path_length += state.v.abs() * dt;
    traj.points.push(state.into());
    Ok(())
}
