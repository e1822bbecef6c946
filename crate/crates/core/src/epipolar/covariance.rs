use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use super::epipole::{flow_normal, FlowVector, NormalConvention};
use crate::imgcore::{CameraModel, PixelPoint};
use crate::{Error, Result};

/// Covariance of the planar (x, y) motion implied by the scatter of flow
/// lines around the epipole `x_e`, for a top-view displacement of
/// `delta_x_px` pixels.
pub fn planar_flow_covariance(
    flow: &[FlowVector],
    x_e: PixelPoint,
    delta_x_px: f64,
    cam: &CameraModel,
    conv: NormalConvention,
) -> Result<Matrix2<f64>> {
    if flow.is_empty() {
        return Err(Error::InsufficientFlow(0));
    }
    let s = delta_x_px * cam.pixel_pitch_x / cam.focal_length;
    let e = Vector2::new(x_e.u, x_e.v);
    let mut p = Matrix2::zeros();
    for f in flow {
        let n = flow_normal(f, conv);
        let r = n.dot(&(Vector2::new(f.start.u, f.start.v) - e));
        let dp = n * (s * r);
        p += dp * dp.transpose();
    }
    Ok(p / flow.len() as f64)
}

/// Frame-to-frame motion estimate from the structure-from-motion step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseDelta {
    pub rotation: Matrix3<f64>,
    pub t_dir: Vector3<f64>,
    pub epipole: PixelPoint,
    pub cov_xy: Matrix2<f64>,
    /// Standard deviation of the forward displacement, top-view pixels.
    pub sigma_z: f64,
}
