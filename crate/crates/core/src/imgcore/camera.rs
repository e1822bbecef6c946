use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::{Error, Result};

/// A point in pixel coordinates (sub-pixel values allowed).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// Pinhole camera with mounting geometry and frame timing.
///
/// `rect_rotation` maps directions expressed in the rectified (top-view)
/// camera frame into the physical camera frame, so the rectifying
/// homography is `K · rect_rotationᵀ · K⁻¹`.
///
/// Camera frames follow the usual convention: x right, y down, z along the
/// optical axis. The top-view camera looks straight down with image y
/// pointing backwards, so forward motion shows up as positive image-y flow.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    /// Focal length, meters.
    pub focal_length: f64,
    /// Metric pixel pitch along x, meters/pixel.
    pub pixel_pitch_x: f64,
    /// Metric pixel pitch along y, meters/pixel.
    pub pixel_pitch_y: f64,
    pub principal_x: f64,
    pub principal_y: f64,
    pub width: usize,
    pub height: usize,
    /// Mounting height above the rail plane, meters.
    pub mount_height: f64,
    /// Inter-frame interval, seconds.
    pub frame_interval: f64,
    pub rect_rotation: Matrix3<f64>,
}

impl CameraModel {
    /// Camera with the principal point at the image centre.
    pub fn centered(
        width: usize,
        height: usize,
        focal_px: f64,
        mount_height: f64,
        frame_interval: f64,
        rect_rotation: Matrix3<f64>,
    ) -> Result<Self> {
        let pitch = 1e-5;
        let cam = Self {
            focal_length: focal_px * pitch,
            pixel_pitch_x: pitch,
            pixel_pitch_y: pitch,
            principal_x: (width as f64 - 1.0) / 2.0,
            principal_y: (height as f64 - 1.0) / 2.0,
            width,
            height,
            mount_height,
            frame_interval,
            rect_rotation,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("focal_length", self.focal_length),
            ("pixel_pitch_x", self.pixel_pitch_x),
            ("pixel_pitch_y", self.pixel_pitch_y),
            ("mount_height", self.mount_height),
            ("frame_interval", self.frame_interval),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidCamera(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.principal_x.is_finite() && self.principal_y.is_finite()) {
            return Err(Error::InvalidCamera(
                "principal point must be finite".into(),
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("sensor size must be non-zero".into()));
        }
        let r = &self.rect_rotation;
        let ortho_err = (r.transpose() * r - Matrix3::identity()).norm();
        if !(ortho_err <= 1e-9) || r.determinant() <= 0.0 {
            return Err(Error::InvalidCamera(format!(
                "rect_rotation is not a proper rotation (|RᵀR − I| = {ortho_err:e})"
            )));
        }
        Ok(())
    }

    /// Focal length in x pixels, `f / p_x`.
    pub fn fx(&self) -> f64 {
        self.focal_length / self.pixel_pitch_x
    }

    /// Focal length in y pixels, `f / p_y`.
    pub fn fy(&self) -> f64 {
        self.focal_length / self.pixel_pitch_y
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx(),
            0.0,
            self.principal_x,
            0.0,
            self.fy(),
            self.principal_y,
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn intrinsics_inverse(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx(),
            0.0,
            -self.principal_x / self.fx(),
            0.0,
            1.0 / self.fy(),
            -self.principal_y / self.fy(),
            0.0,
            0.0,
            1.0,
        )
    }

    /// Ray direction (z = 1) through a pixel.
    pub fn normalize(&self, p: PixelPoint) -> Vector3<f64> {
        Vector3::new(
            (p.u - self.principal_x) / self.fx(),
            (p.v - self.principal_y) / self.fy(),
            1.0,
        )
    }

    /// Projects a camera-frame direction; `None` when it lies in the
    /// principal plane.
    pub fn project(&self, d: &Vector3<f64>) -> Option<PixelPoint> {
        if d.z.abs() < 1e-300 {
            return None;
        }
        Some(PixelPoint::new(
            self.principal_x + self.fx() * d.x / d.z,
            self.principal_y + self.fy() * d.y / d.z,
        ))
    }

    /// Ground distance covered by one rectified pixel along x, meters.
    pub fn ground_per_px_x(&self) -> f64 {
        self.mount_height * self.pixel_pitch_x / self.focal_length
    }

    /// Ground distance covered by one rectified pixel along y, meters.
    pub fn ground_per_px_y(&self) -> f64 {
        self.mount_height * self.pixel_pitch_y / self.focal_length
    }
}

/// Rectifying rotation for a camera pitched forward by `pitch` radians from
/// looking straight down.
pub fn rotation_from_pitch(pitch: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Vector3::x_axis(), -pitch).matrix()
}

/// Removes a predicted rotation from an image point:
/// `l = Rᵀ·p`, `p′ = l / l_z`, re-projected to pixels.
pub fn compensate_rotation(
    p: PixelPoint,
    cam: &CameraModel,
    r_pred: &Matrix3<f64>,
) -> Result<PixelPoint> {
    let l = r_pred.transpose() * cam.normalize(p);
    if l.z <= 1e-6 {
        return Err(Error::DegeneratePoint(l.z));
    }
    Ok(PixelPoint::new(
        cam.principal_x + cam.fx() * l.x / l.z,
        cam.principal_y + cam.fy() * l.y / l.z,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cam() -> CameraModel {
        CameraModel::centered(640, 480, 1000.0, 2.0, 1.0 / 60.0, Matrix3::identity()).unwrap()
    }

    #[test]
    fn validation() {
        let mut c = cam();
        c.mount_height = -1.0;
        assert!(c.validate().is_err());
        let mut c = cam();
        c.rect_rotation[(0, 0)] = 1.1;
        assert!(c.validate().is_err());
        let mut c = cam();
        c.rect_rotation = -Matrix3::identity();
        assert!(c.validate().is_err());
    }

    #[test]
    fn identity_compensation() {
        let c = cam();
        let p = PixelPoint::new(12.5, 400.25);
        assert_eq!(compensate_rotation(p, &c, &Matrix3::identity()).unwrap(), p);
    }

    #[test]
    fn small_yaw_first_order() {
        let c = cam();
        let delta = 1e-3;
        let r = *Rotation3::from_axis_angle(&Vector3::y_axis(), delta).matrix();
        let p = PixelPoint::new(c.principal_x, c.principal_y);
        let q = compensate_rotation(p, &c, &r).unwrap();
        // tan(δ) expansion: u' = c_x − f_px·tan δ
        assert!((q.u - (p.u - c.fx() * delta)).abs() < c.fx() * delta.powi(3));
        assert!((q.v - p.v).abs() < 1e-12);
    }

    #[test]
    fn degenerate_point() {
        let c = cam();
        let r =
            *Rotation3::from_axis_angle(&Vector3::y_axis(), std::f64::consts::FRAC_PI_2).matrix();
        assert!(matches!(
            compensate_rotation(PixelPoint::new(c.principal_x, c.principal_y), &c, &r),
            Err(Error::DegeneratePoint(_))
        ));
    }

    #[test]
    fn axis_point_is_fixed() {
        // The image of the rotation axis is unchanged by the compensation.
        let c = cam();
        let axis = Vector3::new(0.1, -0.05, 1.0).normalize();
        let r = *Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), 0.02).matrix();
        let p = c.project(&axis).unwrap();
        let q = compensate_rotation(p, &c, &r).unwrap();
        assert!(p.distance(&q) < 1e-9);
    }

    proptest! {
        #[test]
        fn inverse_composition(u in 0.0f64..640.0, v in 0.0f64..480.0,
                               ax in -0.05f64..0.05, ay in -0.05f64..0.05, az in -0.05f64..0.05) {
            let c = cam();
            let r = *Rotation3::new(Vector3::new(ax, ay, az)).matrix();
            let p = PixelPoint::new(u, v);
            let q = compensate_rotation(p, &c, &r).unwrap();
            let back = compensate_rotation(q, &c, &r.transpose()).unwrap();
            prop_assert!(p.distance(&back) < 1e-9);
        }
    }
}
