use nalgebra::{Matrix3, Vector3};

use super::CameraModel;
use crate::{Error, Result};

/// A planar projective transform normalised so that `h[2][2] = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let h22 = m[(2, 2)];
        if !h22.is_finite() || h22.abs() < 1e-12 {
            return Err(Error::SingularHomography(h22));
        }
        let m = m / h22;
        let det = m.determinant();
        if !(det.abs() > 1e-12) {
            return Err(Error::SingularHomography(det));
        }
        Ok(Self { m })
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0),
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self
            .m
            .try_inverse()
            .ok_or(Error::SingularHomography(self.m.determinant()))?;
        Self::from_matrix(inv)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Self> {
        Self::from_matrix(self.m * other.m)
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let p = self.m * Vector3::new(x, y, 1.0);
        if p.z.abs() < 1e-300 {
            return None;
        }
        Some((p.x / p.z, p.y / p.z))
    }
}

/// Rectifying homography `K · R_rectᵀ · K⁻¹`.
///
/// The camera does not move between the physical and the top-view frame, so
/// the plane-induced term vanishes and only the rotation remains.
pub fn build_rectifying_homography(cam: &CameraModel) -> Result<Homography> {
    cam.validate()?;
    let m = cam.rect_rotation.transpose();
    let (fx, fy, cx, cy) = (cam.fx(), cam.fy(), cam.principal_x, cam.principal_y);
    // Expanded product, arranged so the identity rotation maps to the exact
    // identity matrix.
    let h = Matrix3::new(
        (fx * m[(0, 0)] + cx * m[(2, 0)]) / fx,
        (fx * m[(0, 1)] + cx * m[(2, 1)]) / fy,
        fx * m[(0, 2)] - cx * m[(0, 0)] - (fx / fy) * cy * m[(0, 1)] + cx * m[(2, 2)]
            - cx * cx * m[(2, 0)] / fx
            - cx * cy * m[(2, 1)] / fy,
        (fy * m[(1, 0)] + cy * m[(2, 0)]) / fx,
        (fy * m[(1, 1)] + cy * m[(2, 1)]) / fy,
        fy * m[(1, 2)] - (fy / fx) * cx * m[(1, 0)] - cy * m[(1, 1)] + cy * m[(2, 2)]
            - cy * cx * m[(2, 0)] / fx
            - cy * cy * m[(2, 1)] / fy,
        m[(2, 0)] / fx,
        m[(2, 1)] / fy,
        m[(2, 2)] - cx * m[(2, 0)] / fx - cy * m[(2, 1)] / fy,
    );
    Homography::from_matrix(h)
}
