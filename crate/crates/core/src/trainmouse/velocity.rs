use crate::imgcore::CameraModel;

/// Template displacement: integer match plus sub-pixel correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementMeasurement {
    pub x_p: i64,
    pub y_p: i64,
    pub dx: f64,
    pub dy: f64,
    pub n_contrib: usize,
    pub sigma_z_px: f64,
    pub keyframe_id: u64,
    /// `false` when no usable match could be made for this frame.
    pub valid: bool,
}

impl DisplacementMeasurement {
    /// `(Δx, Δy) = (x_p + δx, y_p + δy)`.
    pub fn total(&self) -> (f64, f64) {
        (self.x_p as f64 + self.dx, self.y_p as f64 + self.dy)
    }

    pub fn zero(keyframe_id: u64) -> Self {
        Self {
            x_p: 0,
            y_p: 0,
            dx: 0.0,
            dy: 0.0,
            n_contrib: 0,
            sigma_z_px: 0.0,
            keyframe_id,
            valid: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityEstimate {
    /// Forward velocity, m/s.
    pub v_l: f64,
    /// Sideways velocity, m/s.
    pub v_s: f64,
    /// 1-σ uncertainty of `v_l`, m/s.
    pub sigma_vz: f64,
}

/// Converts a per-frame displacement to metric velocity by similar
/// triangles: `v_l = L·p_y / (f·t_f) · Δy`, `v_s = L·p_x / (f·t_f) · Δx`.
///
/// The uncertainty is the standard error of the mean of the per-pixel
/// responses. Without any sub-pixel contributors the displacement is an
/// integer estimate and the uniform quantisation error `1/√12` px is used.
pub fn displacement_to_velocity(
    meas: &DisplacementMeasurement,
    cam: &CameraModel,
) -> VelocityEstimate {
    let (dx, dy) = meas.total();
    let scale_y = cam.mount_height * cam.pixel_pitch_y / (cam.focal_length * cam.frame_interval);
    let scale_x = cam.mount_height * cam.pixel_pitch_x / (cam.focal_length * cam.frame_interval);
    let sigma_px = if meas.n_contrib == 0 {
        1.0 / 12f64.sqrt()
    } else {
        meas.sigma_z_px / (meas.n_contrib as f64).sqrt()
    };
    VelocityEstimate {
        v_l: scale_y * dy,
        v_s: scale_x * dx,
        sigma_vz: scale_y * sigma_px,
    }
}
