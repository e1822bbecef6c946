use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::texture::{hash_words, sample_wrapped};
use crate::imgcore::{CameraModel, Image, MaskedImage};
use crate::navfuse::PlanarPose;
use crate::{Error, Result};

/// Orientation of the top-view camera in the body frame (x forward, y left,
/// z up): image x to the right, image y backward, optical axis down.
pub fn body_from_topview() -> Matrix3<f64> {
    Matrix3::new(0.0, -1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0)
}

/// Orientation of the physical (tilted) camera in the body frame.
pub fn body_from_camera(cam: &CameraModel) -> Matrix3<f64> {
    body_from_topview() * cam.rect_rotation.transpose()
}

/// Camera placement in the world: `x_world = rotation * x_cam + center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub center: Vector3<f64>,
}

impl CameraPose {
    /// Pose of a camera rigidly mounted on the train.
    pub fn mounted(
        train: &PlanarPose,
        body_from_cam: &Matrix3<f64>,
        offset: &Vector3<f64>,
    ) -> Self {
        let r = train.rotation();
        CameraPose {
            rotation: r * body_from_cam,
            center: Vector3::new(train.x, train.y, 0.0) + r * offset,
        }
    }

    /// The odometry camera: mounted above the body origin at the mount height.
    pub fn odometry(train: &PlanarPose, cam: &CameraModel) -> Self {
        Self::mounted(
            train,
            &body_from_camera(cam),
            &Vector3::new(0.0, 0.0, cam.mount_height),
        )
    }
}

/// Renders the ground plane z = 0 covered by the tiled `texture`, one texel
/// per `world_scale` metres. Rays missing the plane are zero and masked.
///
/// `noise_sigma > 0` adds Gaussian noise drawn from a generator seeded by
/// `noise_seed`; the result is clamped to `[0, 1]`.
pub fn render_view(
    texture: &Image,
    world_scale: f64,
    pose: &CameraPose,
    cam: &CameraModel,
    noise_sigma: f64,
    noise_seed: u64,
) -> Result<MaskedImage> {
    cam.validate()?;
    if !(world_scale > 0.0) || !(noise_sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "world scale {world_scale} / noise {noise_sigma}"
        )));
    }
    let (w, h) = (cam.width, cam.height);
    let kinv = cam.intrinsics_inverse();
    let m = pose.rotation * kinv;
    let c = pose.center;
    let mut data = vec![0.0; w * h];
    let mut valid = vec![false; w * h];
    for v in 0..h {
        for u in 0..w {
            let d = m * Vector3::new(u as f64, v as f64, 1.0);
            if d.z >= -1e-12 {
                continue;
            }
            let s = -c.z / d.z;
            if s <= 0.0 {
                continue;
            }
            let gx = c.x + s * d.x;
            let gy = c.y + s * d.y;
            data[v * w + u] = sample_wrapped(texture, gx / world_scale, gy / world_scale);
            valid[v * w + u] = true;
        }
    }
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let normal =
            Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for (p, &ok) in data.iter_mut().zip(&valid) {
            let n = normal.sample(&mut rng);
            if ok {
                *p = (*p + n).clamp(0.0, 1.0);
            }
        }
    }
    MaskedImage::new(Image::new(w, h, data)?, valid)
}

/// Seed for the noise of frame `frame` of a sequence seeded with `seed`.
pub fn frame_seed(seed: u64, frame: u64) -> u64 {
    hash_words(&[seed, frame, 0xf4a3e])
}
