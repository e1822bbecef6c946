use nalgebra::Vector2;

use super::render::{frame_seed, render_view, CameraPose};
use crate::imgcore::{CameraModel, Image, MaskedImage};
use crate::navfuse::PlanarPose;
use crate::{Error, Result};

/// Constant speed and yaw rate over `duration` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub duration: f64,
    pub speed: f64,
    pub yaw_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpec {
    pub segments: Vec<Segment>,
    pub frame_rate: f64,
    pub camera: CameraModel,
    /// Standard deviation of additive image noise, intensity units.
    pub noise: f64,
    pub seed: u64,
    /// Ground size of one texel, metres.
    pub world_scale: f64,
    pub initial: PlanarPose,
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        if !(self.frame_rate > 0.0) || !self.frame_rate.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "frame rate {}",
                self.frame_rate
            )));
        }
        let tf = 1.0 / self.frame_rate;
        if (self.camera.frame_interval - tf).abs() > 1e-9 * tf {
            return Err(Error::InvalidParameter(format!(
                "camera frame interval {} does not match frame rate {}",
                self.camera.frame_interval, self.frame_rate
            )));
        }
        if self.segments.is_empty() {
            return Err(Error::InvalidParameter("trajectory has no segments".into()));
        }
        for s in &self.segments {
            if !(s.duration > 0.0) || !s.speed.is_finite() || !s.yaw_rate.is_finite() {
                return Err(Error::InvalidParameter(format!("bad segment {s:?}")));
            }
        }
        if !(self.world_scale > 0.0) || !(self.noise >= 0.0) {
            return Err(Error::InvalidParameter("world scale / noise".into()));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn frame_count(&self) -> usize {
        (self.duration() * self.frame_rate + 1e-9).floor() as usize + 1
    }

    /// Segment active at time `t` (the last one past the end).
    fn segment_at(&self, t: f64) -> &Segment {
        let mut start = 0.0;
        for s in &self.segments {
            if t < start + s.duration {
                return s;
            }
            start += s.duration;
        }
        self.segments.last().expect("validated non-empty")
    }

    /// Exact pose at time `t`, integrating the piecewise arcs.
    pub fn pose_at(&self, t: f64) -> PlanarPose {
        let mut p = self.initial;
        let mut left = t;
        for (i, s) in self.segments.iter().enumerate() {
            let last = i + 1 == self.segments.len();
            let tau = if last { left } else { left.min(s.duration) };
            p = advance(p, s.speed, s.yaw_rate, tau);
            left -= tau;
            if left <= 0.0 {
                break;
            }
        }
        p
    }
}

/// Moves along an arc of constant speed and yaw rate for `tau` seconds.
pub fn advance(p: PlanarPose, speed: f64, yaw_rate: f64, tau: f64) -> PlanarPose {
    let h1 = p.heading + yaw_rate * tau;
    let (dx, dy) = if (yaw_rate * tau).abs() < 1e-9 {
        let hm = p.heading + 0.5 * yaw_rate * tau;
        (speed * tau * hm.cos(), speed * tau * hm.sin())
    } else {
        let r = speed / yaw_rate;
        (
            r * (h1.sin() - p.heading.sin()),
            r * (p.heading.cos() - h1.cos()),
        )
    };
    PlanarPose {
        x: p.x + dx,
        y: p.y + dy,
        heading: h1,
    }
}

/// Ground truth for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthRecord {
    pub frame: u64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    /// Forward and leftward speed in the body frame, m/s.
    pub v_l: f64,
    pub v_s: f64,
    /// Displacement of the ground under the camera since the previous
    /// frame, top-view pixels (x: leftward motion, y: forward motion).
    pub dx_px: f64,
    pub dy_px: f64,
    /// The per-frame displacement exceeds half the frame height.
    pub aliasing: bool,
}

impl GroundTruthRecord {
    pub fn pose(&self) -> PlanarPose {
        PlanarPose {
            x: self.x,
            y: self.y,
            heading: self.heading,
        }
    }
}

/// A rendered sequence; frames are produced on demand.
#[derive(Debug, Clone)]
pub struct SyntheticSequence<'a> {
    pub spec: TrajectorySpec,
    pub texture: &'a Image,
    pub truth: Vec<GroundTruthRecord>,
}

impl SyntheticSequence<'_> {
    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn frame(&self, k: usize) -> Result<MaskedImage> {
        let gt = self
            .truth
            .get(k)
            .ok_or_else(|| Error::InvalidParameter(format!("frame {k} out of range")))?;
        let cam = &self.spec.camera;
        render_view(
            self.texture,
            self.spec.world_scale,
            &CameraPose::odometry(&gt.pose(), cam),
            cam,
            self.spec.noise,
            frame_seed(self.spec.seed, k as u64),
        )
    }
}

/// Builds the ground truth of a trajectory over a texture.
pub fn gen_sequence<'a>(
    spec: &TrajectorySpec,
    texture: &'a Image,
) -> Result<SyntheticSequence<'a>> {
    spec.validate()?;
    let tf = 1.0 / spec.frame_rate;
    let cam = &spec.camera;
    let n = spec.frame_count();
    let mut truth = Vec::with_capacity(n);
    let mut prev = spec.pose_at(0.0);
    for k in 0..n {
        let t = k as f64 * tf;
        let p = spec.pose_at(t);
        let seg = spec.segment_at(t);
        let d = if k == 0 {
            Vector2::zeros()
        } else {
            let r = prev.rotation().transpose();
            let w = r * nalgebra::Vector3::new(p.x - prev.x, p.y - prev.y, 0.0);
            Vector2::new(w.y / cam.ground_per_px_x(), w.x / cam.ground_per_px_y())
        };
        truth.push(GroundTruthRecord {
            frame: k as u64,
            t,
            x: p.x,
            y: p.y,
            heading: p.heading,
            v_l: seg.speed,
            v_s: 0.0,
            dx_px: d.x,
            dy_px: d.y,
            aliasing: d.norm() > cam.height as f64 / 2.0,
        });
        prev = p;
    }
    Ok(SyntheticSequence {
        spec: spec.clone(),
        texture,
        truth,
    })
}
