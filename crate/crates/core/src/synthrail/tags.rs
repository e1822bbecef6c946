use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::sequence::{GroundTruthRecord, TrajectorySpec};
use super::texture::hash_words;
use crate::imgcore::{CameraModel, PixelPoint};
use crate::navfuse::{tag_corners, CameraMount, PlanarPose, TagObservation, TagWorldPose};
use crate::{Error, Result};

/// Placement of trackside tags and the camera that reads them.
#[derive(Debug, Clone, PartialEq)]
pub struct TagLayout {
    pub spacing_m: f64,
    /// Offset to the left of the track centre line, metres.
    pub lateral_m: f64,
    pub height_m: f64,
    pub side_m: f64,
    /// Along-track distance window in which tags are read.
    pub view_min_m: f64,
    pub view_max_m: f64,
    pub corner_noise_px: f64,
    pub camera: CameraModel,
    pub mount: CameraMount,
}

/// Forward-looking camera turned `yaw` radians to the left, `height` metres
/// above the body origin.
pub fn forward_mount(yaw: f64, height: f64) -> CameraMount {
    let base = Matrix3::from_columns(&[-Vector3::y(), -Vector3::z(), Vector3::x()]);
    CameraMount {
        body_from_camera: Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).matrix() * base,
        offset: Vector3::new(0.0, 0.0, height),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurveyedTag {
    pub id: u32,
    pub world: TagWorldPose,
    pub side: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagSighting {
    pub frame: u64,
    pub observation: TagObservation,
}

/// Time at which the train has covered `s` metres of track.
fn time_at_length(spec: &TrajectorySpec, s: f64) -> Option<f64> {
    let (mut t, mut covered) = (0.0, 0.0);
    for seg in &spec.segments {
        let len = seg.speed.abs() * seg.duration;
        if covered + len >= s && seg.speed != 0.0 {
            return Some(t + (s - covered) / seg.speed.abs());
        }
        covered += len;
        t += seg.duration;
    }
    None
}

/// Tags every `spacing_m` metres of track, facing the approaching train.
pub fn place_tags(spec: &TrajectorySpec, layout: &TagLayout) -> Result<Vec<SurveyedTag>> {
    if !(layout.spacing_m > 0.0 && layout.side_m > 0.0 && layout.view_max_m > layout.view_min_m) {
        return Err(Error::InvalidParameter(format!("tag layout {layout:?}")));
    }
    let mut tags = Vec::new();
    let mut k = 1u32;
    while let Some(t) = time_at_length(spec, k as f64 * layout.spacing_m) {
        let p = spec.pose_at(t);
        let r = p.rotation();
        let (f, l, z) = (
            r.column(0).into_owned(),
            r.column(1).into_owned(),
            Vector3::z(),
        );
        let position = Vector3::new(p.x, p.y, 0.0) + l * layout.lateral_m + z * layout.height_m;
        let rot = Matrix3::from_columns(&[-l, -z, f]);
        tags.push(SurveyedTag {
            id: k,
            world: TagWorldPose::from_rotation(position, &rot),
            side: layout.side_m,
        });
        k += 1;
    }
    Ok(tags)
}

/// Noisy corner observations of every tag inside the viewing window, for
/// every frame of the ground truth.
pub fn gen_tag_sightings(
    truth: &[GroundTruthRecord],
    tags: &[SurveyedTag],
    layout: &TagLayout,
    seed: u64,
) -> Result<Vec<TagSighting>> {
    let cam = &layout.camera;
    cam.validate()?;
    let noise = Normal::new(0.0, layout.corner_noise_px)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut out = Vec::new();
    for gt in truth {
        let body: PlanarPose = gt.pose();
        let r_wb = body.rotation();
        let origin = Vector3::new(body.x, body.y, 0.0);
        let r_wc = r_wb * layout.mount.body_from_camera;
        let c = origin + r_wb * layout.mount.offset;
        for tag in tags {
            let ahead = (r_wb.transpose() * (tag.world.position - origin)).x;
            if ahead < layout.view_min_m || ahead > layout.view_max_m {
                continue;
            }
            let r_wt = tag.world.rotation();
            let projected: Option<Vec<PixelPoint>> = tag_corners(tag.side)
                .iter()
                .map(|p| {
                    let x = r_wc.transpose() * (r_wt * p + tag.world.position - c);
                    cam.project(&x).filter(|q| {
                        q.u >= 0.0
                            && q.v >= 0.0
                            && q.u <= cam.width as f64 - 1.0
                            && q.v <= cam.height as f64 - 1.0
                    })
                })
                .collect();
            let Some(pts) = projected else { continue };
            let mut rng =
                ChaCha8Rng::seed_from_u64(hash_words(&[seed, gt.frame, tag.id as u64, 0x7a9]));
            let corners: [PixelPoint; 4] = std::array::from_fn(|i| {
                PixelPoint::new(
                    pts[i].u + noise.sample(&mut rng),
                    pts[i].v + noise.sample(&mut rng),
                )
            });
            out.push(TagSighting {
                frame: gt.frame,
                observation: TagObservation {
                    t: gt.t,
                    tag_id: tag.id,
                    corners,
                    side: tag.side,
                },
            });
        }
    }
    Ok(out)
}
