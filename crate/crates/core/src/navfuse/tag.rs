use nalgebra::{DMatrix, Matrix3, Matrix6, Rotation3, SMatrix, SVector, Vector3, Vector6, SVD};

use super::kalman::{joseph_update, NavState};
use super::trajectory::PlanarPose;
use crate::imgcore::{CameraModel, PixelPoint};
use crate::{Error, Result};

/// Largest accepted singular-value ratio of the tag homography system.
const MAX_CONDITION: f64 = 1e10;
/// Default Mahalanobis gate for tag corrections.
pub const TAG_GATE: f64 = 5.0;

/// Surveyed tag placement; angles are Z-Y-X Euler angles in radians.
///
/// Tag axes: x to the right and y down as seen by a viewer facing it, z into
/// the tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagWorldPose {
    pub position: Vector3<f64>,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl TagWorldPose {
    pub fn rotation(&self) -> Matrix3<f64> {
        *Rotation3::from_euler_angles(self.roll, self.pitch, self.yaw).matrix()
    }

    /// Euler angles of a rotation matrix.
    pub fn from_rotation(position: Vector3<f64>, r: &Matrix3<f64>) -> Self {
        let (roll, pitch, yaw) = Rotation3::from_matrix_unchecked(*r).euler_angles();
        TagWorldPose {
            position,
            yaw,
            pitch,
            roll,
        }
    }
}

/// One sighting: the four corners TL, TR, BR, BL in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagObservation {
    pub t: f64,
    pub tag_id: u32,
    pub corners: [PixelPoint; 4],
    /// Side length, metres.
    pub side: f64,
}

/// Tag pose in camera coordinates: `x_cam = rotation · x_tag + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagRelativePose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl TagRelativePose {
    /// Camera centre in tag coordinates.
    pub fn camera_in_tag(&self) -> Vector3<f64> {
        -self.rotation.transpose() * self.translation
    }
}

/// Tag corners in the tag plane, in TL, TR, BR, BL order.
pub fn tag_corners(side: f64) -> [Vector3<f64>; 4] {
    let h = side / 2.0;
    [
        Vector3::new(-h, -h, 0.0),
        Vector3::new(h, -h, 0.0),
        Vector3::new(h, h, 0.0),
        Vector3::new(-h, h, 0.0),
    ]
}

fn convex(pts: &[(f64, f64); 4]) -> bool {
    let mut sign = 0.0;
    for i in 0..4 {
        let (a, b, c) = (pts[i], pts[(i + 1) % 4], pts[(i + 2) % 4]);
        let cross = (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0);
        if cross == 0.0 || (sign != 0.0 && cross.signum() != sign) {
            return false;
        }
        sign = cross.signum();
    }
    true
}

/// Tag pose from the homography between the tag plane and the normalised
/// image.
pub fn tag_planar_pose(obs: &TagObservation, cam: &CameraModel) -> Result<TagRelativePose> {
    if !(obs.side > 0.0) || obs.corners.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidTag("non-finite corners or side".into()));
    }
    let kinv = cam.intrinsics_inverse();
    let img: Vec<(f64, f64)> = obs
        .corners
        .iter()
        .map(|c| {
            let n = kinv * Vector3::new(c.u, c.v, 1.0);
            (n.x / n.z, n.y / n.z)
        })
        .collect();
    // Condition both point sets.
    let (cx, cy) = (
        img.iter().map(|p| p.0).sum::<f64>() / 4.0,
        img.iter().map(|p| p.1).sum::<f64>() / 4.0,
    );
    let spread = img.iter().map(|p| (p.0 - cx).hypot(p.1 - cy)).sum::<f64>() / 4.0;
    if !(spread > 0.0) {
        return Err(Error::IllConditionedTag(f64::INFINITY));
    }
    let si = std::f64::consts::SQRT_2 / spread;
    let t_img = Matrix3::new(si, 0.0, -si * cx, 0.0, si, -si * cy, 0.0, 0.0, 1.0);
    let ss = 2.0 / obs.side;
    let t_tag = Matrix3::new(ss, 0.0, 0.0, 0.0, ss, 0.0, 0.0, 0.0, 1.0);
    let src = tag_corners(obs.side);
    let mut a = DMatrix::<f64>::zeros(9, 9);
    for i in 0..4 {
        let s = t_tag * Vector3::new(src[i].x, src[i].y, 1.0);
        let d = t_img * Vector3::new(img[i].0, img[i].1, 1.0);
        let (x, y, u, v) = (s.x, s.y, d.x, d.y);
        let r1 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r2 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for j in 0..9 {
            a[(2 * i, j)] = r1[j];
            a[(2 * i + 1, j)] = r2[j];
        }
    }
    let svd = a.svd(false, true);
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let cond = svd.singular_values[order[0]] / svd.singular_values[order[7]];
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditionedTag(cond));
    }
    let pts: [(f64, f64); 4] = [
        obs.corners[0],
        obs.corners[1],
        obs.corners[2],
        obs.corners[3],
    ]
    .map(|c| (c.u, c.v));
    if !convex(&pts) {
        return Err(Error::InvalidTag(
            "corners do not form a convex quadrilateral".into(),
        ));
    }
    let h = svd.v_t.as_ref().expect("V^T").row(order[8]).transpose();
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_img_inv = t_img.try_inverse().expect("similarity");
    let hm = t_img_inv * hn * t_tag;
    let (h1, h2, h3) = (
        hm.column(0).into_owned(),
        hm.column(1).into_owned(),
        hm.column(2).into_owned(),
    );
    let mut lambda = 2.0 / (h1.norm() + h2.norm());
    if h3.z * lambda < 0.0 {
        lambda = -lambda;
    }
    let r1 = h1 * lambda;
    let r2 = h2 * lambda;
    let r = Matrix3::from_columns(&[r1, r2, r1.cross(&r2)]);
    let svd = SVD::new(r, true, true);
    let (u, vt) = (svd.u.expect("U"), svd.v_t.expect("V^T"));
    let mut rot = u * vt;
    if rot.determinant() < 0.0 {
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        rot = u2 * vt;
    }
    let init = TagRelativePose {
        rotation: rot,
        translation: h3 * lambda,
    };
    // Refine both members of the planar ambiguity and keep the better fit.
    let a = refine(obs, cam, init);
    let b = refine(obs, cam, mirrored(&init));
    let pick = match (a, b) {
        (Some(a), Some(b)) => {
            if b.1 < a.1 {
                b
            } else {
                a
            }
        }
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => (init, f64::INFINITY),
    };
    Ok(pick.0)
}

/// The pose with the tag normal reflected about the line of sight.
fn mirrored(p: &TagRelativePose) -> TagRelativePose {
    let v = p.translation.normalize();
    let n = p.rotation.column(2).into_owned();
    let m = 2.0 * n.dot(&v) * v - n;
    let turn = Rotation3::rotation_between(&n, &m).map_or(Matrix3::identity(), |r| *r.matrix());
    TagRelativePose {
        rotation: turn * p.rotation,
        translation: p.translation,
    }
}

fn perturb(p: &TagRelativePose, d: &Vector6<f64>) -> TagRelativePose {
    let w = Vector3::new(d[0], d[1], d[2]);
    TagRelativePose {
        rotation: p.rotation * Rotation3::new(w).matrix(),
        translation: p.translation + Vector3::new(d[3], d[4], d[5]),
    }
}

/// Corner reprojection residuals in pixels; `None` behind the camera.
fn residuals(
    obs: &TagObservation,
    cam: &CameraModel,
    p: &TagRelativePose,
) -> Option<SVector<f64, 8>> {
    let mut r = SVector::<f64, 8>::zeros();
    for (i, c) in tag_corners(obs.side).iter().enumerate() {
        let x = p.rotation * c + p.translation;
        if !(x.z > 0.0) {
            return None;
        }
        let q = cam.project(&x)?;
        r[2 * i] = q.u - obs.corners[i].u;
        r[2 * i + 1] = q.v - obs.corners[i].v;
    }
    Some(r)
}

fn jacobian(
    obs: &TagObservation,
    cam: &CameraModel,
    p: &TagRelativePose,
) -> Option<SMatrix<f64, 8, 6>> {
    let scale = p.translation.norm().max(1e-3);
    let mut j = SMatrix::<f64, 8, 6>::zeros();
    for k in 0..6 {
        let h = if k < 3 { 1e-6 } else { 1e-6 * scale };
        let mut d = Vector6::zeros();
        d[k] = h;
        let plus = residuals(obs, cam, &perturb(p, &d))?;
        let minus = residuals(obs, cam, &perturb(p, &-d))?;
        j.set_column(k, &((plus - minus) / (2.0 * h)));
    }
    Some(j)
}

/// Gauss-Newton on the reprojection error; returns the pose and its squared
/// residual.
fn refine(
    obs: &TagObservation,
    cam: &CameraModel,
    mut p: TagRelativePose,
) -> Option<(TagRelativePose, f64)> {
    let mut cost = residuals(obs, cam, &p)?.norm_squared();
    for _ in 0..50 {
        let r = residuals(obs, cam, &p)?;
        let j = jacobian(obs, cam, &p)?;
        let step = (j.transpose() * j).try_inverse()? * (j.transpose() * r);
        let mut lambda = 1.0;
        let mut improved = false;
        while lambda > 1e-4 {
            let cand = perturb(&p, &(-lambda * step));
            if let Some(c) = residuals(obs, cam, &cand).map(|r| r.norm_squared()) {
                if c <= cost {
                    p = cand;
                    improved = cost - c > 1e-18 * (1.0 + cost);
                    cost = c;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Some((p, cost))
}

/// Covariance of the right-multiplied rotation increment and translation of
/// a tag pose, for isotropic corner noise `sigma_px`.
pub fn tag_pose_covariance(
    obs: &TagObservation,
    cam: &CameraModel,
    p: &TagRelativePose,
    sigma_px: f64,
) -> Result<Matrix6<f64>> {
    let j =
        jacobian(obs, cam, p).ok_or_else(|| Error::InvalidTag("tag behind the camera".into()))?;
    let info: Matrix6<f64> = j.transpose() * j;
    let inv = info
        .try_inverse()
        .ok_or(Error::IllConditionedTag(f64::INFINITY))?;
    Ok(inv * sigma_px * sigma_px)
}

/// Covariance of the (x, y, heading) train pose derived from a tag pose with
/// covariance `cov`.
pub fn body_pose_covariance(
    world: &TagWorldPose,
    rel: &TagRelativePose,
    mount: &CameraMount,
    cov: &Matrix6<f64>,
) -> Matrix3<f64> {
    let mut j = SMatrix::<f64, 3, 6>::zeros();
    for k in 0..6 {
        let h = if k < 3 {
            1e-7
        } else {
            1e-7 * rel.translation.norm().max(1e-3)
        };
        let mut d = Vector6::zeros();
        d[k] = h;
        let a = body_pose_from_tag(world, &perturb(rel, &d), mount);
        let b = body_pose_from_tag(world, &perturb(rel, &-d), mount);
        let dh = super::kalman::wrap_angle(a.heading - b.heading);
        j.set_column(k, &(Vector3::new(a.x - b.x, a.y - b.y, dh) / (2.0 * h)));
    }
    let c = j * cov * j.transpose();
    (c + c.transpose()) * 0.5
}

/// Rigid camera mounting on the train body (x forward, y left, z up).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraMount {
    pub body_from_camera: Matrix3<f64>,
    pub offset: Vector3<f64>,
}

/// Train pose implied by a tag sighting.
pub fn body_pose_from_tag(
    world: &TagWorldPose,
    rel: &TagRelativePose,
    mount: &CameraMount,
) -> PlanarPose {
    let r_wc = world.rotation() * rel.rotation.transpose();
    let c = world.position - r_wc * rel.translation;
    let r_wb = r_wc * mount.body_from_camera.transpose();
    let p = c - r_wb * mount.offset;
    PlanarPose {
        x: p.x,
        y: p.y,
        heading: r_wb[(1, 0)].atan2(r_wb[(0, 0)]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagCorrection {
    pub state: NavState,
    /// False when the observation failed the Mahalanobis gate.
    pub applied: bool,
    pub mahalanobis: f64,
}

/// Corrects position and heading with a tag-derived pose measured at the
/// state's time. `noise` is the (x, y, heading) measurement covariance.
pub fn apply_tag_correction(
    state: &NavState,
    t: f64,
    measured: &PlanarPose,
    noise: &Matrix3<f64>,
    gate: f64,
) -> Result<TagCorrection> {
    if t < state.t - 1e-9 {
        return Err(Error::NonMonotonic {
            last: state.t,
            got: t,
        });
    }
    if t > state.t + 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "tag at t = {t} is ahead of the state at t = {}",
            state.t
        )));
    }
    let sym = (noise - noise.transpose()).norm() <= 1e-12 * noise.norm();
    if !sym || noise.iter().any(|v| !v.is_finite()) || noise.symmetric_eigenvalues().min() < 0.0 {
        return Err(Error::InvalidMeasurement(
            "tag noise is not a covariance".into(),
        ));
    }
    let r = DMatrix::from_column_slice(3, 3, noise.as_slice());
    let (updated, d2) = joseph_update(
        state,
        &[0, 1, 2],
        &[measured.x, measured.y, measured.heading],
        &r,
    )?;
    let d = d2.max(0.0).sqrt();
    if d > gate {
        return Ok(TagCorrection {
            state: *state,
            applied: false,
            mahalanobis: d,
        });
    }
    Ok(TagCorrection {
        state: updated,
        applied: true,
        mahalanobis: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix4;

    fn cam() -> CameraModel {
        CameraModel::centered(640, 480, 1000.0, 2.0, 0.1, Matrix3::identity()).unwrap()
    }

    fn observe(rel: &TagRelativePose, side: f64, cam: &CameraModel) -> TagObservation {
        let corners =
            tag_corners(side).map(|p| cam.project(&(rel.rotation * p + rel.translation)).unwrap());
        TagObservation {
            t: 0.0,
            tag_id: 1,
            corners,
            side,
        }
    }

    #[test]
    fn fronto_parallel_tag() {
        let cam = cam();
        let truth = TagRelativePose {
            rotation: Matrix3::identity(),
            translation: Vector3::new(0.0, 0.0, 2.0),
        };
        let obs = observe(&truth, 0.2, &cam);
        assert!((obs.corners[1].u - obs.corners[0].u - 100.0).abs() < 1e-9);
        let est = tag_planar_pose(&obs, &cam).unwrap();
        assert!((est.translation - truth.translation).norm() < 1e-6);
        assert!((est.rotation - truth.rotation).norm() < 1e-6);
    }

    #[test]
    fn oblique_tag() {
        let cam = cam();
        let rot = *Rotation3::from_euler_angles(0.1, -0.4, 0.05).matrix();
        let truth = TagRelativePose {
            rotation: rot,
            translation: Vector3::new(0.3, -0.1, 3.0),
        };
        let est = tag_planar_pose(&observe(&truth, 0.5, &cam), &cam).unwrap();
        assert!((est.translation - truth.translation).norm() < 1e-6);
        assert!((est.rotation - rot).norm() < 1e-6);
    }

    #[test]
    fn bad_corners() {
        let cam = cam();
        let line = [0.0, 10.0, 20.0, 30.0].map(|k| PixelPoint::new(100.0 + k, 100.0 + 2.0 * k));
        let obs = TagObservation {
            t: 0.0,
            tag_id: 0,
            corners: line,
            side: 0.2,
        };
        assert!(matches!(
            tag_planar_pose(&obs, &cam),
            Err(Error::IllConditionedTag(_))
        ));
        let bowtie = [
            (100.0, 100.0),
            (200.0, 200.0),
            (200.0, 100.0),
            (100.0, 200.0),
        ]
        .map(|(u, v)| PixelPoint::new(u, v));
        let obs = TagObservation {
            t: 0.0,
            tag_id: 0,
            corners: bowtie,
            side: 0.2,
        };
        assert!(matches!(
            tag_planar_pose(&obs, &cam),
            Err(Error::InvalidTag(_))
        ));
    }

    fn state() -> NavState {
        NavState {
            t: 1.0,
            x: 10.0,
            y: -2.0,
            heading: 0.2,
            v: 5.0,
            cov: Matrix4::identity() * 0.01,
        }
    }

    #[test]
    fn exact_observation_keeps_mean() {
        let s = state();
        let m = PlanarPose {
            x: s.x,
            y: s.y,
            heading: s.heading,
        };
        let c = apply_tag_correction(&s, 1.0, &m, &(Matrix3::identity() * 1e-4), TAG_GATE).unwrap();
        assert!(c.applied);
        assert!((c.state.mean() - s.mean()).norm() < 1e-12);
        assert!(c.state.cov[(0, 0)] < s.cov[(0, 0)]);
    }

    #[test]
    fn outlier_is_gated() {
        let s = state();
        let m = PlanarPose {
            x: s.x + 10.0,
            y: s.y,
            heading: s.heading,
        };
        let c = apply_tag_correction(&s, 1.0, &m, &(Matrix3::identity() * 1e-4), TAG_GATE).unwrap();
        assert!(!c.applied);
        assert_eq!(c.state, s);
        assert!(matches!(
            apply_tag_correction(&s, 0.5, &m, &Matrix3::identity(), TAG_GATE),
            Err(Error::NonMonotonic { .. })
        ));
    }

    #[test]
    fn pose_chain_round_trip() {
        let world = TagWorldPose {
            position: Vector3::new(50.0, 3.0, 2.5),
            yaw: 0.1,
            pitch: 0.0,
            roll: -1.2,
        };
        let mount = CameraMount {
            body_from_camera: Matrix3::from_columns(&[-Vector3::y(), -Vector3::z(), Vector3::x()]),
            offset: Vector3::new(1.0, 0.0, 2.0),
        };
        let body = PlanarPose {
            x: 42.0,
            y: 1.5,
            heading: 0.05,
        };
        let r_wb = body.rotation();
        let r_wc = r_wb * mount.body_from_camera;
        let c = Vector3::new(body.x, body.y, 0.0) + r_wb * mount.offset;
        let rel = TagRelativePose {
            rotation: r_wc.transpose() * world.rotation(),
            translation: r_wc.transpose() * (world.position - c),
        };
        let back = body_pose_from_tag(&world, &rel, &mount);
        assert!((back.x - body.x).abs() < 1e-9 && (back.y - body.y).abs() < 1e-9);
        assert!((back.heading - body.heading).abs() < 1e-12);
        let w2 = TagWorldPose::from_rotation(world.position, &world.rotation());
        assert!((w2.rotation() - world.rotation()).norm() < 1e-12);
    }

    #[test]
    fn consistent_noise_is_rarely_gated() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let n01 = Normal::new(0.0, 1.0).unwrap();
        let (sp, sr) = ([0.3, 0.3, 0.01], [0.03, 0.03, 0.003]);
        let mut gated = 0;
        for _ in 0..4000 {
            let mut s = state();
            s.cov = Matrix4::from_diagonal(&nalgebra::Vector4::new(
                sp[0] * sp[0],
                sp[1] * sp[1],
                sp[2] * sp[2],
                1.0,
            ));
            let truth = PlanarPose {
                x: s.x,
                y: s.y,
                heading: s.heading,
            };
            s.x += sp[0] * n01.sample(&mut rng);
            s.y += sp[1] * n01.sample(&mut rng);
            s.heading += sp[2] * n01.sample(&mut rng);
            let m = PlanarPose {
                x: truth.x + sr[0] * n01.sample(&mut rng),
                y: truth.y + sr[1] * n01.sample(&mut rng),
                heading: truth.heading + sr[2] * n01.sample(&mut rng),
            };
            let r =
                Matrix3::from_diagonal(&Vector3::new(sr[0] * sr[0], sr[1] * sr[1], sr[2] * sr[2]));
            if !apply_tag_correction(&s, 1.0, &m, &r, TAG_GATE)
                .unwrap()
                .applied
            {
                gated += 1;
            }
        }
        assert!(gated < 40, "{gated}");
    }

    #[test]
    fn pose_covariance_matches_scatter() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let cam = cam();
        let rot = *Rotation3::from_euler_angles(0.05, 0.9, -0.1).matrix();
        let truth = TagRelativePose {
            rotation: rot,
            translation: Vector3::new(-0.4, 0.2, 4.0),
        };
        let clean = observe(&truth, 0.6, &cam);
        let cov = tag_pose_covariance(&clean, &cam, &truth, 0.5).unwrap();
        let inv = cov.try_inverse().unwrap();
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 400;
        let mut total = 0.0;
        for _ in 0..n {
            let mut obs = clean;
            for c in obs.corners.iter_mut() {
                c.u += noise.sample(&mut rng);
                c.v += noise.sample(&mut rng);
            }
            let est = tag_planar_pose(&obs, &cam).unwrap();
            let w = Rotation3::from_matrix_unchecked(rot.transpose() * est.rotation).scaled_axis();
            let dt = est.translation - truth.translation;
            let d = Vector6::new(w.x, w.y, w.z, dt.x, dt.y, dt.z);
            total += (d.transpose() * inv * d)[0];
        }
        // Six degrees of freedom.
        let mean = total / n as f64;
        assert!((4.5..7.5).contains(&mean), "{mean}");
    }
}
