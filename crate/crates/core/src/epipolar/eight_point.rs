use nalgebra::{DMatrix, Matrix3, Vector2, Vector3, SVD};

use super::epipole::{FlowVector, MIN_FLOW};
use crate::imgcore::CameraModel;
use crate::{Error, Result};

/// Relative camera motion between two frames.
///
/// Points map as `x_{t+1} = rotation · x_t + translation`; `motion_dir` is
/// the unit displacement of the camera centre in frame-t coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativePose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub motion_dir: Vector3<f64>,
}

impl RelativePose {
    /// Builds the pose from a rotation and a camera displacement.
    pub fn from_motion(rotation: Matrix3<f64>, motion: Vector3<f64>) -> Self {
        let translation = -rotation * motion;
        RelativePose {
            rotation,
            translation,
            motion_dir: motion.normalize(),
        }
    }

    /// Prepends a known rotation: for flow whose end points were compensated
    /// by `r_pred`, the total motion is `r_pred` followed by `self`.
    pub fn after_rotation(&self, r_pred: &Matrix3<f64>) -> Self {
        let rotation = r_pred * self.rotation;
        let translation = r_pred * self.translation;
        let motion_dir = (-rotation.transpose() * translation).normalize();
        RelativePose {
            rotation,
            translation,
            motion_dir,
        }
    }
}

/// Similarity that moves the centroid to the origin and the mean distance to
/// sqrt(2).
fn hartley(points: &[Vector2<f64>]) -> Result<Matrix3<f64>> {
    let n = points.len() as f64;
    let c = points.iter().sum::<Vector2<f64>>() / n;
    let mean = points.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    if !(mean > 1e-15) {
        return Err(Error::DegenerateFlow("all points coincide".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean;
    Ok(Matrix3::new(
        s,
        0.0,
        -s * c.x,
        0.0,
        s,
        -s * c.y,
        0.0,
        0.0,
        1.0,
    ))
}

fn apply(t: &Matrix3<f64>, p: &Vector2<f64>) -> Vector3<f64> {
    t * Vector3::new(p.x, p.y, 1.0)
}

/// Essential matrix from normalised correspondences, projected onto the
/// essential manifold.
pub fn essential_matrix(flow: &[FlowVector], cam: &CameraModel) -> Result<Matrix3<f64>> {
    if flow.len() < MIN_FLOW {
        return Err(Error::InsufficientFlow(flow.len()));
    }
    let kinv = cam.intrinsics_inverse();
    let norm = |p: crate::imgcore::PixelPoint| {
        let v = kinv * Vector3::new(p.u, p.v, 1.0);
        Vector2::new(v.x / v.z, v.y / v.z)
    };
    let x1: Vec<Vector2<f64>> = flow.iter().map(|f| norm(f.start)).collect();
    let x2: Vec<Vector2<f64>> = flow.iter().map(|f| norm(f.end)).collect();
    let (t1, t2) = (hartley(&x1)?, hartley(&x2)?);
    let rows = flow.len().max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (p, q)) in x1.iter().zip(&x2).enumerate() {
        let (p, q) = (apply(&t1, p), apply(&t2, q));
        let r = [
            q.x * p.x,
            q.x * p.y,
            q.x,
            q.y * p.x,
            q.y * p.y,
            q.y,
            p.x,
            p.y,
            1.0,
        ];
        for (j, v) in r.iter().enumerate() {
            a[(i, j)] = *v;
        }
    }
    let svd = a.svd(false, true);
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s = &svd.singular_values;
    let (s_max, s_8) = (s[order[0]], s[order[7]]);
    if !(s_8 > 0.0) || s_max / s_8 > 1e12 {
        return Err(Error::DegenerateFlow(format!(
            "solution is not unique (singular value ratio {:e})",
            s_max / s_8
        )));
    }
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let e = vt.row(order[8]);
    let en = Matrix3::new(e[0], e[1], e[2], e[3], e[4], e[5], e[6], e[7], e[8]);
    let e = t2.transpose() * en * t1;
    let svd = SVD::new(e, true, true);
    let (u, vt) = (svd.u.expect("U"), svd.v_t.expect("V^T"));
    let mut sv = svd.singular_values;
    // Sort descending; nalgebra already does for 3x3 but make it explicit.
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    if sv[idx[1]] <= 1e-12 * sv[idx[0]] {
        return Err(Error::DegenerateFlow(
            "essential matrix has rank < 2".into(),
        ));
    }
    sv.fill(0.0);
    sv[idx[0]] = 1.0;
    sv[idx[1]] = 1.0;
    Ok(u * Matrix3::from_diagonal(&sv) * vt)
}

/// Midpoint triangulation; returns the depths in both views.
fn depths(
    x1: &Vector3<f64>,
    x2: &Vector3<f64>,
    r: &Matrix3<f64>,
    t: &Vector3<f64>,
) -> Option<(f64, f64)> {
    // Camera 2 centre and ray in frame 1.
    let c2 = -r.transpose() * t;
    let d1 = *x1;
    let d2 = r.transpose() * x2;
    let a = d1.dot(&d1);
    let b = d1.dot(&d2);
    let c = d2.dot(&d2);
    let det = a * c - b * b;
    if det.abs() < 1e-14 * a * c {
        return None;
    }
    let w = c2;
    let s = (c * d1.dot(&w) - b * d2.dot(&w)) / det;
    let u = (b * d1.dot(&w) - a * d2.dot(&w)) / det;
    let p = 0.5 * (d1 * s + (c2 + d2 * u));
    let q = r * p + t;
    Some((p.z, q.z))
}

/// Relative pose from at least eight correspondences.
///
/// The four decompositions of the essential matrix are scored by how many
/// points triangulate in front of both cameras.
pub fn eight_point_pose(flow: &[FlowVector], cam: &CameraModel) -> Result<RelativePose> {
    if flow.iter().all(|f| f.start == f.end) && flow.len() >= MIN_FLOW {
        return Err(Error::DegenerateFlow("zero motion".into()));
    }
    let e = essential_matrix(flow, cam)?;
    let svd = SVD::new(e, true, true);
    let mut u = svd.u.expect("U");
    let mut vt = svd.v_t.expect("V^T");
    // Singular values come out descending, so the null direction is last.
    if u.determinant() < 0.0 {
        u = -u;
    }
    if vt.determinant() < 0.0 {
        vt = -vt;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let t = u.column(2).into_owned();
    let candidates = [
        (u * w * vt, t),
        (u * w * vt, -t),
        (u * w.transpose() * vt, t),
        (u * w.transpose() * vt, -t),
    ];
    let kinv = cam.intrinsics_inverse();
    let rays: Vec<(Vector3<f64>, Vector3<f64>)> = flow
        .iter()
        .map(|f| {
            let a = kinv * Vector3::new(f.start.u, f.start.v, 1.0);
            let b = kinv * Vector3::new(f.end.u, f.end.v, 1.0);
            (a / a.z, b / b.z)
        })
        .collect();
    let votes: Vec<usize> = candidates
        .iter()
        .map(|(r, t)| {
            rays.iter()
                .filter(
                    |(a, b)| matches!(depths(a, b, r, t), Some((z1, z2)) if z1 > 0.0 && z2 > 0.0),
                )
                .count()
        })
        .collect();
    let best = *votes.iter().max().expect("four candidates");
    let winners: Vec<usize> = (0..4).filter(|&i| votes[i] == best).collect();
    if best == 0 || winners.len() > 1 {
        return Err(Error::AmbiguousPose(winners.len()));
    }
    let (r, t) = candidates[winners[0]];
    let motion = -r.transpose() * t;
    Ok(RelativePose {
        rotation: r,
        translation: t,
        motion_dir: motion.normalize(),
    })
}
