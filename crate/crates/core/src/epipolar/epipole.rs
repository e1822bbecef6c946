use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2, Vector3};

use super::matching::MatchCandidateSet;
use crate::imgcore::{compensate_rotation, CameraModel, PixelPoint};
use crate::{Error, Result};

/// Fewest flow vectors a pose can be estimated from.
pub const MIN_FLOW: usize = 8;

/// A start/end point pair between two frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowVector {
    pub start: PixelPoint,
    pub end: PixelPoint,
}

impl FlowVector {
    pub fn new(start: PixelPoint, end: PixelPoint) -> Self {
        Self { start, end }
    }

    pub fn delta(&self) -> Vector2<f64> {
        Vector2::new(self.end.u - self.start.u, self.end.v - self.start.v)
    }
}

/// Predicted focus of expansion (or contraction) of the translational flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpipolePrediction {
    /// Image position; meaningless when `at_infinity` is set.
    pub point: PixelPoint,
    /// The motion is parallel to the image plane: flow lines are parallel.
    pub at_infinity: bool,
    /// Unit image direction of the flow when `at_infinity`.
    pub direction: Vector2<f64>,
    /// The camera moves towards the scene: flow points away from the epipole.
    pub expanding: bool,
}

/// Epipole of a camera moving by `motion` (frame-t camera coordinates).
pub fn predict_epipole(motion: &Vector3<f64>, cam: &CameraModel) -> Result<EpipolePrediction> {
    let n = motion.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::NoEpipole);
    }
    let m = motion / n;
    if m.z.abs() < 1e-9 {
        let d = Vector2::new(-m.x * cam.fx(), -m.y * cam.fy());
        return Ok(EpipolePrediction {
            point: PixelPoint::new(f64::NAN, f64::NAN),
            at_infinity: true,
            direction: d.normalize(),
            expanding: false,
        });
    }
    Ok(EpipolePrediction {
        point: PixelPoint::new(
            cam.principal_x + cam.fx() * m.x / m.z,
            cam.principal_y + cam.fy() * m.y / m.z,
        ),
        at_infinity: false,
        direction: Vector2::zeros(),
        expanding: m.z > 0.0,
    })
}

/// Epipole of planar ground motion: `t_x` to the right and `t_z` forward
/// along the ground, as measured by the correlation unit. The row follows
/// from the rectifying rotation.
pub fn predict_epipole_planar(t_x: f64, t_z: f64, cam: &CameraModel) -> Result<EpipolePrediction> {
    // Top-view frame: x right, y backward, z down.
    let rect = Vector3::new(t_x, -t_z, 0.0);
    predict_epipole(&(cam.rect_rotation * rect), cam)
}

/// Camera motion implied by a top-view displacement of `(dx, dy)` pixels.
pub fn motion_from_displacement(dx: f64, dy: f64, cam: &CameraModel) -> Vector3<f64> {
    cam.rect_rotation
        * Vector3::new(
            -dx * cam.ground_per_px_x(),
            -dy * cam.ground_per_px_y(),
            0.0,
        )
}

/// Distance of a compensated end point from the epipolar line through the
/// start point and the predicted epipole, or `None` when the vector is null
/// or points the wrong way.
pub fn epipole_gate_distance(
    start: PixelPoint,
    end: PixelPoint,
    e: &EpipolePrediction,
) -> Option<f64> {
    let k = Vector2::new(end.u - start.u, end.v - start.v);
    let len = k.norm();
    if !(len > 0.0) {
        return None;
    }
    if e.at_infinity {
        if k.dot(&e.direction) <= 0.0 {
            return None;
        }
        let perp = k.x * e.direction.y - k.y * e.direction.x;
        return Some(perp.abs());
    }
    let r = Vector2::new(start.u - e.point.u, start.v - e.point.v);
    let along = k.dot(&r);
    if (e.expanding && along <= 0.0) || (!e.expanding && along >= 0.0) {
        return None;
    }
    let r_len = r.norm();
    if !(r_len > 0.0) {
        return None;
    }
    Some((k.x * r.y - k.y * r.x).abs() / r_len)
}

/// A flow vector picked by the epipole filter, with the indices of its query
/// set and candidate. `flow.end` is rotation-compensated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectedFlow {
    pub query: usize,
    pub candidate: usize,
    pub flow: FlowVector,
    pub distance: f64,
}

/// Keeps, for every query, the candidate whose compensated flow line passes
/// closest to the predicted epipole, provided it is within `tol_px` and
/// points consistently with the motion. An infinite tolerance disables the
/// gate and keeps the best-descriptor candidate.
pub fn filter_flow_by_epipole(
    sets: &[MatchCandidateSet],
    r_pred: &Matrix3<f64>,
    cam: &CameraModel,
    epipole: &EpipolePrediction,
    tol_px: f64,
) -> Result<Vec<SelectedFlow>> {
    if !(tol_px >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epipole tolerance {tol_px}"
        )));
    }
    let gate = tol_px.is_finite();
    let mut out = Vec::new();
    for (qi, set) in sets.iter().enumerate() {
        let mut best: Option<SelectedFlow> = None;
        for (ci, c) in set.candidates.iter().enumerate() {
            let Ok(end) = compensate_rotation(c.point, cam, r_pred) else {
                continue;
            };
            let flow = FlowVector::new(set.query, end);
            if !gate {
                best = Some(SelectedFlow {
                    query: qi,
                    candidate: ci,
                    flow,
                    distance: 0.0,
                });
                break;
            }
            let Some(d) = epipole_gate_distance(set.query, end, epipole) else {
                continue;
            };
            if d <= tol_px && best.is_none_or(|b| d < b.distance) {
                best = Some(SelectedFlow {
                    query: qi,
                    candidate: ci,
                    flow,
                    distance: d,
                });
            }
        }
        out.extend(best);
    }
    if out.len() < MIN_FLOW {
        return Err(Error::InsufficientFlow(out.len()));
    }
    Ok(out)
}

/// How flow lines are weighted in the epipole fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalConvention {
    /// Unit normals: every line counts equally, residuals are pixel
    /// distances.
    #[default]
    Unit,
    /// Unnormalised normals `(-k_y, k_x)`: longer vectors weigh more.
    Literal,
}

/// Normal of the line carrying a flow vector.
pub fn flow_normal(f: &FlowVector, conv: NormalConvention) -> Vector2<f64> {
    let k = f.delta();
    let n = Vector2::new(-k.y, k.x);
    match conv {
        NormalConvention::Unit => {
            let l = n.norm();
            if l > 0.0 {
                n / l
            } else {
                n
            }
        }
        NormalConvention::Literal => n,
    }
}

/// Least-squares intersection of the flow lines.
pub fn epipole_least_squares(flow: &[FlowVector], conv: NormalConvention) -> Result<PixelPoint> {
    let mut a = Matrix2::zeros();
    let mut b = Vector2::zeros();
    for f in flow {
        let n = flow_normal(f, conv);
        let c = n.dot(&Vector2::new(f.start.u, f.start.v));
        a += n * n.transpose();
        b += n * c;
    }
    let eig = SymmetricEigen::new(a);
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(hi > 0.0) || lo <= 1e-12 * hi {
        return Err(Error::ParallelFlow);
    }
    let v = eig.eigenvectors;
    let inv = v * Matrix2::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l)) * v.transpose();
    let x = inv * b;
    Ok(PixelPoint::new(x.x, x.y))
}
