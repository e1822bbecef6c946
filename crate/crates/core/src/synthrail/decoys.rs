use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::epipolar::{epipole_gate_distance, predict_epipole, Candidate, MatchCandidateSet};
use crate::imgcore::{compensate_rotation, CameraModel, PixelPoint};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoySpec {
    pub n_points: usize,
    /// Decoy candidates per query point.
    pub n_decoys: usize,
    /// Smallest distance of a decoy from the epipolar line, pixels.
    pub decoy_offline_px: f64,
    /// Standard deviation of the true end point, pixels.
    pub match_noise_px: f64,
    pub depth_min: f64,
    pub depth_max: f64,
    pub seed: u64,
}

/// Candidate sets with one true match each; `true_candidate[i]` indexes the
/// true candidate of `sets[i]`.
#[derive(Debug, Clone)]
pub struct DecoyScene {
    pub sets: Vec<MatchCandidateSet>,
    pub true_candidate: Vec<usize>,
    /// `x_{t+1} = rotation · x_t + translation`.
    pub rotation: Matrix3<f64>,
    /// Camera displacement in frame-t coordinates.
    pub motion: Vector3<f64>,
}

/// Distance of `p` from the line through `a` and `b`.
fn line_distance(a: Vector2<f64>, b: Vector2<f64>, p: Vector2<f64>) -> f64 {
    let k = b - a;
    let r = p - a;
    (k.x * r.y - k.y * r.x).abs() / k.norm()
}

fn v2(p: PixelPoint) -> Vector2<f64> {
    Vector2::new(p.u, p.v)
}

/// Random scene points seen from two poses, with decoy candidates that look
/// as good as the true match but lie off the epipolar line.
pub fn gen_match_candidates_with_decoys(
    rotation: &Matrix3<f64>,
    motion: &Vector3<f64>,
    cam: &CameraModel,
    spec: &DecoySpec,
) -> Result<DecoyScene> {
    if !(spec.depth_min > 0.0 && spec.depth_max >= spec.depth_min)
        || !(spec.decoy_offline_px > 0.0)
        || !(spec.match_noise_px >= 0.0)
    {
        return Err(Error::InvalidParameter(format!("decoy spec {spec:?}")));
    }
    let e = predict_epipole(motion, cam)?;
    let t = -rotation * motion;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.match_noise_px)
        .map_err(|err| Error::InvalidParameter(err.to_string()))?;
    let kinv = cam.intrinsics_inverse();
    let margin = 10.0;
    let (w, h) = (cam.width as f64, cam.height as f64);
    let inside =
        |p: &PixelPoint| p.u >= margin && p.v >= margin && p.u <= w - margin && p.v <= h - margin;
    let mut sets = Vec::with_capacity(spec.n_points);
    let mut true_candidate = Vec::with_capacity(spec.n_points);
    let mut attempts = 0usize;
    while sets.len() < spec.n_points {
        attempts += 1;
        if attempts > 1000 * spec.n_points.max(1) {
            return Err(Error::InvalidParameter(
                "cannot place decoy scene points".into(),
            ));
        }
        let ps = PixelPoint::new(
            rng.random_range(margin..w - margin),
            rng.random_range(margin..h - margin),
        );
        let z = rng.random_range(spec.depth_min..=spec.depth_max);
        let x1 = kinv * Vector3::new(ps.u, ps.v, 1.0) * z;
        let x2 = rotation * x1 + t;
        if x2.z < 0.1 {
            continue;
        }
        let Some(pe) = cam.project(&x2) else { continue };
        let pe = PixelPoint::new(pe.u + noise.sample(&mut rng), pe.v + noise.sample(&mut rng));
        if !inside(&pe) {
            continue;
        }
        if !e.at_infinity && ps.distance(&e.point) < 3.0 * spec.decoy_offline_px {
            continue;
        }
        let ce = v2(compensate_rotation(pe, cam, rotation)?);
        let s = v2(ps);
        let k = ce - s;
        if k.norm() < 1e-6 {
            continue;
        }
        let along = k.normalize();
        let perp = Vector2::new(-along.y, along.x);
        let mut decoys = Vec::with_capacity(spec.n_decoys);
        for _ in 0..spec.n_decoys {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let slide = rng.random_range(-0.5..0.5) * k.norm();
            let mut off = spec.decoy_offline_px * rng.random_range(1.0..2.0);
            let cd = loop {
                let cd = ce + along * slide + perp * (sign * off);
                let line_off = if e.at_infinity {
                    (cd - s)
                        .dot(&Vector2::new(-e.direction.y, e.direction.x))
                        .abs()
                } else {
                    line_distance(v2(e.point), s, cd)
                };
                let gate = epipole_gate_distance(ps, PixelPoint::new(cd.x, cd.y), &e);
                if line_off >= spec.decoy_offline_px
                    && gate.is_none_or(|g| g >= spec.decoy_offline_px)
                {
                    break cd;
                }
                off *= 1.5;
                if off > 1e4 {
                    break cd;
                }
            };
            let pd = compensate_rotation(PixelPoint::new(cd.x, cd.y), cam, &rotation.transpose())?;
            decoys.push(pd);
        }
        let mut cands: Vec<(Candidate, bool)> = std::iter::once((pe, true))
            .chain(decoys.into_iter().map(|p| (p, false)))
            .map(|(point, truth)| {
                (
                    Candidate {
                        point,
                        distance: rng.random_range(0.10..0.12),
                    },
                    truth,
                )
            })
            .collect();
        cands.sort_by(|a, b| a.0.distance.total_cmp(&b.0.distance));
        true_candidate.push(cands.iter().position(|c| c.1).expect("true match present"));
        sets.push(MatchCandidateSet {
            query: ps,
            candidates: cands.into_iter().map(|c| c.0).collect(),
        });
    }
    Ok(DecoyScene {
        sets,
        true_candidate,
        rotation: *rotation,
        motion: *motion,
    })
}
