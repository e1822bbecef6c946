use super::corners::Corner;
use crate::imgcore::{Image, PixelPoint};
use crate::{Error, Result};

/// Side of the square descriptor patch.
pub const PATCH: usize = 11;

/// A candidate end point with its descriptor distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub point: PixelPoint,
    pub distance: f64,
}

/// The k best candidates for one query point, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchCandidateSet {
    pub query: PixelPoint,
    pub candidates: Vec<Candidate>,
}

/// Zero-mean, unit-norm patch around a corner; `None` for flat patches or
/// patches crossing the border.
pub fn descriptor(img: &Image, x: usize, y: usize) -> Option<Vec<f64>> {
    let r = PATCH / 2;
    if x < r || y < r || x + r >= img.width() || y + r >= img.height() {
        return None;
    }
    let mut d: Vec<f64> = (y - r..=y + r)
        .flat_map(|yy| (x - r..=x + r).map(move |xx| (xx, yy)))
        .map(|(xx, yy)| img.get(xx, yy))
        .collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    d.iter_mut().for_each(|v| *v -= mean);
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-9 {
        return None;
    }
    d.iter_mut().for_each(|v| *v /= norm);
    Some(d)
}

fn ssd(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Bucket grid over target points with cells of the search radius.
struct Grid {
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<usize>>,
}

impl Grid {
    fn new(targets: &[(PixelPoint, Vec<f64>)], radius: f64, w: usize, h: usize) -> Self {
        let cell = if radius.is_finite() && radius >= 1.0 {
            radius
        } else {
            (w.max(h) + 1) as f64
        };
        let cols = (w as f64 / cell).floor() as usize + 1;
        let rows = (h as f64 / cell).floor() as usize + 1;
        let mut buckets = vec![Vec::new(); cols * rows];
        for (i, (p, _)) in targets.iter().enumerate() {
            let (cx, cy) = ((p.u / cell) as usize, (p.v / cell) as usize);
            buckets[cy.min(rows - 1) * cols + cx.min(cols - 1)].push(i);
        }
        Self {
            cell,
            cols,
            rows,
            buckets,
        }
    }

    fn near(&self, p: PixelPoint, out: &mut Vec<usize>) {
        out.clear();
        let cx = ((p.u / self.cell).max(0.0) as usize).min(self.cols - 1);
        let cy = ((p.v / self.cell).max(0.0) as usize).min(self.rows - 1);
        for gy in cy.saturating_sub(1)..=(cy + 1).min(self.rows - 1) {
            for gx in cx.saturating_sub(1)..=(cx + 1).min(self.cols - 1) {
                out.extend_from_slice(&self.buckets[gy * self.cols + gx]);
            }
        }
    }
}

/// For every corner of frame t, the `k` corners of frame t+1 with the
/// smallest descriptor distance (ties by index) within `max_radius` pixels.
pub fn match_candidates_within(
    corners_t: &[Corner],
    corners_t1: &[Corner],
    img_t: &Image,
    img_t1: &Image,
    k: usize,
    max_radius: f64,
) -> Result<Vec<MatchCandidateSet>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let targets: Vec<(PixelPoint, Vec<f64>)> = corners_t1
        .iter()
        .filter_map(|c| descriptor(img_t1, c.x, c.y).map(|d| (c.point(), d)))
        .collect();
    let grid = Grid::new(
        &targets,
        max_radius,
        img_t1.width().max(img_t.width()),
        img_t1.height().max(img_t.height()),
    );
    let r2 = max_radius * max_radius;
    let mut out = Vec::new();
    let mut near = Vec::new();
    for c in corners_t {
        let Some(q) = descriptor(img_t, c.x, c.y) else {
            continue;
        };
        let qp = c.point();
        grid.near(qp, &mut near);
        let mut scored: Vec<(f64, usize)> = near
            .iter()
            .filter(|&&i| {
                let p = targets[i].0;
                (p.u - qp.u).powi(2) + (p.v - qp.v).powi(2) <= r2
            })
            .map(|&i| (ssd(&q, &targets[i].1), i))
            .collect();
        if scored.is_empty() {
            continue;
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        scored.truncate(k);
        out.push(MatchCandidateSet {
            query: qp,
            candidates: scored
                .into_iter()
                .map(|(distance, i)| Candidate {
                    point: targets[i].0,
                    distance,
                })
                .collect(),
        });
    }
    Ok(out)
}

/// [`match_candidates_within`] without a radius limit.
pub fn match_candidates(
    corners_t: &[Corner],
    corners_t1: &[Corner],
    img_t: &Image,
    img_t1: &Image,
    k: usize,
) -> Result<Vec<MatchCandidateSet>> {
    match_candidates_within(corners_t, corners_t1, img_t, img_t1, k, f64::INFINITY)
}
