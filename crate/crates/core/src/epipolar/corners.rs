use crate::imgcore::{Image, PixelPoint};
use crate::{Error, Result};

const HARRIS_K: f64 = 0.04;
const WINDOW_RADIUS: usize = 2;
/// Corners closer than this to the border are dropped; it also leaves room
/// for the 11x11 descriptor patch.
pub const BORDER: usize = 5;
const NMS_RADIUS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    pub x: usize,
    pub y: usize,
    pub score: f64,
}

impl Corner {
    pub fn point(&self) -> PixelPoint {
        PixelPoint::new(self.x as f64, self.y as f64)
    }
}

/// Harris response with central-difference gradients and a 5x5 box window.
/// Pixels without a full window are zero.
pub fn harris_response(img: &Image) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let mut gxx = vec![0.0; w * h];
    let mut gxy = vec![0.0; w * h];
    let mut gyy = vec![0.0; w * h];
    let d = img.data();
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let i = y * w + x;
            let gx = 0.5 * (d[i + 1] - d[i - 1]);
            let gy = 0.5 * (d[i + w] - d[i - w]);
            gxx[i] = gx * gx;
            gxy[i] = gx * gy;
            gyy[i] = gy * gy;
        }
    }
    let r = WINDOW_RADIUS;
    let mut out = vec![0.0; w * h];
    let m = r + 1;
    if w <= 2 * m || h <= 2 * m {
        return out;
    }
    // Separable box sum: rows first, then columns.
    let mut row = vec![[0.0f64; 3]; w * h];
    for y in 1..h - 1 {
        for x in m..w - m {
            let mut acc = [0.0; 3];
            for xx in x - r..=x + r {
                let i = y * w + xx;
                acc[0] += gxx[i];
                acc[1] += gxy[i];
                acc[2] += gyy[i];
            }
            row[y * w + x] = acc;
        }
    }
    for y in m..h - m {
        for x in m..w - m {
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for yy in y - r..=y + r {
                let s = row[yy * w + x];
                a += s[0];
                b += s[1];
                c += s[2];
            }
            out[y * w + x] = a * c - b * b - HARRIS_K * (a + c) * (a + c);
        }
    }
    out
}

/// Harris corners with score at least `quality` times the strongest one,
/// thinned by non-maximum suppression. Sorted by score, then row, then
/// column.
pub fn detect_corners(img: &Image, quality: f64) -> Result<Vec<Corner>> {
    if !(quality > 0.0 && quality <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "corner quality {quality} not in (0, 1]"
        )));
    }
    let (w, h) = (img.width(), img.height());
    if w <= 2 * BORDER || h <= 2 * BORDER {
        return Ok(Vec::new());
    }
    let resp = harris_response(img);
    let max = resp.iter().cloned().fold(0.0, f64::max);
    if max <= 1e-12 {
        return Ok(Vec::new());
    }
    let thresh = quality * max;
    let mut cands = Vec::new();
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            let s = resp[y * w + x];
            if s < thresh || s <= 1e-12 {
                continue;
            }
            let local_max = (y - 1..=y + 1)
                .flat_map(|yy| (x - 1..=x + 1).map(move |xx| (xx, yy)))
                .all(|(xx, yy)| resp[yy * w + xx] <= s);
            if local_max {
                cands.push(Corner { x, y, score: s });
            }
        }
    }
    cands.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
    });
    let mut kept: Vec<Corner> = Vec::new();
    let cell = NMS_RADIUS.ceil() as usize;
    let (gw, gh) = (w / cell + 1, h / cell + 1);
    let mut grid: Vec<Vec<usize>> = vec![Vec::new(); gw * gh];
    for c in cands {
        let (cx, cy) = (c.x / cell, c.y / cell);
        let mut suppressed = false;
        'scan: for gy in cy.saturating_sub(1)..=(cy + 1).min(gh - 1) {
            for gx in cx.saturating_sub(1)..=(cx + 1).min(gw - 1) {
                for &k in &grid[gy * gw + gx] {
                    let o: &Corner = &kept[k];
                    let d2 = (o.x as f64 - c.x as f64).powi(2) + (o.y as f64 - c.y as f64).powi(2);
                    if d2 <= NMS_RADIUS * NMS_RADIUS {
                        suppressed = true;
                        break 'scan;
                    }
                }
            }
        }
        if !suppressed {
            grid[cy * gw + cx].push(kept.len());
            kept.push(c);
        }
    }
    Ok(kept)
}
