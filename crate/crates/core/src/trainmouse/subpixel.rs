use super::TemplateSpec;
use crate::imgcore::MaskedImage;
use crate::{Error, Result};

/// Default gradient-magnitude gate, intensity units per pixel on `[0, 1]`
/// images.
pub const DEFAULT_GRADIENT_THRESHOLD: f64 = 0.02;

/// Sub-pixel results live on a 2⁻²⁴ px grid, so sums and differences of
/// displacements are exact in `f64`.
const SUBPIXEL_GRID: f64 = (1u64 << 24) as f64;

pub fn quantize_subpixel(v: f64) -> f64 {
    (v * SUBPIXEL_GRID).round() / SUBPIXEL_GRID
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubpixelEstimate {
    pub dx: f64,
    pub dy: f64,
    /// Number of pixels above the gradient gate that contributed.
    pub n_contrib: usize,
    /// Standard deviation of the per-pixel forward (y) responses.
    pub sigma_z_px: f64,
}

/// Refines an integer match to sub-pixel precision from a first-order
/// brightness-constancy model.
///
/// For every template pixel whose central-difference gradient `G` exceeds
/// `eps_g`, the brightness change against the matched position yields the
/// motion component along `G` (normal flow) `n = −ΔI · G / ‖G‖²`. Pixels whose
/// normal flow reaches 1 px are outside the Taylor validity region and are
/// dropped. Each normal flow is then expressed as a per-pixel displacement
/// response `r = M̄⁺ n`, with `M̄` the mean outer product of the unit gradient
/// directions. The mean of the responses is the reported `(dx, dy)`; the
/// spread of their y components is `sigma_z_px`.
pub fn subpixel_refine(
    reference: &MaskedImage,
    template: &TemplateSpec,
    current: &MaskedImage,
    int_disp: (i64, i64),
    eps_g: f64,
) -> Result<SubpixelEstimate> {
    if !(eps_g > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gradient threshold must be positive, got {eps_g}"
        )));
    }
    template.validate(reference.width(), reference.height())?;
    let (w, h) = (reference.width() as i64, reference.height() as i64);
    let (x_p, y_p) = int_disp;
    let rd = reference.image.data();
    let cd = current.image.data();
    let eps2 = eps_g * eps_g;

    let mut flows: Vec<(f64, f64)> = Vec::new();
    let mut m = [0.0f64; 3]; // xx, xy, yy
    for y in template.y as i64..(template.y + template.height) as i64 {
        if y < 1 || y >= h - 1 || y + y_p < 0 || y + y_p >= h {
            continue;
        }
        for x in template.x as i64..(template.x + template.width) as i64 {
            if x < 1 || x >= w - 1 || x + x_p < 0 || x + x_p >= w {
                continue;
            }
            let i = (y * w + x) as usize;
            let ci = ((y + y_p) * w + x + x_p) as usize;
            let wu = w as usize;
            if !(reference.valid[i]
                && reference.valid[i - 1]
                && reference.valid[i + 1]
                && reference.valid[i - wu]
                && reference.valid[i + wu]
                && current.valid[ci])
            {
                continue;
            }
            let gx = 0.5 * (rd[i + 1] - rd[i - 1]);
            let gy = 0.5 * (rd[i + wu] - rd[i - wu]);
            let g2 = gx * gx + gy * gy;
            if g2 <= eps2 {
                continue;
            }
            let di = cd[ci] - rd[i];
            let (nx, ny) = (-di * gx / g2, -di * gy / g2);
            if nx * nx + ny * ny >= 1.0 {
                continue;
            }
            flows.push((nx, ny));
            m[0] += gx * gx / g2;
            m[1] += gx * gy / g2;
            m[2] += gy * gy / g2;
        }
    }
    let n = flows.len();
    if n == 0 {
        return Err(Error::NoTexture);
    }
    let inv_n = 1.0 / n as f64;
    let pinv = pseudo_inverse_sym2([m[0] * inv_n, m[1] * inv_n, m[2] * inv_n]);
    let respond = |(nx, ny): (f64, f64)| (pinv[0] * nx + pinv[1] * ny, pinv[1] * nx + pinv[2] * ny);
    let (mut sx, mut sy) = (0.0, 0.0);
    for &f in &flows {
        let (rx, ry) = respond(f);
        sx += rx;
        sy += ry;
    }
    let (mean_x, mean_y) = (sx * inv_n, sy * inv_n);
    let sigma_z_px = if n > 1 {
        let ss: f64 = flows
            .iter()
            .map(|&f| {
                let d = respond(f).1 - mean_y;
                d * d
            })
            .sum();
        (ss * inv_n).sqrt()
    } else {
        0.0
    };
    const LIMIT: f64 = 1.0 - 1.0 / SUBPIXEL_GRID;
    Ok(SubpixelEstimate {
        dx: quantize_subpixel(mean_x).clamp(-LIMIT, LIMIT),
        dy: quantize_subpixel(mean_y).clamp(-LIMIT, LIMIT),
        n_contrib: n,
        sigma_z_px,
    })
}

/// Moore–Penrose inverse of a symmetric 2×2 matrix `[a b; b c]`, treating
/// eigenvalues below `1e-9 · λ_max` as zero.
fn pseudo_inverse_sym2([a, b, c]: [f64; 3]) -> [f64; 3] {
    let tr = a + c;
    let disc = ((a - c) * (a - c) + 4.0 * b * b).sqrt();
    let l1 = 0.5 * (tr + disc);
    let l2 = 0.5 * (tr - disc);
    if !(l1 > 0.0) {
        return [0.0; 3];
    }
    if l2 > 1e-9 * l1 {
        let det = a * c - b * b;
        return [c / det, -b / det, a / det];
    }
    // Rank one: project onto the dominant eigenvector.
    let (vx, vy) = if b.abs() > 1e-300 {
        (l1 - c, b)
    } else if a >= c {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let nrm = (vx * vx + vy * vy).sqrt();
    let (vx, vy) = (vx / nrm, vy / nrm);
    [vx * vx / l1, vx * vy / l1, vy * vy / l1]
}
