use super::{Homography, Image, MaskedImage};
use crate::{Error, Result};

/// Output rectangle in rectified pixel coordinates. Output pixel `(i, j)`
/// corresponds to rectified position `(x0 + i, y0 + j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub x0: i64,
    pub y0: i64,
    pub width: usize,
    pub height: usize,
}

impl Region {
    pub fn new(x0: i64, y0: i64, width: usize, height: usize) -> Self {
        Self {
            x0,
            y0,
            width,
            height,
        }
    }

    pub fn full(image: &Image) -> Self {
        Self::new(0, 0, image.width(), image.height())
    }
}

/// Resamples `img` into the rectified frame: each output pixel takes the
/// bilinear sample of `img` at `h⁻¹ · (x′, y′, 1)`. Samples falling outside
/// `img` are set to 0 and marked invalid.
pub fn warp_to_topview(img: &Image, h: &Homography, region: Region) -> Result<MaskedImage> {
    if region.width == 0 || region.height == 0 {
        return Err(Error::InvalidParameter("warp region is empty".into()));
    }
    let inv = h.inverse()?;
    let m = inv.matrix();
    let n = region.width * region.height;
    let mut data = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for j in 0..region.height {
        let y = (region.y0 + j as i64) as f64;
        // Row-constant parts of the projective map.
        let bx = m[(0, 1)] * y + m[(0, 2)];
        let by = m[(1, 1)] * y + m[(1, 2)];
        let bz = m[(2, 1)] * y + m[(2, 2)];
        for i in 0..region.width {
            let x = (region.x0 + i as i64) as f64;
            let w = m[(2, 0)] * x + bz;
            let sample = if w > 1e-12 {
                let sx = (m[(0, 0)] * x + bx) / w;
                let sy = (m[(1, 0)] * x + by) / w;
                img.sample_bilinear(sx, sy)
            } else {
                None
            };
            match sample {
                Some(v) => {
                    data.push(v);
                    valid.push(true);
                }
                None => {
                    data.push(0.0);
                    valid.push(false);
                }
            }
        }
    }
    if !valid.iter().any(|v| *v) {
        return Err(Error::EmptyWarp);
    }
    MaskedImage::new(Image::new(region.width, region.height, data)?, valid)
}
