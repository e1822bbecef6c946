use crate::{Error, Result};

/// Row-major grayscale raster with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("empty size {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(i) = data
            .iter()
            .position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
        {
            return Err(Error::InvalidImage(format!(
                "sample {i} = {} outside [0, 1]",
                data[i]
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image from a per-pixel function; values are clamped into
    /// `[0, 1]` and non-finite values become 0.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image must not be empty");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(clamp_unit(f(x, y)));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Bilinear sample at a real position; `None` outside the pixel-centre hull.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        if !(x >= 0.0 && y >= 0.0 && x <= max_x && y <= max_y) {
            return None;
        }
        let (x0, fx) = split_coord(x, self.width);
        let (y0, fy) = split_coord(y, self.height);
        let x1 = if self.width > 1 { x0 + 1 } else { x0 };
        let y1 = if self.height > 1 { y0 + 1 } else { y0 };
        let w = self.width;
        let v00 = self.data[y0 * w + x0];
        let v10 = self.data[y0 * w + x1];
        let v01 = self.data[y1 * w + x0];
        let v11 = self.data[y1 * w + x1];
        Some(
            v00 * (1.0 - fx) * (1.0 - fy)
                + v10 * fx * (1.0 - fy)
                + v01 * (1.0 - fx) * fy
                + v11 * fx * fy,
        )
    }
}

#[inline]
fn split_coord(c: f64, len: usize) -> (usize, f64) {
    if len == 1 {
        return (0, 0.0);
    }
    let i = (c.floor() as usize).min(len - 2);
    (i, c - i as f64)
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_finite() {
        v.clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// An image with a per-pixel validity mask, as produced by warping.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedImage {
    pub image: Image,
    pub valid: Vec<bool>,
}

impl MaskedImage {
    pub fn new(image: Image, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != image.width() * image.height() {
            return Err(Error::InvalidImage("mask size does not match image".into()));
        }
        Ok(Self { image, valid })
    }

    pub fn all_valid(image: Image) -> Self {
        let n = image.width() * image.height();
        Self {
            image,
            valid: vec![true; n],
        }
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.image.width() + x]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

impl From<Image> for MaskedImage {
    fn from(image: Image) -> Self {
        MaskedImage::all_valid(image)
    }
}
