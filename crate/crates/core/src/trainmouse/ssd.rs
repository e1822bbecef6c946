use crate::imgcore::MaskedImage;
use crate::{Error, Result};

/// Rectangular template in the rectified reference frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemplateSpec {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl TemplateSpec {
    pub const MIN_SIZE: usize = 16;

    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.width < Self::MIN_SIZE || self.height < Self::MIN_SIZE {
            return Err(Error::InvalidTemplate(format!(
                "template {}x{} smaller than {}",
                self.width,
                self.height,
                Self::MIN_SIZE
            )));
        }
        if self.x + self.width > width || self.y + self.height > height {
            return Err(Error::InvalidTemplate(format!(
                "template at ({}, {}) size {}x{} exceeds frame {width}x{height}",
                self.x, self.y, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Search window around a predicted integer displacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBand {
    pub center_x: i64,
    pub center_y: i64,
    pub half_width_x: usize,
    pub half_width_y: usize,
}

impl SearchBand {
    pub fn new(center_x: i64, center_y: i64, half_width_x: usize, half_width_y: usize) -> Self {
        Self {
            center_x,
            center_y,
            half_width_x,
            half_width_y,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.half_width_x < 1 || self.half_width_y < 1 {
            return Err(Error::InvalidTemplate(
                "search band half widths must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        (x - self.center_x).unsigned_abs() as usize <= self.half_width_x
            && (y - self.center_y).unsigned_abs() as usize <= self.half_width_y
    }
}

/// Mean squared difference for every candidate displacement in the band;
/// `f64::INFINITY` marks candidates with too little valid overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseSurface {
    pub x_min: i64,
    pub y_min: i64,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ResponseSurface {
    pub fn get(&self, x_p: i64, y_p: i64) -> Option<f64> {
        let (i, j) = (x_p - self.x_min, y_p - self.y_min);
        if i < 0 || j < 0 || i as usize >= self.width || j as usize >= self.height {
            return None;
        }
        Some(self.values[j as usize * self.width + i as usize])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsdMatch {
    pub x_p: i64,
    pub y_p: i64,
    pub surface: ResponseSurface,
}

/// Sum of squared differences of one candidate displacement, masked to
/// pixels valid in both frames. Returns `(sum, count)`.
pub(crate) fn ssd_at(
    reference: &MaskedImage,
    template: &TemplateSpec,
    current: &MaskedImage,
    x_p: i64,
    y_p: i64,
) -> (f64, usize) {
    let (cw, ch) = (current.width() as i64, current.height() as i64);
    let rw = reference.width();
    let ref_data = reference.image.data();
    let cur_data = current.image.data();
    // Clip the template to the part that lands inside the current frame.
    let x_lo = (template.x as i64).max(-x_p);
    let x_hi = ((template.x + template.width) as i64).min(cw - x_p);
    let y_lo = (template.y as i64).max(-y_p);
    let y_hi = ((template.y + template.height) as i64).min(ch - y_p);
    if x_lo >= x_hi || y_lo >= y_hi {
        return (0.0, 0);
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for y in y_lo..y_hi {
        let r_row = y as usize * rw;
        let c_row = (y + y_p) as usize * cw as usize;
        for x in x_lo..x_hi {
            let ri = r_row + x as usize;
            let ci = c_row + (x + x_p) as usize;
            if reference.valid[ri] && current.valid[ci] {
                let d = ref_data[ri] - cur_data[ci];
                sum += d * d;
                count += 1;
            }
        }
    }
    (sum, count)
}

/// Finds the integer displacement in `band` minimising the masked SSD
/// between the reference template and the current frame.
///
/// Candidates are scored by the mean squared difference over the pixels
/// valid in both frames and must cover at least 25% of the template. Ties go
/// to the lexicographically smallest `(y_p, x_p)`.
pub fn ssd_match(
    reference: &MaskedImage,
    template: &TemplateSpec,
    current: &MaskedImage,
    band: &SearchBand,
) -> Result<SsdMatch> {
    template.validate(reference.width(), reference.height())?;
    band.validate()?;
    if reference.width() != current.width() || reference.height() != current.height() {
        return Err(Error::InvalidTemplate(
            "reference and current frames differ in size".into(),
        ));
    }
    let min_count = template.pixel_count().div_ceil(4);
    let width = 2 * band.half_width_x + 1;
    let height = 2 * band.half_width_y + 1;
    let x_min = band.center_x - band.half_width_x as i64;
    let y_min = band.center_y - band.half_width_y as i64;
    let mut values = Vec::with_capacity(width * height);
    let mut best: Option<(f64, i64, i64)> = None;
    for j in 0..height as i64 {
        for i in 0..width as i64 {
            let (x_p, y_p) = (x_min + i, y_min + j);
            let (sum, count) = ssd_at(reference, template, current, x_p, y_p);
            let score = if count >= min_count {
                sum / count as f64
            } else {
                f64::INFINITY
            };
            values.push(score);
            if score.is_finite() && best.is_none_or(|(b, _, _)| score < b) {
                best = Some((score, x_p, y_p));
            }
        }
    }
    let (_, x_p, y_p) = best.ok_or(Error::InsufficientOverlap)?;
    Ok(SsdMatch {
        x_p,
        y_p,
        surface: ResponseSurface {
            x_min,
            y_min,
            width,
            height,
            values,
        },
    })
}
