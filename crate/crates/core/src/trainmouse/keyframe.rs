use super::{ssd_match, subpixel_refine, DisplacementMeasurement, SearchBand, TemplateSpec};
use crate::imgcore::{CameraModel, MaskedImage};
use crate::{Error, Result};

/// Matching parameters of the correlation unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub template: TemplateSpec,
    /// Band half widths around the predicted displacement.
    pub half_width_x: usize,
    pub half_width_y: usize,
    /// Band half widths used before any motion has been observed.
    pub acquire_half_width_x: usize,
    pub acquire_half_width_y: usize,
    pub gradient_threshold: f64,
}

/// When to replace the frozen reference frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyframePolicy {
    /// Hard limit on the number of frames matched against one keyframe.
    pub max_frames: usize,
    /// Above this forward speed (m/s) the reference is not frozen and every
    /// frame becomes a keyframe.
    pub velocity_threshold: f64,
}

impl KeyframePolicy {
    pub fn frame_to_frame() -> Self {
        Self {
            max_frames: 1,
            velocity_threshold: f64::INFINITY,
        }
    }

    fn step_limit_px(&self, cam: &CameraModel) -> f64 {
        self.velocity_threshold * cam.frame_interval / cam.ground_per_px_y()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeState {
    pub reference: MaskedImage,
    pub keyframe_id: u64,
    pub frames_used: usize,
    /// Displacement of the most recent frame relative to the keyframe, px.
    pub accumulated: (f64, f64),
    /// Last per-frame displacement, used to centre the search band.
    pub last_step: Option<(f64, f64)>,
    /// Index of the most recent frame.
    pub frame_index: u64,
}

impl KeyframeState {
    pub fn new(frame: MaskedImage, frame_index: u64) -> Self {
        Self {
            reference: frame,
            keyframe_id: frame_index,
            frames_used: 0,
            accumulated: (0.0, 0.0),
            last_step: None,
            frame_index,
        }
    }
}

/// Outcome of matching one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyframeStep {
    /// Displacement since the previous frame.
    pub frame: DisplacementMeasurement,
    /// Displacement since the keyframe.
    pub from_keyframe: DisplacementMeasurement,
    /// The new frame became the next keyframe.
    pub switched: bool,
}

/// Matches `new_rectified` against the frozen keyframe and advances the
/// keyframe state.
///
/// The displacement is always measured from the keyframe; the per-frame
/// displacement is the difference of consecutive keyframe displacements. A
/// new keyframe is taken when `max_frames` frames have used the current
/// one, when the predicted template position would leave the valid warped
/// area, or when the speed exceeds the policy threshold.
pub fn keyframe_update(
    state: &KeyframeState,
    new_rectified: MaskedImage,
    config: &TrackerConfig,
    policy: &KeyframePolicy,
    cam: &CameraModel,
) -> Result<(KeyframeStep, KeyframeState)> {
    if policy.max_frames == 0 {
        return Err(Error::InvalidParameter(
            "keyframe max_frames must be >= 1".into(),
        ));
    }
    let template = &config.template;
    let band = match state.last_step {
        Some((sx, sy)) => SearchBand::new(
            (state.accumulated.0 + sx).round() as i64,
            (state.accumulated.1 + sy).round() as i64,
            config.half_width_x,
            config.half_width_y,
        ),
        None => SearchBand::new(
            state.accumulated.0.round() as i64,
            state.accumulated.1.round() as i64,
            config.acquire_half_width_x,
            config.acquire_half_width_y,
        ),
    };
    let m = ssd_match(&state.reference, template, &new_rectified, &band)?;
    let (dx, dy, n_contrib, sigma_z_px) = match subpixel_refine(
        &state.reference,
        template,
        &new_rectified,
        (m.x_p, m.y_p),
        config.gradient_threshold,
    ) {
        Ok(e) => (e.dx, e.dy, e.n_contrib, e.sigma_z_px),
        Err(Error::NoTexture) => (0.0, 0.0, 0, 0.0),
        Err(e) => return Err(e),
    };
    let from_keyframe = DisplacementMeasurement {
        x_p: m.x_p,
        y_p: m.y_p,
        dx,
        dy,
        n_contrib,
        sigma_z_px,
        keyframe_id: state.keyframe_id,
        valid: true,
    };
    let total = from_keyframe.total();
    // Both totals sit on the sub-pixel grid, so this difference is exact.
    let step = (total.0 - state.accumulated.0, total.1 - state.accumulated.1);
    let (sx_i, sy_i) = (step.0.round(), step.1.round());
    let mut frame = DisplacementMeasurement {
        x_p: sx_i as i64,
        y_p: sy_i as i64,
        dx: step.0 - sx_i,
        dy: step.1 - sy_i,
        ..from_keyframe
    };

    let frames_used = state.frames_used + 1;
    let predicted = (total.0 + step.0, total.1 + step.1);
    let switched = frames_used >= policy.max_frames
        || step.1.abs() > policy.step_limit_px(cam)
        || !template_fits(&state.reference, template, config, predicted);

    let frame_index = state.frame_index + 1;
    let next = if switched {
        if !has_texture(&new_rectified, template, config.gradient_threshold) {
            frame.valid = false;
        }
        KeyframeState {
            reference: new_rectified,
            keyframe_id: frame_index,
            frames_used: 0,
            accumulated: (0.0, 0.0),
            last_step: Some(step),
            frame_index,
        }
    } else {
        KeyframeState {
            reference: state.reference.clone(),
            keyframe_id: state.keyframe_id,
            frames_used,
            accumulated: total,
            last_step: Some(step),
            frame_index,
        }
    };
    Ok((
        KeyframeStep {
            frame,
            from_keyframe,
            switched,
        },
        next,
    ))
}

/// Whether the template, displaced by `disp` and widened by the search band
/// and the gradient stencil, still lies in the valid part of the frame.
fn template_fits(
    frame: &MaskedImage,
    t: &TemplateSpec,
    config: &TrackerConfig,
    disp: (f64, f64),
) -> bool {
    let mx = config.half_width_x as i64 + 1;
    let my = config.half_width_y as i64 + 1;
    let x0 = t.x as i64 + disp.0.round() as i64 - mx;
    let y0 = t.y as i64 + disp.1.round() as i64 - my;
    let x1 = t.x as i64 + t.width as i64 - 1 + disp.0.round() as i64 + mx;
    let y1 = t.y as i64 + t.height as i64 - 1 + disp.1.round() as i64 + my;
    let (w, h) = (frame.width() as i64, frame.height() as i64);
    if x0 < 0 || y0 < 0 || x1 >= w || y1 >= h {
        return false;
    }
    [(x0, y0), (x1, y0), (x0, y1), (x1, y1)]
        .iter()
        .all(|&(x, y)| frame.is_valid(x as usize, y as usize))
}

fn has_texture(frame: &MaskedImage, t: &TemplateSpec, eps_g: f64) -> bool {
    subpixel_refine(frame, t, frame, (0, 0), eps_g).is_ok()
}
