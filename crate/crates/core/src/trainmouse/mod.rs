//! The correlation unit: large-template SSD matching in the rectified track
//! view, sub-pixel gradient refinement, metric velocity and keyframes.

mod keyframe;
mod ssd;
mod subpixel;
mod velocity;

pub use keyframe::{keyframe_update, KeyframePolicy, KeyframeState, KeyframeStep, TrackerConfig};
pub use ssd::{ssd_match, ResponseSurface, SearchBand, SsdMatch, TemplateSpec};
pub use subpixel::{
    quantize_subpixel, subpixel_refine, SubpixelEstimate, DEFAULT_GRADIENT_THRESHOLD,
};
pub use velocity::{displacement_to_velocity, DisplacementMeasurement, VelocityEstimate};
