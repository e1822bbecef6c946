//! Deterministic monocular visual odometry for a downward-looking rail camera.
//!
//! The crate is organised along the processing chain:
//!
//! * [`imgcore`]: images, PGM codec, camera model, top-view rectification.
//! * [`trainmouse`]: large-template correlation with sub-pixel refinement,
//!   metric velocity and keyframe management.
//! * [`epipolar`]: deterministic corner matching, epipole-gated flow filtering,
//!   eight-point pose recovery and planar covariance.
//! * [`navfuse`]: planar Kalman fusion and fiducial drift correction.
//! * [`synthrail`]: synthetic ballast scenes with exact ground truth.
//! * [`railcli`]: configuration, pipeline orchestration, evaluation and plots.
//!
//! Nothing in the crate draws random numbers except the synthetic generators,
//! which are pure functions of their seed.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod epipolar;
pub mod error;
pub mod imgcore;
pub mod navfuse;
pub mod railcli;
pub mod synthrail;
pub mod trainmouse;

pub use error::{Error, ErrorKind, Result};
