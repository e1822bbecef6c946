//! Image representation, PGM codec, camera model and top-view rectification.

mod camera;
mod homography;
mod image;
mod pgm;
mod warp;

pub use camera::{compensate_rotation, rotation_from_pitch, CameraModel, PixelPoint};
pub use homography::{build_rectifying_homography, Homography};
pub use image::{Image, MaskedImage};
pub use pgm::{decode_pgm, decode_pgm_with_maxval, encode_pgm};
pub use warp::{warp_to_topview, Region};
