//! Synthetic rail scenes: procedural ballast texture, rendered frames with
//! ground truth, decoy-laden match sets and tag sightings.

mod decoys;
mod render;
mod sequence;
mod tags;
mod texture;

pub use decoys::{gen_match_candidates_with_decoys, DecoyScene, DecoySpec};
pub use render::{body_from_camera, body_from_topview, frame_seed, render_view, CameraPose};
pub use sequence::{
    advance, gen_sequence, GroundTruthRecord, Segment, SyntheticSequence, TrajectorySpec,
};
pub use tags::{forward_mount, gen_tag_sightings, place_tags, SurveyedTag, TagLayout, TagSighting};
pub use texture::{gen_ballast_texture, MOTIF_PERIOD};
