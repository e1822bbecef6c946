//! Sparse structure from motion: Harris corners, candidate matching, the
//! epipole gate fed by the correlation unit, the eight-point pose and the
//! flow-line covariance.

mod corners;
mod covariance;
mod eight_point;
mod epipole;
mod matching;

pub use corners::{detect_corners, harris_response, Corner, BORDER};
pub use covariance::{planar_flow_covariance, PoseDelta};
pub use eight_point::{eight_point_pose, essential_matrix, RelativePose};
pub use epipole::{
    epipole_gate_distance, epipole_least_squares, filter_flow_by_epipole, flow_normal,
    motion_from_displacement, predict_epipole, predict_epipole_planar, EpipolePrediction,
    FlowVector, NormalConvention, SelectedFlow, MIN_FLOW,
};
pub use matching::{
    descriptor, match_candidates, match_candidates_within, Candidate, MatchCandidateSet, PATCH,
};
