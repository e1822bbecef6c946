use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Rotation3, Vector3, Vector4};

use super::config::RunConfig;
use super::csvio::{write_file, CsvWriter};
use super::dataset::{Dataset, TagRecord};
use crate::epipolar::{
    detect_corners, eight_point_pose, epipole_least_squares, filter_flow_by_epipole,
    match_candidates_within, motion_from_displacement, planar_flow_covariance, predict_epipole,
    Corner, FlowVector, NormalConvention, PoseDelta,
};
use crate::imgcore::{
    build_rectifying_homography, warp_to_topview, CameraModel, Homography, Image, PixelPoint,
};
use crate::navfuse::{
    apply_tag_correction, body_pose_covariance, body_pose_from_tag, heading_measurement,
    integrate_pose, kf_predict, kf_update_velocity, tag_planar_pose, tag_pose_covariance,
    CameraMount, NavState, ProcessNoise, Trajectory,
};
use crate::synthrail::body_from_camera;
use crate::trainmouse::{
    displacement_to_velocity, keyframe_update, DisplacementMeasurement, KeyframeState,
    VelocityEstimate,
};
use crate::{Error, Result};

pub const DISPLACEMENT_COLUMNS: [&str; 11] = [
    "frame_idx",
    "keyframe_id",
    "x_p",
    "y_p",
    "dx",
    "dy",
    "n_contrib",
    "sigma_z_px",
    "v_l",
    "v_s",
    "sigma_vz",
];
pub const POSE_COLUMNS: [&str; 14] = [
    "frame_idx",
    "n_candidates",
    "n_filtered",
    "epipole_u",
    "epipole_v",
    "yaw",
    "pitch",
    "roll",
    "t_x",
    "t_y",
    "t_z",
    "p11",
    "p12",
    "p22",
];
pub const TRAJECTORY_COLUMNS: [&str; 15] = [
    "t", "x_g", "y_g", "heading", "v", "c11", "c12", "c13", "c14", "c22", "c23", "c24", "c33",
    "c34", "c44",
];

/// Tag camera and its mounting.
#[derive(Debug, Clone, PartialEq)]
pub struct TagSensor {
    pub camera: CameraModel,
    pub mount: CameraMount,
}

/// Structure-from-motion diagnostics for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SfmRecord {
    pub n_candidates: usize,
    pub n_filtered: usize,
    pub delta: Option<PoseDelta>,
}

/// Everything produced for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameOutput {
    pub frame: u64,
    pub displacement: DisplacementMeasurement,
    pub velocity: VelocityEstimate,
    pub sfm: SfmRecord,
    pub state: NavState,
}

/// Per-run counters.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunSummary {
    pub frames: usize,
    pub tracking_failures: usize,
    pub keyframe_switches: usize,
    pub sfm_accepted: usize,
    pub sfm_rejected: usize,
    pub tags_applied: usize,
    pub tags_gated: usize,
    pub tag_failures: usize,
}

/// The per-frame state machine: rectification, correlation unit, SfM,
/// fusion and tag corrections.
#[derive(Debug, Clone)]
pub struct Odometry {
    cfg: RunConfig,
    cam: CameraModel,
    homography: Homography,
    tag_sensor: Option<TagSensor>,
    keyframe: Option<KeyframeState>,
    prev: Option<(Image, Vec<Corner>)>,
    nav: NavState,
    last_t: Option<f64>,
    pub trajectory: Trajectory,
    pub summary: RunSummary,
}

fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    Rotation3::from_matrix_unchecked(*r).angle()
}

impl Odometry {
    pub fn new(cfg: &RunConfig, tag_sensor: Option<TagSensor>) -> Result<Self> {
        cfg.validate()?;
        let cam = cfg.camera.model()?;
        let homography = build_rectifying_homography(&cam)?;
        let var = Vector4::new(
            cfg.initial_sigma_position_m.powi(2),
            cfg.initial_sigma_position_m.powi(2),
            cfg.initial_sigma_heading_rad.powi(2),
            cfg.initial_sigma_speed_mps.powi(2),
        );
        let nav = NavState {
            t: 0.0,
            x: cfg.initial_x_m,
            y: cfg.initial_y_m,
            heading: cfg.initial_heading_rad,
            v: cfg.initial_speed_mps,
            cov: Matrix4::from_diagonal(&var),
        };
        Ok(Odometry {
            cfg: cfg.clone(),
            cam,
            homography,
            tag_sensor,
            keyframe: None,
            prev: None,
            nav,
            last_t: None,
            trajectory: Trajectory::default(),
            summary: RunSummary::default(),
        })
    }

    pub fn camera(&self) -> &CameraModel {
        &self.cam
    }

    pub fn state(&self) -> &NavState {
        &self.nav
    }

    fn track(&mut self, frame: u64, img: &Image) -> Result<DisplacementMeasurement> {
        let rect = warp_to_topview(img, &self.homography, self.cfg.region())?;
        let Some(state) = self.keyframe.take() else {
            self.keyframe = Some(KeyframeState::new(rect, frame));
            return Ok(DisplacementMeasurement::zero(frame));
        };
        match keyframe_update(
            &state,
            rect.clone(),
            &self.cfg.tracker(),
            &self.cfg.keyframe_policy(),
            &self.cam,
        ) {
            Ok((step, next)) => {
                if step.switched {
                    self.summary.keyframe_switches += 1;
                }
                self.keyframe = Some(next);
                Ok(step.frame)
            }
            Err(e @ (Error::InvalidParameter(_) | Error::InvalidTemplate(_))) => Err(e),
            Err(_) => {
                self.summary.tracking_failures += 1;
                self.keyframe = Some(KeyframeState::new(rect, frame));
                Ok(DisplacementMeasurement {
                    valid: false,
                    ..DisplacementMeasurement::zero(frame)
                })
            }
        }
    }

    /// Relative pose between the previous and current physical frames,
    /// gated by the correlation-unit prediction.
    fn sfm(&mut self, img: &Image, meas: &DisplacementMeasurement) -> Result<SfmRecord> {
        let mut corners = detect_corners(img, self.cfg.corner_quality)?;
        corners.truncate(self.cfg.max_corners);
        let prev = self.prev.replace((img.clone(), corners.clone()));
        let mut rec = SfmRecord {
            n_candidates: 0,
            n_filtered: 0,
            delta: None,
        };
        let Some((prev_img, prev_corners)) = prev else {
            return Ok(rec);
        };
        if !meas.valid {
            return Ok(rec);
        }
        let (dx, dy) = meas.total();
        let motion = motion_from_displacement(dx, dy, &self.cam);
        let Ok(epipole) = predict_epipole(&motion, &self.cam) else {
            return Ok(rec);
        };
        let sets = match_candidates_within(
            &prev_corners,
            &corners,
            &prev_img,
            img,
            self.cfg.match_candidates,
            self.cfg.match_radius_px,
        )?;
        rec.n_candidates = sets.len();
        let r_pred = Matrix3::identity();
        let selected = match filter_flow_by_epipole(
            &sets,
            &r_pred,
            &self.cam,
            &epipole,
            self.cfg.epipole_tol_px,
        ) {
            Ok(s) => s,
            Err(Error::InsufficientFlow(n)) => {
                rec.n_filtered = n;
                self.summary.sfm_rejected += 1;
                return Ok(rec);
            }
            Err(e) => return Err(e),
        };
        rec.n_filtered = selected.len();
        let flow: Vec<FlowVector> = selected.iter().map(|s| s.flow).collect();
        let conv = if self.cfg.epipole_literal_normals {
            NormalConvention::Literal
        } else {
            NormalConvention::Unit
        };
        let limit = self.cfg.sfm_max_angle_deg.to_radians();
        let accepted = eight_point_pose(&flow, &self.cam).ok().and_then(|p| {
            let p = p.after_rotation(&r_pred);
            let consistent = p
                .motion_dir
                .dot(&motion.normalize())
                .clamp(-1.0, 1.0)
                .acos()
                <= limit
                && rotation_angle(&p.rotation) <= limit;
            consistent.then_some(p)
        });
        let Some(pose) = accepted else {
            self.summary.sfm_rejected += 1;
            return Ok(rec);
        };
        let e_ls = epipole_least_squares(&flow, conv).unwrap_or(epipole.point);
        let cov = planar_flow_covariance(&flow, e_ls, dx.hypot(dy), &self.cam, conv)?;
        self.summary.sfm_accepted += 1;
        rec.delta = Some(PoseDelta {
            rotation: pose.rotation,
            t_dir: pose.motion_dir,
            epipole: e_ls,
            cov_xy: cov,
            sigma_z: meas.sigma_z_px,
        });
        Ok(rec)
    }

    fn apply_tags(&mut self, t: f64, tags: &[TagRecord]) -> Result<()> {
        let Some(sensor) = &self.tag_sensor else {
            return Ok(());
        };
        if !self.cfg.tags_enabled {
            return Ok(());
        }
        let floor = Matrix3::from_diagonal(&Vector3::new(
            self.cfg.tag_sigma_position_m.powi(2),
            self.cfg.tag_sigma_position_m.powi(2),
            self.cfg.tag_sigma_heading_rad.powi(2),
        ));
        for rec in tags {
            let solved = tag_planar_pose(&rec.observation, &sensor.camera).and_then(|rel| {
                let cov = tag_pose_covariance(
                    &rec.observation,
                    &sensor.camera,
                    &rel,
                    self.cfg.tag_corner_sigma_px,
                )?;
                Ok((rel, cov))
            });
            let Ok((rel, cov)) = solved else {
                self.summary.tag_failures += 1;
                continue;
            };
            let pose = body_pose_from_tag(&rec.world, &rel, &sensor.mount);
            let noise = body_pose_covariance(&rec.world, &rel, &sensor.mount, &cov) + floor;
            let c = apply_tag_correction(&self.nav, t, &pose, &noise, self.cfg.tag_gate_sigma)?;
            if c.applied {
                self.summary.tags_applied += 1;
            } else {
                self.summary.tags_gated += 1;
            }
            self.nav = c.state;
        }
        Ok(())
    }

    /// Processes the frame taken at time `t`, with the tag sightings made at
    /// that time.
    pub fn process(
        &mut self,
        frame: u64,
        t: f64,
        img: &Image,
        tags: &[TagRecord],
    ) -> Result<FrameOutput> {
        if let Some(last) = self.last_t {
            if t <= last {
                return Err(Error::NonMonotonic { last, got: t });
            }
        }
        let meas = self.track(frame, img)?;
        let mut velocity = VelocityEstimate {
            v_l: f64::NAN,
            v_s: f64::NAN,
            sigma_vz: f64::INFINITY,
        };
        if meas.valid {
            velocity = displacement_to_velocity(&meas, &self.cam);
        }
        let sfm = if self.cfg.sfm_enabled {
            self.sfm(img, &meas)?
        } else {
            SfmRecord {
                n_candidates: 0,
                n_filtered: 0,
                delta: None,
            }
        };
        let dt = match self.last_t {
            Some(last) => {
                let dt = t - last;
                let q = ProcessNoise {
                    position: self.cfg.process_noise_position,
                    heading: self.cfg.process_noise_heading,
                    speed: self.cfg.process_noise_speed,
                };
                let previous_heading = self.nav.heading;
                self.nav = kf_predict(&self.nav, dt, &q)?;
                if meas.valid {
                    let floor = self.cfg.velocity_sigma_floor_mps;
                    let v = VelocityEstimate {
                        sigma_vz: velocity.sigma_vz.hypot(floor),
                        ..velocity
                    };
                    // An epipole at infinity leaves the lateral variance undefined.
                    let heading = sfm
                        .delta
                        .filter(|d| d.cov_xy.iter().all(|c| c.is_finite()))
                        .map(|d| {
                            let b = body_from_camera(&self.cam);
                            let m = b * d.rotation.transpose() * b.transpose();
                            let yaw = m[(1, 0)].atan2(m[(0, 0)]);
                            let floor = self.cfg.heading_sigma_floor_rad.powi(2);
                            heading_measurement(
                                previous_heading,
                                yaw,
                                &v,
                                floor,
                                d.cov_xy[(0, 0)],
                                v.v_l.abs() * dt,
                                floor,
                            )
                        });
                    self.nav = kf_update_velocity(&self.nav, &v, heading)?;
                }
                dt
            }
            None => {
                self.nav.t = t;
                0.0
            }
        };
        self.apply_tags(t, tags)?;
        integrate_pose(&mut self.trajectory, &self.nav, dt)?;
        self.last_t = Some(t);
        self.summary.frames += 1;
        Ok(FrameOutput {
            frame,
            displacement: meas,
            velocity,
            sfm,
            state: self.nav,
        })
    }
}

/// Appends the CSV rows of one frame.
pub struct RunWriters {
    pub displacement: CsvWriter,
    pub pose: CsvWriter,
    pub trajectory: CsvWriter,
}

impl Default for RunWriters {
    fn default() -> Self {
        RunWriters {
            displacement: CsvWriter::new(&DISPLACEMENT_COLUMNS),
            pose: CsvWriter::new(&POSE_COLUMNS),
            trajectory: CsvWriter::new(&TRAJECTORY_COLUMNS),
        }
    }
}

impl RunWriters {
    pub fn push(&mut self, out: &FrameOutput) {
        let d = &out.displacement;
        let v = &out.velocity;
        self.displacement.row([
            out.frame.to_string(),
            d.keyframe_id.to_string(),
            d.x_p.to_string(),
            d.y_p.to_string(),
            d.dx.to_string(),
            d.dy.to_string(),
            d.n_contrib.to_string(),
            d.sigma_z_px.to_string(),
            v.v_l.to_string(),
            v.v_s.to_string(),
            v.sigma_vz.to_string(),
        ]);
        let s = &out.sfm;
        let nan = f64::NAN;
        let (e, angles, t, p) = match &s.delta {
            Some(d) => {
                let (roll, pitch, yaw) =
                    Rotation3::from_matrix_unchecked(d.rotation).euler_angles();
                (
                    d.epipole,
                    (yaw, pitch, roll),
                    d.t_dir,
                    (d.cov_xy[(0, 0)], d.cov_xy[(0, 1)], d.cov_xy[(1, 1)]),
                )
            }
            None => (
                PixelPoint::new(nan, nan),
                (nan, nan, nan),
                Vector3::repeat(nan),
                (nan, nan, nan),
            ),
        };
        self.pose.row([
            out.frame.to_string(),
            s.n_candidates.to_string(),
            s.n_filtered.to_string(),
            e.u.to_string(),
            e.v.to_string(),
            angles.0.to_string(),
            angles.1.to_string(),
            angles.2.to_string(),
            t.x.to_string(),
            t.y.to_string(),
            t.z.to_string(),
            p.0.to_string(),
            p.1.to_string(),
            p.2.to_string(),
        ]);
        let st = &out.state;
        let mut row = vec![st.t, st.x, st.y, st.heading, st.v];
        for i in 0..4 {
            for j in i..4 {
                row.push(st.cov[(i, j)]);
            }
        }
        self.trajectory.row(row);
    }
}

/// Runs the whole dataset and writes the run directory.
pub fn run_pipeline(cfg: &RunConfig, dataset: &Dataset, out_dir: &Path) -> Result<RunSummary> {
    if let Some(m) = cfg.camera.mismatch(&dataset.spec.camera) {
        return Err(Error::Dataset(format!(
            "dataset camera does not match the configuration ({m})"
        )));
    }
    let tf = 1.0 / dataset.spec.camera.frame_rate_hz;
    let records = dataset.tag_records()?;
    let sensor = if records.is_empty() {
        None
    } else {
        Some(TagSensor {
            camera: dataset.spec.tags.camera(tf)?,
            mount: dataset.spec.tags.mount(),
        })
    };
    let mut odo = Odometry::new(cfg, sensor)?;
    let mut writers = RunWriters::default();
    let mut next_tag = 0;
    for k in 0..dataset.frame_count {
        let t = k as f64 * tf;
        let start = next_tag;
        while next_tag < records.len() && records[next_tag].observation.t <= t + 1e-9 {
            next_tag += 1;
        }
        let img = dataset.frame(k)?;
        let out = odo.process(k as u64, t, &img, &records[start..next_tag])?;
        writers.push(&out);
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_file(
        &out_dir.join("displacement.csv"),
        writers.displacement.as_str().as_bytes(),
    )?;
    write_file(&out_dir.join("pose.csv"), writers.pose.as_str().as_bytes())?;
    write_file(
        &out_dir.join("trajectory.csv"),
        writers.trajectory.as_str().as_bytes(),
    )?;
    write_file(&out_dir.join("config.txt"), cfg.echo().as_bytes())?;
    write_file(
        &out_dir.join("manifest.txt"),
        dataset.manifest_text.as_bytes(),
    )?;
    let s = &odo.summary;
    let summary = format!(
        "frames = {}\ntracking_failures = {}\nkeyframe_switches = {}\nsfm_accepted = {}\nsfm_rejected = {}\n\
         tags_applied = {}\ntags_gated = {}\ntag_failures = {}\npath_length_m = {}\n",
        s.frames,
        s.tracking_failures,
        s.keyframe_switches,
        s.sfm_accepted,
        s.sfm_rejected,
        s.tags_applied,
        s.tags_gated,
        s.tag_failures,
        odo.trajectory.path_length
    );
    write_file(&out_dir.join("summary.txt"), summary.as_bytes())?;
    Ok(odo.summary)
}
