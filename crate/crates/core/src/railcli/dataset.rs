use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};

use super::config::CameraConfig;
use super::csvio::{read_table, write_file, CsvWriter};
use super::kv::{non_negative, parse_entries, positive};
use crate::imgcore::{decode_pgm, encode_pgm, CameraModel, Image, PixelPoint};
use crate::navfuse::{CameraMount, PlanarPose, TagObservation, TagWorldPose};
use crate::synthrail::{
    forward_mount, gen_ballast_texture, gen_sequence, gen_tag_sightings, place_tags,
    GroundTruthRecord, Segment, TagLayout, TrajectorySpec,
};
use crate::{Error, Result};

/// Trackside tags and the camera reading them.
#[derive(Debug, Clone, PartialEq)]
pub struct TagConfig {
    pub spacing_m: f64,
    pub lateral_m: f64,
    pub height_m: f64,
    pub side_m: f64,
    pub view_min_m: f64,
    pub view_max_m: f64,
    pub noise_px: f64,
    pub image_width: usize,
    pub image_height: usize,
    pub focal_px: f64,
    pub mount_yaw_deg: f64,
    pub mount_height_m: f64,
}

impl Default for TagConfig {
    fn default() -> Self {
        TagConfig {
            spacing_m: 0.0,
            lateral_m: 2.5,
            height_m: 2.5,
            side_m: 1.0,
            view_min_m: 1.0,
            view_max_m: 3.0,
            noise_px: 0.5,
            image_width: 2560,
            image_height: 1536,
            focal_px: 2500.0,
            mount_yaw_deg: 55.0,
            mount_height_m: 2.5,
        }
    }
}

impl TagConfig {
    pub fn enabled(&self) -> bool {
        self.spacing_m > 0.0
    }

    pub fn camera(&self, frame_interval: f64) -> Result<CameraModel> {
        CameraModel::centered(
            self.image_width,
            self.image_height,
            self.focal_px,
            self.mount_height_m,
            frame_interval,
            Matrix3::identity(),
        )
    }

    pub fn mount(&self) -> CameraMount {
        forward_mount(self.mount_yaw_deg.to_radians(), self.mount_height_m)
    }

    pub fn layout(&self, frame_interval: f64) -> Result<TagLayout> {
        Ok(TagLayout {
            spacing_m: self.spacing_m,
            lateral_m: self.lateral_m,
            height_m: self.height_m,
            side_m: self.side_m,
            view_min_m: self.view_min_m,
            view_max_m: self.view_max_m,
            corner_noise_px: self.noise_px,
            camera: self.camera(frame_interval)?,
            mount: self.mount(),
        })
    }
}

/// Everything `simulate` needs; also the dataset manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub camera: CameraConfig,
    pub segments: Vec<Segment>,
    pub noise_sigma: f64,
    pub seed: u64,
    pub world_scale_m: f64,
    pub texture_size: usize,
    pub texture_octaves: usize,
    pub initial: PlanarPose,
    pub tags: TagConfig,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            camera: CameraConfig::default(),
            segments: Vec::new(),
            noise_sigma: 0.0,
            seed: 0,
            world_scale_m: 0.002,
            texture_size: 4096,
            texture_octaves: 5,
            initial: PlanarPose {
                x: 0.0,
                y: 0.0,
                heading: 0.0,
            },
            tags: TagConfig::default(),
        }
    }
}

/// Parses a simulation spec or manifest. Returns the spec and the
/// `frame_count` entry when present.
pub fn parse_simulation_spec(text: &str) -> Result<(SimulationSpec, Option<usize>)> {
    let mut s = SimulationSpec::default();
    let mut frames = None;
    for e in parse_entries(text)? {
        if s.camera.apply(&e)? {
            continue;
        }
        let t = &mut s.tags;
        match e.key.as_str() {
            "segment" => {
                let v = e.numbers(3)?;
                if !(v[0] > 0.0) {
                    return Err(e.invalid("segment duration must be positive"));
                }
                s.segments.push(Segment {
                    duration: v[0],
                    speed: v[1],
                    yaw_rate: v[2],
                });
            }
            "noise_sigma" => s.noise_sigma = non_negative(&e, e.number()?)?,
            "seed" => s.seed = e.integer()?,
            "world_scale_m" => s.world_scale_m = positive(&e, e.number()?)?,
            "texture_size" => {
                let v = e.integer()? as usize;
                if v < 256 {
                    return Err(e.invalid("must be at least 256"));
                }
                s.texture_size = v;
            }
            "texture_octaves" => {
                let v = e.integer()? as usize;
                if v == 0 {
                    return Err(e.invalid("must be positive"));
                }
                s.texture_octaves = v;
            }
            "initial_x_m" => s.initial.x = e.number()?,
            "initial_y_m" => s.initial.y = e.number()?,
            "initial_heading_rad" => s.initial.heading = e.number()?,
            "frame_count" => frames = Some(e.integer()? as usize),
            "tag_spacing_m" => t.spacing_m = non_negative(&e, e.number()?)?,
            "tag_lateral_m" => t.lateral_m = e.number()?,
            "tag_height_m" => t.height_m = e.number()?,
            "tag_side_m" => t.side_m = positive(&e, e.number()?)?,
            "tag_view_min_m" => t.view_min_m = non_negative(&e, e.number()?)?,
            "tag_view_max_m" => t.view_max_m = positive(&e, e.number()?)?,
            "tag_noise_px" => t.noise_px = non_negative(&e, e.number()?)?,
            "tag_image_width" => t.image_width = positive(&e, e.integer()? as f64)? as usize,
            "tag_image_height" => t.image_height = positive(&e, e.integer()? as f64)? as usize,
            "tag_focal_px" => t.focal_px = positive(&e, e.number()?)?,
            "tag_mount_yaw_deg" => t.mount_yaw_deg = e.number()?,
            "tag_mount_height_m" => t.mount_height_m = positive(&e, e.number()?)?,
            _ => return Err(e.unknown()),
        }
    }
    if s.segments.is_empty() {
        return Err(Error::Config {
            line: 0,
            reason: "at least one `segment = duration speed yaw_rate` is required".into(),
        });
    }
    if s.tags.enabled() && s.tags.view_max_m <= s.tags.view_min_m {
        return Err(Error::Config {
            line: 0,
            reason: "tag_view_max_m must exceed tag_view_min_m".into(),
        });
    }
    s.trajectory()?.validate()?;
    Ok((s, frames))
}

impl SimulationSpec {
    pub fn trajectory(&self) -> Result<TrajectorySpec> {
        Ok(TrajectorySpec {
            segments: self.segments.clone(),
            frame_rate: self.camera.frame_rate_hz,
            camera: self.camera.model()?,
            noise: self.noise_sigma,
            seed: self.seed,
            world_scale: self.world_scale_m,
            initial: self.initial,
        })
    }

    pub fn manifest(&self, frame_count: usize) -> String {
        let mut s = String::new();
        self.camera.echo(&mut s);
        for g in &self.segments {
            let _ = writeln!(s, "segment = {} {} {}", g.duration, g.speed, g.yaw_rate);
        }
        let t = &self.tags;
        let lines: Vec<(&str, String)> = vec![
            ("noise_sigma", self.noise_sigma.to_string()),
            ("seed", self.seed.to_string()),
            ("world_scale_m", self.world_scale_m.to_string()),
            ("texture_size", self.texture_size.to_string()),
            ("texture_octaves", self.texture_octaves.to_string()),
            ("initial_x_m", self.initial.x.to_string()),
            ("initial_y_m", self.initial.y.to_string()),
            ("initial_heading_rad", self.initial.heading.to_string()),
            ("tag_spacing_m", t.spacing_m.to_string()),
            ("tag_lateral_m", t.lateral_m.to_string()),
            ("tag_height_m", t.height_m.to_string()),
            ("tag_side_m", t.side_m.to_string()),
            ("tag_view_min_m", t.view_min_m.to_string()),
            ("tag_view_max_m", t.view_max_m.to_string()),
            ("tag_noise_px", t.noise_px.to_string()),
            ("tag_image_width", t.image_width.to_string()),
            ("tag_image_height", t.image_height.to_string()),
            ("tag_focal_px", t.focal_px.to_string()),
            ("tag_mount_yaw_deg", t.mount_yaw_deg.to_string()),
            ("tag_mount_height_m", t.mount_height_m.to_string()),
            ("frame_count", frame_count.to_string()),
        ];
        for (k, v) in lines {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// A sighting as stored in `tags.csv`: the observation plus the surveyed
/// pose of the tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagRecord {
    pub observation: TagObservation,
    pub world: TagWorldPose,
}

pub const MANIFEST: &str = "manifest.txt";
pub const GROUND_TRUTH: &str = "ground_truth.csv";
pub const TAGS: &str = "tags.csv";
pub const WARNINGS: &str = "warnings.txt";

pub fn frame_path(dir: &Path, k: usize) -> PathBuf {
    dir.join("frames").join(format!("{:06}.pgm", k + 1))
}

pub fn ground_truth_csv(truth: &[GroundTruthRecord]) -> String {
    let mut w = CsvWriter::new(&["t", "x", "y", "heading", "v_l", "v_s", "dy_px", "dx_px"]);
    for g in truth {
        w.row([g.t, g.x, g.y, g.heading, g.v_l, g.v_s, g.dy_px, g.dx_px]);
    }
    w.into_string()
}

pub const TAG_COLUMNS: [&str; 17] = [
    "t", "tag_id", "u0", "v0", "u1", "v1", "u2", "v2", "u3", "v3", "x", "y", "z", "yaw", "pitch",
    "roll", "side",
];

pub fn tags_csv(records: &[TagRecord]) -> String {
    let mut w = CsvWriter::new(&TAG_COLUMNS);
    for r in records {
        let o = &r.observation;
        let mut f = vec![o.t, o.tag_id as f64];
        for c in &o.corners {
            f.extend([c.u, c.v]);
        }
        let p = r.world.position;
        f.extend([
            p.x,
            p.y,
            p.z,
            r.world.yaw,
            r.world.pitch,
            r.world.roll,
            o.side,
        ]);
        w.row(f);
    }
    w.into_string()
}

/// Tag sightings along a trajectory, empty when tags are disabled.
pub fn tag_records(
    spec: &SimulationSpec,
    traj: &TrajectorySpec,
    truth: &[GroundTruthRecord],
) -> Result<Vec<TagRecord>> {
    let mut records = Vec::new();
    if spec.tags.enabled() {
        let layout = spec.tags.layout(traj.camera.frame_interval)?;
        let tags = place_tags(traj, &layout)?;
        for s in gen_tag_sightings(truth, &tags, &layout, spec.seed)? {
            let world = tags
                .iter()
                .find(|t| t.id == s.observation.tag_id)
                .expect("sighted tag exists")
                .world;
            records.push(TagRecord {
                observation: s.observation,
                world,
            });
        }
    }
    Ok(records)
}

/// Renders a dataset into `dir`; returns the number of frames written.
pub fn simulate(spec: &SimulationSpec, dir: &Path) -> Result<usize> {
    let traj = spec.trajectory()?;
    let texture = gen_ballast_texture(spec.seed, spec.texture_size, spec.texture_octaves)?;
    let seq = gen_sequence(&traj, &texture)?;
    let frames = dir.join("frames");
    std::fs::create_dir_all(&frames).map_err(|e| Error::io(&frames, e))?;
    for k in 0..seq.len() {
        let img = seq.frame(k)?;
        write_file(&frame_path(dir, k), &encode_pgm(&img.image, u16::MAX))?;
    }
    write_file(
        &dir.join(GROUND_TRUTH),
        ground_truth_csv(&seq.truth).as_bytes(),
    )?;
    let records = tag_records(spec, &traj, &seq.truth)?;
    write_file(&dir.join(TAGS), tags_csv(&records).as_bytes())?;
    let warnings: String = seq
        .truth
        .iter()
        .filter(|g| g.aliasing)
        .map(|g| {
            format!(
                "frame {}: displacement ({}, {}) px exceeds half the frame\n",
                g.frame, g.dx_px, g.dy_px
            )
        })
        .collect();
    if !warnings.is_empty() {
        write_file(&dir.join(WARNINGS), warnings.as_bytes())?;
    }
    write_file(&dir.join(MANIFEST), spec.manifest(seq.len()).as_bytes())?;
    Ok(seq.len())
}

/// A dataset directory opened for reading.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub spec: SimulationSpec,
    pub frame_count: usize,
    pub manifest_text: String,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let (spec, frames) = parse_simulation_spec(&text)
            .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
        let frame_count =
            frames.ok_or_else(|| Error::Dataset("manifest lacks frame_count".into()))?;
        Ok(Dataset {
            dir: dir.to_path_buf(),
            spec,
            frame_count,
            manifest_text: text,
        })
    }

    pub fn frame(&self, k: usize) -> Result<Image> {
        let p = frame_path(&self.dir, k);
        let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        decode_pgm(&bytes)
    }

    pub fn tag_records(&self) -> Result<Vec<TagRecord>> {
        let path = self.dir.join(TAGS);
        if !path.exists() {
            return Ok(Vec::new());
        }
        read_tag_records(&path)
    }
}

pub fn read_tag_records(path: &Path) -> Result<Vec<TagRecord>> {
    let t = read_table(path)?;
    let idx: Vec<usize> = TAG_COLUMNS
        .iter()
        .map(|c| t.require(c, path))
        .collect::<Result<_>>()?;
    Ok(t.rows
        .iter()
        .map(|r| {
            let g = |i: usize| r[idx[i]];
            TagRecord {
                observation: TagObservation {
                    t: g(0),
                    tag_id: g(1) as u32,
                    corners: std::array::from_fn(|c| PixelPoint::new(g(2 + 2 * c), g(3 + 2 * c))),
                    side: g(16),
                },
                world: TagWorldPose {
                    position: Vector3::new(g(10), g(11), g(12)),
                    yaw: g(13),
                    pitch: g(14),
                    roll: g(15),
                },
            }
        })
        .collect())
}

/// Ground-truth rows (`frame` is the row index, `aliasing` is not stored).
pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruthRecord>> {
    let t = read_table(path)?;
    let c: Vec<usize> = ["t", "x", "y", "heading", "v_l", "v_s", "dy_px", "dx_px"]
        .iter()
        .map(|n| t.require(n, path))
        .collect::<Result<_>>()?;
    Ok(t.rows
        .iter()
        .enumerate()
        .map(|(i, r)| GroundTruthRecord {
            frame: i as u64,
            t: r[c[0]],
            x: r[c[1]],
            y: r[c[2]],
            heading: r[c[3]],
            v_l: r[c[4]],
            v_s: r[c[5]],
            dy_px: r[c[6]],
            dx_px: r[c[7]],
            aliasing: false,
        })
        .collect())
}
