use std::fmt::Write as _;

use super::kv::{non_negative, parse_entries, positive, Entry};
use crate::imgcore::{rotation_from_pitch, CameraModel, Region};
use crate::trainmouse::{KeyframePolicy, TemplateSpec, TrackerConfig};
use crate::{Error, Result};

/// Odometry camera description shared by run configs and dataset manifests.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraConfig {
    pub image_width: usize,
    pub image_height: usize,
    pub focal_px: f64,
    pub pixel_pitch_m: f64,
    /// Defaults to the image centre.
    pub principal_x_px: Option<f64>,
    pub principal_y_px: Option<f64>,
    pub mount_height_m: f64,
    /// Forward tilt from looking straight down.
    pub pitch_deg: f64,
    pub frame_rate_hz: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            image_width: 640,
            image_height: 480,
            focal_px: 500.0,
            pixel_pitch_m: 1e-5,
            principal_x_px: None,
            principal_y_px: None,
            mount_height_m: 2.0,
            pitch_deg: 20.0,
            frame_rate_hz: 60.0,
        }
    }
}

fn size(e: &Entry) -> Result<usize> {
    let v = e.integer()?;
    if v == 0 {
        return Err(e.invalid("must be positive"));
    }
    Ok(v as usize)
}

impl CameraConfig {
    /// Consumes a camera key; returns false for other keys.
    pub fn apply(&mut self, e: &Entry) -> Result<bool> {
        match e.key.as_str() {
            "image_width" => self.image_width = size(e)?,
            "image_height" => self.image_height = size(e)?,
            "focal_px" => self.focal_px = positive(e, e.number()?)?,
            "pixel_pitch_m" => self.pixel_pitch_m = positive(e, e.number()?)?,
            "principal_x_px" => self.principal_x_px = Some(e.number()?),
            "principal_y_px" => self.principal_y_px = Some(e.number()?),
            "mount_height_m" => self.mount_height_m = positive(e, e.number()?)?,
            "pitch_deg" => {
                let v = e.number()?;
                if !(0.0..90.0).contains(&v) {
                    return Err(e.invalid("must be in [0, 90)"));
                }
                self.pitch_deg = v;
            }
            "frame_rate_hz" => self.frame_rate_hz = positive(e, e.number()?)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn model(&self) -> Result<CameraModel> {
        let cam = CameraModel {
            focal_length: self.focal_px * self.pixel_pitch_m,
            pixel_pitch_x: self.pixel_pitch_m,
            pixel_pitch_y: self.pixel_pitch_m,
            principal_x: self
                .principal_x_px
                .unwrap_or((self.image_width as f64 - 1.0) / 2.0),
            principal_y: self
                .principal_y_px
                .unwrap_or((self.image_height as f64 - 1.0) / 2.0),
            width: self.image_width,
            height: self.image_height,
            mount_height: self.mount_height_m,
            frame_interval: 1.0 / self.frame_rate_hz,
            rect_rotation: rotation_from_pitch(self.pitch_deg.to_radians()),
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn echo(&self, out: &mut String) {
        let _ = writeln!(out, "image_width = {}", self.image_width);
        let _ = writeln!(out, "image_height = {}", self.image_height);
        let _ = writeln!(out, "focal_px = {}", self.focal_px);
        let _ = writeln!(out, "pixel_pitch_m = {}", self.pixel_pitch_m);
        if let Some(v) = self.principal_x_px {
            let _ = writeln!(out, "principal_x_px = {v}");
        }
        if let Some(v) = self.principal_y_px {
            let _ = writeln!(out, "principal_y_px = {v}");
        }
        let _ = writeln!(out, "mount_height_m = {}", self.mount_height_m);
        let _ = writeln!(out, "pitch_deg = {}", self.pitch_deg);
        let _ = writeln!(out, "frame_rate_hz = {}", self.frame_rate_hz);
    }

    /// Names the first parameter that differs from `other`.
    pub fn mismatch(&self, other: &CameraConfig) -> Option<String> {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
        let (a, b) = match (self.model(), other.model()) {
            (Ok(a), Ok(b)) => (a, b),
            _ => return Some("camera model".into()),
        };
        let checks = [
            ("image_width", a.width as f64, b.width as f64),
            ("image_height", a.height as f64, b.height as f64),
            ("focal_px", a.fx(), b.fx()),
            ("pixel_pitch_m", a.pixel_pitch_x, b.pixel_pitch_x),
            ("principal_x_px", a.principal_x, b.principal_x),
            ("principal_y_px", a.principal_y, b.principal_y),
            ("mount_height_m", a.mount_height, b.mount_height),
            ("pitch_deg", self.pitch_deg, other.pitch_deg),
            ("frame_rate_hz", self.frame_rate_hz, other.frame_rate_hz),
        ];
        checks
            .iter()
            .find(|(_, x, y)| !close(*x, *y))
            .map(|(k, x, y)| format!("{k}: {x} vs {y}"))
    }
}

/// Everything that controls an odometry run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub camera: CameraConfig,
    /// Top-view region, in rectified pixels; defaults to the full frame.
    pub rect_x0: i64,
    pub rect_y0: i64,
    pub rect_width: Option<usize>,
    pub rect_height: Option<usize>,
    /// Template position inside the top-view region.
    pub template_x: usize,
    pub template_y: usize,
    pub template_width: usize,
    pub template_height: usize,
    pub band_half_width_x: usize,
    pub band_half_width_y: usize,
    pub acquire_half_width_x: usize,
    pub acquire_half_width_y: usize,
    pub gradient_threshold: f64,
    pub keyframe_max_frames: usize,
    pub keyframe_velocity_threshold_mps: f64,
    pub sfm_enabled: bool,
    pub epipole_tol_px: f64,
    pub epipole_literal_normals: bool,
    pub corner_quality: f64,
    /// Strongest corners kept per frame.
    pub max_corners: usize,
    pub match_candidates: usize,
    pub match_radius_px: f64,
    /// SfM results further than this from the prediction are discarded.
    pub sfm_max_angle_deg: f64,
    pub process_noise_position: f64,
    pub process_noise_heading: f64,
    pub process_noise_speed: f64,
    pub initial_x_m: f64,
    pub initial_y_m: f64,
    pub initial_heading_rad: f64,
    pub initial_speed_mps: f64,
    pub initial_sigma_position_m: f64,
    pub initial_sigma_heading_rad: f64,
    pub initial_sigma_speed_mps: f64,
    pub velocity_sigma_floor_mps: f64,
    pub heading_sigma_floor_rad: f64,
    pub tags_enabled: bool,
    /// Corner noise used to propagate tag pose covariance.
    pub tag_corner_sigma_px: f64,
    /// Added to the propagated tag covariance.
    pub tag_sigma_position_m: f64,
    pub tag_sigma_heading_rad: f64,
    pub tag_gate_sigma: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            camera: CameraConfig::default(),
            rect_x0: 0,
            rect_y0: 0,
            rect_width: None,
            rect_height: None,
            template_x: 256,
            template_y: 40,
            template_width: 128,
            template_height: 64,
            band_half_width_x: 6,
            band_half_width_y: 6,
            acquire_half_width_x: 6,
            acquire_half_width_y: 80,
            gradient_threshold: 0.02,
            keyframe_max_frames: 4,
            keyframe_velocity_threshold_mps: 100.0,
            sfm_enabled: true,
            epipole_tol_px: 0.5,
            epipole_literal_normals: false,
            corner_quality: 0.01,
            max_corners: 600,
            match_candidates: 5,
            match_radius_px: 48.0,
            sfm_max_angle_deg: 5.0,
            process_noise_position: 1e-4,
            process_noise_heading: 1e-6,
            process_noise_speed: 1.0,
            initial_x_m: 0.0,
            initial_y_m: 0.0,
            initial_heading_rad: 0.0,
            initial_speed_mps: 0.0,
            initial_sigma_position_m: 0.01,
            initial_sigma_heading_rad: 0.005,
            initial_sigma_speed_mps: 1.0,
            velocity_sigma_floor_mps: 0.001,
            heading_sigma_floor_rad: 0.001,
            tags_enabled: true,
            tag_corner_sigma_px: 0.5,
            tag_sigma_position_m: 0.005,
            tag_sigma_heading_rad: 0.001,
            tag_gate_sigma: 5.0,
        }
    }
}

fn flag(e: &Entry) -> Result<bool> {
    match e.integer()? {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(e.invalid("must be 0 or 1")),
    }
}

fn count(e: &Entry) -> Result<usize> {
    Ok(e.integer()? as usize)
}

/// Parses a run configuration; keys absent from `text` keep their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut c = RunConfig::default();
    for e in parse_entries(text)? {
        if c.camera.apply(&e)? {
            continue;
        }
        let num = || e.number();
        match e.key.as_str() {
            "rect_x0" => c.rect_x0 = num()?.round() as i64,
            "rect_y0" => c.rect_y0 = num()?.round() as i64,
            "rect_width" => c.rect_width = Some(size(&e)?),
            "rect_height" => c.rect_height = Some(size(&e)?),
            "template_x" => c.template_x = count(&e)?,
            "template_y" => c.template_y = count(&e)?,
            "template_width" => c.template_width = size(&e)?,
            "template_height" => c.template_height = size(&e)?,
            "band_half_width_x" => c.band_half_width_x = size(&e)?,
            "band_half_width_y" => c.band_half_width_y = size(&e)?,
            "acquire_half_width_x" => c.acquire_half_width_x = size(&e)?,
            "acquire_half_width_y" => c.acquire_half_width_y = size(&e)?,
            "gradient_threshold" => c.gradient_threshold = positive(&e, num()?)?,
            "keyframe_max_frames" => c.keyframe_max_frames = size(&e)?,
            "keyframe_velocity_threshold_mps" => {
                c.keyframe_velocity_threshold_mps = positive(&e, num()?)?
            }
            "sfm_enabled" => c.sfm_enabled = flag(&e)?,
            "epipole_tol_px" => c.epipole_tol_px = positive(&e, num()?)?,
            "epipole_literal_normals" => c.epipole_literal_normals = flag(&e)?,
            "corner_quality" => {
                let v = num()?;
                if !(v > 0.0 && v <= 1.0) {
                    return Err(e.invalid("must be in (0, 1]"));
                }
                c.corner_quality = v;
            }
            "max_corners" => c.max_corners = size(&e)?,
            "match_candidates" => c.match_candidates = size(&e)?,
            "match_radius_px" => c.match_radius_px = positive(&e, num()?)?,
            "sfm_max_angle_deg" => c.sfm_max_angle_deg = positive(&e, num()?)?,
            "process_noise_position" => c.process_noise_position = non_negative(&e, num()?)?,
            "process_noise_heading" => c.process_noise_heading = non_negative(&e, num()?)?,
            "process_noise_speed" => c.process_noise_speed = non_negative(&e, num()?)?,
            "initial_x_m" => c.initial_x_m = num()?,
            "initial_y_m" => c.initial_y_m = num()?,
            "initial_heading_rad" => c.initial_heading_rad = num()?,
            "initial_speed_mps" => c.initial_speed_mps = num()?,
            "initial_sigma_position_m" => c.initial_sigma_position_m = positive(&e, num()?)?,
            "initial_sigma_heading_rad" => c.initial_sigma_heading_rad = positive(&e, num()?)?,
            "initial_sigma_speed_mps" => c.initial_sigma_speed_mps = positive(&e, num()?)?,
            "velocity_sigma_floor_mps" => c.velocity_sigma_floor_mps = positive(&e, num()?)?,
            "heading_sigma_floor_rad" => c.heading_sigma_floor_rad = positive(&e, num()?)?,
            "tags_enabled" => c.tags_enabled = flag(&e)?,
            "tag_corner_sigma_px" => c.tag_corner_sigma_px = positive(&e, num()?)?,
            "tag_sigma_position_m" => c.tag_sigma_position_m = positive(&e, num()?)?,
            "tag_sigma_heading_rad" => c.tag_sigma_heading_rad = positive(&e, num()?)?,
            "tag_gate_sigma" => c.tag_gate_sigma = positive(&e, num()?)?,
            _ => return Err(e.unknown()),
        }
    }
    c.validate()?;
    Ok(c)
}

impl RunConfig {
    pub fn region(&self) -> Region {
        Region::new(
            self.rect_x0,
            self.rect_y0,
            self.rect_width.unwrap_or(self.camera.image_width),
            self.rect_height.unwrap_or(self.camera.image_height),
        )
    }

    pub fn template(&self) -> TemplateSpec {
        TemplateSpec::new(
            self.template_x,
            self.template_y,
            self.template_width,
            self.template_height,
        )
    }

    pub fn tracker(&self) -> TrackerConfig {
        TrackerConfig {
            template: self.template(),
            half_width_x: self.band_half_width_x,
            half_width_y: self.band_half_width_y,
            acquire_half_width_x: self.acquire_half_width_x,
            acquire_half_width_y: self.acquire_half_width_y,
            gradient_threshold: self.gradient_threshold,
        }
    }

    pub fn keyframe_policy(&self) -> KeyframePolicy {
        KeyframePolicy {
            max_frames: self.keyframe_max_frames,
            velocity_threshold: self.keyframe_velocity_threshold_mps,
        }
    }

    /// Cross-field checks.
    pub fn validate(&self) -> Result<()> {
        self.camera.model()?;
        let r = self.region();
        self.template()
            .validate(r.width, r.height)
            .map_err(|e| Error::InvalidParameter(format!("template: {e}")))?;
        Ok(())
    }

    /// Every resolved setting as `key = value` lines.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        self.camera.echo(&mut s);
        let r = self.region();
        let b = |v: bool| u8::from(v);
        let lines: Vec<(&str, String)> = vec![
            ("rect_x0", r.x0.to_string()),
            ("rect_y0", r.y0.to_string()),
            ("rect_width", r.width.to_string()),
            ("rect_height", r.height.to_string()),
            ("template_x", self.template_x.to_string()),
            ("template_y", self.template_y.to_string()),
            ("template_width", self.template_width.to_string()),
            ("template_height", self.template_height.to_string()),
            ("band_half_width_x", self.band_half_width_x.to_string()),
            ("band_half_width_y", self.band_half_width_y.to_string()),
            (
                "acquire_half_width_x",
                self.acquire_half_width_x.to_string(),
            ),
            (
                "acquire_half_width_y",
                self.acquire_half_width_y.to_string(),
            ),
            ("gradient_threshold", self.gradient_threshold.to_string()),
            ("keyframe_max_frames", self.keyframe_max_frames.to_string()),
            (
                "keyframe_velocity_threshold_mps",
                self.keyframe_velocity_threshold_mps.to_string(),
            ),
            ("sfm_enabled", b(self.sfm_enabled).to_string()),
            ("epipole_tol_px", self.epipole_tol_px.to_string()),
            (
                "epipole_literal_normals",
                b(self.epipole_literal_normals).to_string(),
            ),
            ("corner_quality", self.corner_quality.to_string()),
            ("max_corners", self.max_corners.to_string()),
            ("match_candidates", self.match_candidates.to_string()),
            ("match_radius_px", self.match_radius_px.to_string()),
            ("sfm_max_angle_deg", self.sfm_max_angle_deg.to_string()),
            (
                "process_noise_position",
                self.process_noise_position.to_string(),
            ),
            (
                "process_noise_heading",
                self.process_noise_heading.to_string(),
            ),
            ("process_noise_speed", self.process_noise_speed.to_string()),
            ("initial_x_m", self.initial_x_m.to_string()),
            ("initial_y_m", self.initial_y_m.to_string()),
            ("initial_heading_rad", self.initial_heading_rad.to_string()),
            ("initial_speed_mps", self.initial_speed_mps.to_string()),
            (
                "initial_sigma_position_m",
                self.initial_sigma_position_m.to_string(),
            ),
            (
                "initial_sigma_heading_rad",
                self.initial_sigma_heading_rad.to_string(),
            ),
            (
                "initial_sigma_speed_mps",
                self.initial_sigma_speed_mps.to_string(),
            ),
            (
                "velocity_sigma_floor_mps",
                self.velocity_sigma_floor_mps.to_string(),
            ),
            (
                "heading_sigma_floor_rad",
                self.heading_sigma_floor_rad.to_string(),
            ),
            ("tags_enabled", b(self.tags_enabled).to_string()),
            ("tag_corner_sigma_px", self.tag_corner_sigma_px.to_string()),
            (
                "tag_sigma_position_m",
                self.tag_sigma_position_m.to_string(),
            ),
            (
                "tag_sigma_heading_rad",
                self.tag_sigma_heading_rad.to_string(),
            ),
            ("tag_gate_sigma", self.tag_gate_sigma.to_string()),
        ];
        for (k, v) in lines {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
