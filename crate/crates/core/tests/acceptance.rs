//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use railvo::epipolar::{
    eight_point_pose, epipole_least_squares, filter_flow_by_epipole, flow_normal,
    planar_flow_covariance, predict_epipole, FlowVector, NormalConvention,
};
use railvo::imgcore::{CameraModel, Image, MaskedImage, PixelPoint};
use railvo::navfuse::tag_planar_pose;
use railvo::railcli::{
    cmd_evaluate, cmd_odometry, cmd_plot, cmd_simulate, drift_csv, emit_plot, evaluate_samples,
    metrics_csv, tag_records, CameraConfig, CsvWriter, DriftSample, EstimateSample, FrameOutput,
    Metrics, Odometry, PlotKind, RunConfig, RunSummary, RunWriters, Series, SimulationSpec,
    TagConfig, TagRecord, TagSensor,
};
use railvo::synthrail::{
    gen_ballast_texture, gen_match_candidates_with_decoys, gen_sequence, DecoySpec,
    GroundTruthRecord, Segment,
};
use railvo::trainmouse::{
    displacement_to_velocity, subpixel_refine, DisplacementMeasurement, TemplateSpec,
};

type Artifacts = Vec<(String, Vec<u8>)>;

/// Intensity noise of the synthetic runs.
const NOISE: f64 = 0.01;

struct Outcome {
    pass: bool,
    detail: String,
    artifacts: Artifacts,
}

fn camera(
    width: usize,
    height: usize,
    focal_px: f64,
    pitch_deg: f64,
    frame_rate_hz: f64,
) -> CameraConfig {
    CameraConfig {
        image_width: width,
        image_height: height,
        focal_px,
        pitch_deg,
        frame_rate_hz,
        mount_height_m: 2.0,
        ..CameraConfig::default()
    }
}

fn straight(cam: &CameraConfig, speed: f64, length: f64, noise: f64, seed: u64) -> SimulationSpec {
    SimulationSpec {
        camera: cam.clone(),
        segments: vec![Segment {
            duration: length / speed,
            speed,
            yaw_rate: 0.0,
        }],
        noise_sigma: noise,
        seed,
        world_scale_m: 0.004,
        texture_size: 2048,
        texture_octaves: 5,
        ..SimulationSpec::default()
    }
}

/// Tracker set up for the 320x240 desk cameras.
fn small_config(cam: &CameraConfig, speed: f64, max_frames: usize) -> RunConfig {
    RunConfig {
        camera: cam.clone(),
        template_x: 96,
        template_y: 16,
        template_width: 128,
        template_height: 48,
        acquire_half_width_y: 40,
        // Gradient gate tuned to the image noise.
        gradient_threshold: 5.0 * NOISE,
        keyframe_max_frames: max_frames,
        sfm_enabled: false,
        initial_speed_mps: speed,
        ..RunConfig::default()
    }
}

struct Run {
    outputs: Vec<FrameOutput>,
    truth: Vec<GroundTruthRecord>,
    tags: Vec<TagRecord>,
    summary: RunSummary,
    writers: RunWriters,
    process_secs: f64,
}

impl Run {
    fn estimate(&self) -> Vec<EstimateSample> {
        self.outputs
            .iter()
            .map(|o| EstimateSample {
                t: o.state.t,
                x: o.state.x,
                y: o.state.y,
                v: o.state.v,
            })
            .collect()
    }

    fn metrics(&self) -> railvo::Result<(Metrics, Vec<DriftSample>)> {
        evaluate_samples(
            &self.estimate(),
            &self.truth,
            Some(self.summary.keyframe_switches),
        )
    }

    fn position_error(&self, k: usize) -> f64 {
        let (s, g) = (&self.outputs[k].state, &self.truth[k]);
        (s.x - g.x).hypot(s.y - g.y)
    }

    fn artifacts(&self, name: &str) -> railvo::Result<Artifacts> {
        let (m, drift) = self.metrics()?;
        Ok(vec![
            (
                format!("{name}/displacement.csv"),
                self.writers.displacement.as_str().as_bytes().to_vec(),
            ),
            (
                format!("{name}/pose.csv"),
                self.writers.pose.as_str().as_bytes().to_vec(),
            ),
            (
                format!("{name}/trajectory.csv"),
                self.writers.trajectory.as_str().as_bytes().to_vec(),
            ),
            (format!("{name}/metrics.csv"), metrics_csv(&m).into_bytes()),
            (format!("{name}/drift.csv"), drift_csv(&drift).into_bytes()),
        ])
    }
}

fn drive(spec: &SimulationSpec, cfg: &RunConfig, texture: &Image) -> railvo::Result<Run> {
    let traj = spec.trajectory()?;
    let seq = gen_sequence(&traj, texture)?;
    let tags = tag_records(spec, &traj, &seq.truth)?;
    let tf = traj.camera.frame_interval;
    let sensor = if tags.is_empty() {
        None
    } else {
        Some(TagSensor {
            camera: spec.tags.camera(tf)?,
            mount: spec.tags.mount(),
        })
    };
    let mut odo = Odometry::new(cfg, sensor)?;
    let mut writers = RunWriters::default();
    let mut outputs = Vec::with_capacity(seq.len());
    let mut process_secs = 0.0;
    let mut next_tag = 0;
    for k in 0..seq.len() {
        let t = seq.truth[k].t;
        let first = next_tag;
        while next_tag < tags.len() && tags[next_tag].observation.t <= t + 1e-9 {
            next_tag += 1;
        }
        let img = seq.frame(k)?;
        let started = Instant::now();
        let out = odo.process(k as u64, t, &img.image, &tags[first..next_tag])?;
        process_secs += started.elapsed().as_secs_f64();
        writers.push(&out);
        outputs.push(out);
    }
    Ok(Run {
        outputs,
        truth: seq.truth,
        tags,
        summary: odo.summary,
        writers,
        process_secs,
    })
}

fn texture_for(spec: &SimulationSpec) -> railvo::Result<Image> {
    gen_ballast_texture(spec.seed, spec.texture_size, spec.texture_octaves)
}

fn svg(name: &str, series: &[Series], kind: PlotKind) -> railvo::Result<(String, Vec<u8>)> {
    Ok((name.to_string(), emit_plot(series, kind)?.into_bytes()))
}

fn rmse(errors: impl Iterator<Item = f64>) -> f64 {
    let (mut sq, mut n) = (0.0, 0usize);
    for e in errors {
        sq += e * e;
        n += 1;
    }
    (sq / n as f64).sqrt()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn subpixel_necessity() -> railvo::Result<Outcome> {
    let started = Instant::now();
    let cam = camera(320, 240, 250.0, 0.0, 60.0);
    let per_px = cam.model()?.ground_per_px_y();
    let px_per_frame = 10.4;
    let speed = px_per_frame * per_px * cam.frame_rate_hz;
    let spec = straight(&cam, speed, 5.0 * speed, NOISE, 101);
    let run = drive(&spec, &small_config(&cam, speed, 1), &texture_for(&spec)?)?;
    let frames = &run.outputs[1..];
    let truth = &run.truth[1..];
    let pixel: Vec<f64> = frames.iter().map(|o| o.displacement.y_p as f64).collect();
    let sub: Vec<f64> = frames.iter().map(|o| o.displacement.total().1).collect();
    let on_grid = pixel.iter().all(|p| p.fract() == 0.0);
    let rmse_pixel = rmse(pixel.iter().zip(truth).map(|(p, g)| p - g.dy_px));
    let rmse_sub = rmse(sub.iter().zip(truth).map(|(p, g)| p - g.dy_px));
    let secs = started.elapsed().as_secs_f64();
    let pass = on_grid
        && run.summary.tracking_failures == 0
        && rmse_sub < 0.1
        && rmse_sub < rmse_pixel / 4.0
        && secs < 60.0;

    let to_mps = per_px * cam.frame_rate_hz;
    let series = |label: &str, v: &[f64]| Series {
        label: label.into(),
        points: v
            .iter()
            .zip(truth)
            .map(|(d, g)| (g.t, d * to_mps))
            .collect(),
    };
    let true_v: Vec<f64> = truth.iter().map(|g| g.dy_px).collect();
    let mut artifacts = run.artifacts("c1")?;
    artifacts.push(svg(
        "c1/velocity.svg",
        &[
            series("truth", &true_v),
            series("pixel only", &pixel),
            series("sub-pixel", &sub),
        ],
        PlotKind::Velocity,
    )?);
    Ok(Outcome {
        pass,
        detail: format!(
            "{} frames at {px_per_frame} px/frame, pixel-only on integer grid: {on_grid}, \
             RMSE pixel-only {rmse_pixel:.4} px/frame, sub-pixel {rmse_sub:.4} px/frame, {secs:.1} s",
            frames.len()
        ),
        artifacts,
    })
}

fn keyframe_drift() -> railvo::Result<Outcome> {
    let cam = camera(320, 240, 250.0, 0.0, 30.0);
    // 37.917 px/frame, 151.67 px per keyframe.
    let speed = 9.1;
    let mut errors = [Vec::new(), Vec::new()];
    let mut worst_pct: f64 = 0.0;
    let mut switches_exact = true;
    let mut failures = 0;
    let mut artifacts = Artifacts::new();
    let mut drift_series = Vec::new();
    for seed in 0..10u64 {
        let spec = straight(&cam, speed, 200.0, NOISE, 2000 + seed);
        let texture = texture_for(&spec)?;
        for (slot, max_frames) in [1usize, 4].into_iter().enumerate() {
            let run = drive(&spec, &small_config(&cam, speed, max_frames), &texture)?;
            let (m, drift) = run.metrics()?;
            let updates = run.outputs.len() - 1;
            switches_exact &= run.summary.keyframe_switches == updates / max_frames;
            failures += run.summary.tracking_failures;
            errors[slot].push(m.distance_error_m.abs());
            if max_frames == 4 {
                worst_pct = worst_pct.max(m.distance_error_pct.abs());
            }
            if seed == 0 {
                drift_series.push(Series {
                    label: format!("max_frames {max_frames}"),
                    points: drift
                        .iter()
                        .map(|d| (d.true_distance_m, d.distance_error_m))
                        .collect(),
                });
            }
            artifacts.extend(run.artifacts(&format!("c2/seed{seed}_kf{max_frames}"))?);
        }
    }
    artifacts.push(svg("c2/drift.svg", &drift_series, PlotKind::Drift)?);
    let (med1, med4) = (median(&errors[0]), median(&errors[1]));
    let pass = med4 <= med1 && switches_exact && worst_pct < 0.3 && failures == 0;
    Ok(Outcome {
        pass,
        detail: format!(
            "10 runs x 200 m, median |error| max_frames=1 {med1:.4} m, max_frames=4 {med4:.4} m, \
             switches exactly 1/4: {switches_exact}, worst relative error (max_frames=4) {worst_pct:.4} %"
        ),
        artifacts,
    })
}

fn rotation_error_deg(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    Rotation3::from_matrix_unchecked(a * b.transpose())
        .angle()
        .to_degrees()
}

fn epipole_gate() -> railvo::Result<Outcome> {
    let cam = CameraModel::centered(640, 480, 500.0, 2.0, 1.0 / 60.0, Matrix3::identity())?;
    let mut rows = CsvWriter::new(&[
        "seed",
        "gated",
        "decoys",
        "true_kept",
        "yaw_error_deg",
        "ungated_error_deg",
    ]);
    let (mut worst_gated, mut best_ungated, mut min_kept, mut decoys_total) =
        (0.0f64, f64::INFINITY, 1.0f64, 0);
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let yaw = rng.random_range(-1.0f64..1.0).to_radians();
        let r = *Rotation3::from_euler_angles(0.0, yaw, 0.0).matrix();
        let motion = Vector3::new(
            rng.random_range(-0.2..0.2),
            rng.random_range(-0.1..0.1),
            1.0,
        );
        let spec = DecoySpec {
            n_points: 200,
            n_decoys: 3,
            decoy_offline_px: 5.0,
            match_noise_px: 0.05,
            depth_min: 3.0,
            depth_max: 12.0,
            seed: 300 + seed,
        };
        let scene = gen_match_candidates_with_decoys(&r, &motion, &cam, &spec)?;
        let e = predict_epipole(&motion, &cam)?;
        let gated = filter_flow_by_epipole(&scene.sets, &r, &cam, &e, 0.5)?;
        let decoys = gated
            .iter()
            .filter(|s| s.candidate != scene.true_candidate[s.query])
            .count();
        let kept = (gated.len() - decoys) as f64 / scene.sets.len() as f64;
        let flow: Vec<FlowVector> = gated.iter().map(|s| s.flow).collect();
        let err = rotation_error_deg(
            &eight_point_pose(&flow, &cam)?.after_rotation(&r).rotation,
            &r,
        );
        let raw = filter_flow_by_epipole(&scene.sets, &r, &cam, &e, f64::INFINITY)?;
        let raw_flow: Vec<FlowVector> = raw.iter().map(|s| s.flow).collect();
        // A pose that cannot be recovered at all counts as an unbounded error.
        let ungated = eight_point_pose(&raw_flow, &cam)
            .map(|p| rotation_error_deg(&p.after_rotation(&r).rotation, &r))
            .unwrap_or(f64::INFINITY);
        rows.row([
            seed as f64,
            gated.len() as f64,
            decoys as f64,
            kept,
            err,
            ungated,
        ]);
        worst_gated = worst_gated.max(err);
        best_ungated = best_ungated.min(ungated);
        min_kept = min_kept.min(kept);
        decoys_total += decoys;
    }
    let pass = decoys_total == 0 && min_kept >= 0.95 && worst_gated < 0.02 && best_ungated > 0.2;
    Ok(Outcome {
        pass,
        detail: format!(
            "10 scenes, decoys kept {decoys_total}, min true kept {:.1} %, worst gated rotation error \
             {worst_gated:.5} deg, smallest ungated error {best_ungated:.3} deg",
            100.0 * min_kept
        ),
        artifacts: vec![("c3/gate.csv".into(), rows.into_string().into_bytes())],
    })
}

fn line_cost(flow: &[FlowVector], e: Vector2<f64>) -> f64 {
    flow.iter()
        .map(|f| {
            let n = flow_normal(f, NormalConvention::Unit);
            n.dot(&(e - Vector2::new(f.start.u, f.start.v))).powi(2)
        })
        .sum()
}

/// Grid search: a coarse 1 px grid over a wide window, then grids of 0.01 px
/// and finer, each spanning a few cells of the previous level.
fn brute_force_epipole(flow: &[FlowVector], lo: Vector2<f64>, hi: Vector2<f64>) -> Vector2<f64> {
    let search = |center: Vector2<f64>, half: Vector2<f64>, step: f64| {
        let nx = (2.0 * half.x / step).round() as i64;
        let ny = (2.0 * half.y / step).round() as i64;
        let mut best = (f64::INFINITY, center);
        for j in 0..=ny {
            for i in 0..=nx {
                let p = center - half + Vector2::new(i as f64 * step, j as f64 * step);
                let c = line_cost(flow, p);
                if c < best.0 {
                    best = (c, p);
                }
            }
        }
        best.1
    };
    let mut e = search((lo + hi) / 2.0, (hi - lo) / 2.0, 1.0);
    for step in [0.01, 1e-4, 1e-6] {
        let span = 100.0 * step;
        e = search(e, Vector2::new(span, span), step);
    }
    e
}

fn epipole_oracle() -> railvo::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let noise = Normal::new(0.0, 0.5).expect("valid sigma");
    let mut rows = CsvWriter::new(&["set", "ls_u", "ls_v", "grid_u", "grid_v", "difference_px"]);
    let mut worst: f64 = 0.0;
    for set in 0..20 {
        let e0 = Vector2::new(
            rng.random_range(100.0..540.0),
            rng.random_range(80.0..400.0),
        );
        let n = rng.random_range(10..40);
        let flow: Vec<FlowVector> = (0..n)
            .map(|_| {
                let s = Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
                let d = (s - e0) * rng.random_range(0.02..0.1);
                let end = s + d + Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng));
                FlowVector::new(PixelPoint::new(s.x, s.y), PixelPoint::new(end.x, end.y))
            })
            .collect();
        let ls = epipole_least_squares(&flow, NormalConvention::Unit)?;
        let bf = brute_force_epipole(
            &flow,
            e0 - Vector2::new(60.0, 60.0),
            e0 + Vector2::new(60.0, 60.0),
        );
        let diff = (Vector2::new(ls.u, ls.v) - bf).norm();
        worst = worst.max(diff);
        rows.row([set as f64, ls.u, ls.v, bf.x, bf.y, diff]);
    }
    Ok(Outcome {
        pass: worst < 1e-4,
        detail: format!("20 line sets, largest least-squares vs grid difference {worst:.2e} px"),
        artifacts: vec![("c4/oracle.csv".into(), rows.into_string().into_bytes())],
    })
}

fn flow_covariance() -> railvo::Result<Outcome> {
    let cam = CameraModel::centered(640, 480, 500.0, 2.0, 1.0 / 60.0, Matrix3::identity())?;
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut rows = CsvWriter::new(&["set", "p11", "p12", "p22", "min_eigenvalue", "scale_error"]);
    let (mut psd, mut symmetric, mut scaling) = (true, true, true);
    for set in 0..100 {
        let n = rng.random_range(8..60);
        let flow: Vec<FlowVector> = (0..n)
            .map(|_| {
                let s = PixelPoint::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
                let e = PixelPoint::new(
                    s.u + rng.random_range(-8.0..8.0),
                    s.v + rng.random_range(-8.0..8.0),
                );
                FlowVector::new(s, e)
            })
            .collect();
        let x_e = PixelPoint::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
        let dx = rng.random_range(1.0..40.0);
        let p = planar_flow_covariance(&flow, x_e, dx, &cam, NormalConvention::Unit)?;
        symmetric &= p[(0, 1)] == p[(1, 0)];
        let eig = p.symmetric_eigenvalues();
        let min_eig = eig.min();
        psd &= min_eig >= -1e-12 * eig.max().abs();
        let mut scale_err: f64 = 0.0;
        for c in [0.5, 2.0, 3.7] {
            let q = planar_flow_covariance(&flow, x_e, c * dx, &cam, NormalConvention::Unit)?;
            scale_err = scale_err.max((q - p * (c * c)).norm() / (p.norm() * c * c));
        }
        scaling &= scale_err < 1e-12;
        rows.row([
            set as f64,
            p[(0, 0)],
            p[(0, 1)],
            p[(1, 1)],
            min_eig,
            scale_err,
        ]);
    }
    // Lines through the epipole, on exactly representable coordinates.
    let x_e = PixelPoint::new(300.0, 200.0);
    let through: Vec<FlowVector> = (1..=12)
        .map(|i| {
            let d = ((i % 5) as f64 - 2.0, (i % 3) as f64 + 1.0);
            let (a, b) = (i as f64, i as f64 + 3.0);
            FlowVector::new(
                PixelPoint::new(x_e.u + a * d.0, x_e.v + a * d.1),
                PixelPoint::new(x_e.u + b * d.0, x_e.v + b * d.1),
            )
        })
        .collect();
    let zero = planar_flow_covariance(&through, x_e, 10.0, &cam, NormalConvention::Unit)?;
    let exact_zero = zero.iter().all(|v| *v == 0.0);
    Ok(Outcome {
        pass: psd && symmetric && scaling && exact_zero,
        detail: format!(
            "100 sets: symmetric {symmetric}, PSD {psd}, scales as dx^2 {scaling}; \
             lines through x_e give exactly 0: {exact_zero}"
        ),
        artifacts: vec![("c5/covariance.csv".into(), rows.into_string().into_bytes())],
    })
}

fn velocity_units() -> railvo::Result<Outcome> {
    let cam = CameraModel::centered(640, 480, 1000.0, 2.0, 1.0 / 60.0, Matrix3::identity())?;
    let meas = DisplacementMeasurement {
        y_p: 10,
        ..DisplacementMeasurement::zero(0)
    };
    let v = displacement_to_velocity(&meas, &cam);
    let reference_ok = (v.v_l - 1.2).abs() < 1e-12;

    // A brightness ramp moved by a fraction of a pixel gives the same
    // response at every pixel.
    let ramp = |shift: f64| {
        MaskedImage::from(Image::from_fn(64, 64, |_, y| {
            0.2 + 0.01 * (y as f64 - shift)
        }))
    };
    let t = TemplateSpec::new(8, 8, 48, 32);
    let uniform = subpixel_refine(&ramp(0.0), &t, &ramp(0.3), (0, 0), 0.001)?;
    let uniform_ok = uniform.sigma_z_px.abs() < 1e-12 && (uniform.dy - 0.3).abs() < 1e-6;

    let texture = gen_ballast_texture(66, 512, 5)?;
    let noise = Normal::new(0.0, NOISE).expect("valid sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let reference = MaskedImage::from(Image::from_fn(400, 400, |x, y| texture.get(x + 50, y + 50)));
    let current = MaskedImage::from(Image::from_fn(400, 400, |x, y| {
        let v = texture
            .sample_bilinear(x as f64 + 50.0 - 0.3, y as f64 + 50.0 - 0.45)
            .expect("inside texture");
        v + noise.sample(&mut rng)
    }));
    let mut rows = CsvWriter::new(&["template_px", "n_contrib", "sigma_z_px", "sigma_v_mps"]);
    let mut pts = Vec::new();
    for side in [16usize, 32, 64, 128, 256, 384] {
        let t = TemplateSpec::new(8, 8, side, side);
        let s = subpixel_refine(&reference, &t, &current, (0, 0), 0.02)?;
        let m = DisplacementMeasurement {
            dx: s.dx,
            dy: s.dy,
            n_contrib: s.n_contrib,
            sigma_z_px: s.sigma_z_px,
            ..DisplacementMeasurement::zero(0)
        };
        let sv = displacement_to_velocity(&m, &cam).sigma_vz;
        rows.row([(side * side) as f64, s.n_contrib as f64, s.sigma_z_px, sv]);
        pts.push(((s.n_contrib as f64).ln(), sv.ln()));
    }
    let n = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.0).sum::<f64>() / n,
        pts.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let slope_ok = (slope + 0.5).abs() <= 0.1;
    Ok(Outcome {
        pass: reference_ok && uniform_ok && slope_ok,
        detail: format!(
            "v_l = {:.6} m/s for 10 px, uniform-response sigma_z = {:.1e}, log-log slope of sigma_v {slope:.3}",
            v.v_l, uniform.sigma_z_px
        ),
        artifacts: vec![("c6/sigma.csv".into(), rows.into_string().into_bytes())],
    })
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn tag_fusion() -> railvo::Result<Outcome> {
    let cam = camera(320, 240, 250.0, 20.0, 30.0);
    let speed = 10.0;
    let mut spec = straight(&cam, speed, 500.0, NOISE, 77);
    spec.tags = TagConfig {
        spacing_m: 100.0,
        ..TagConfig::default()
    };
    let texture = texture_for(&spec)?;
    let mut cfg = small_config(&cam, speed, 4);
    cfg.template_height = 32;
    cfg.sfm_enabled = true;
    cfg.match_radius_px = 80.0;

    cfg.tags_enabled = false;
    let free = drive(&spec, &cfg, &texture)?;
    cfg.tags_enabled = true;
    let tagged = drive(&spec, &cfg, &texture)?;

    let dist: Vec<f64> = free.truth.iter().map(|g| g.x).collect();
    let err: Vec<f64> = (0..free.outputs.len())
        .map(|k| free.position_error(k))
        .collect();
    let slope = least_squares_slope(&dist, &err);
    let block_mean = |lo: f64, hi: f64| {
        let v: Vec<f64> = dist
            .iter()
            .zip(&err)
            .filter(|(d, _)| **d >= lo && **d < hi)
            .map(|(_, e)| *e)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let blocks: Vec<f64> = (0..5)
        .map(|b| block_mean(100.0 * b as f64, 100.0 * (b + 1) as f64))
        .collect();
    let grows = slope > 0.0 && blocks[4] > blocks[0];

    let mut at_tags: f64 = 0.0;
    let mut tag_frames = 0;
    for (k, o) in tagged.outputs.iter().enumerate() {
        if tagged
            .tags
            .iter()
            .any(|r| (r.observation.t - o.state.t).abs() < 1e-9)
        {
            at_tags = at_tags.max(tagged.position_error(k));
            tag_frames += 1;
        }
    }

    let tag_cam = spec.tags.camera(1.0 / cam.frame_rate_hz)?;
    let mut worst_spread: f64 = 0.0;
    let mut ids: Vec<u32> = tagged.tags.iter().map(|r| r.observation.tag_id).collect();
    ids.dedup();
    let mut rows = CsvWriter::new(&["t", "tag_id", "x_rel", "y_rel", "z_rel"]);
    for id in &ids {
        let mut xs = Vec::new();
        for r in tagged.tags.iter().filter(|r| r.observation.tag_id == *id) {
            let c = tag_planar_pose(&r.observation, &tag_cam)?.camera_in_tag();
            rows.row([r.observation.t, *id as f64, c.x, c.y, c.z]);
            xs.push(c.x);
        }
        let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - xs.iter().cloned().fold(f64::INFINITY, f64::min);
        worst_spread = worst_spread.max(spread);
    }

    let pass = grows
        && tag_frames > 0
        && ids.len() == 5
        && at_tags < 0.15
        && worst_spread < 0.02
        && tagged.summary.tags_applied > 0;
    let mut artifacts = free.artifacts("c7/free")?;
    artifacts.extend(tagged.artifacts("c7/tagged")?);
    artifacts.push((
        "c7/tag_relative.csv".into(),
        rows.into_string().into_bytes(),
    ));
    let err_series = |label: &str, run: &Run| Series {
        label: label.into(),
        points: (0..run.outputs.len())
            .map(|k| (run.truth[k].x, run.position_error(k)))
            .collect(),
    };
    artifacts.push(svg(
        "c7/position_error.svg",
        &[
            err_series("without tags", &free),
            err_series("with tags", &tagged),
        ],
        PlotKind::Drift,
    )?);
    Ok(Outcome {
        pass,
        detail: format!(
            "500 m: error without tags slope {slope:.2e} m/m, block means {}; with tags max error at \
             {tag_frames} tag frames {at_tags:.4} m ({} applied, {} gated), tag-relative X spread {:.2} cm over {} passes",
            blocks.iter().map(|b| format!("{b:.3}")).collect::<Vec<_>>().join("/"),
            tagged.summary.tags_applied,
            tagged.summary.tags_gated,
            100.0 * worst_spread,
            ids.len()
        ),
        artifacts,
    })
}

fn performance() -> railvo::Result<Outcome> {
    let cam = CameraConfig::default();
    let speed = 12.0;
    let spec = straight(&cam, speed, 2.0 * speed, NOISE, 88);
    let cfg = RunConfig {
        camera: cam.clone(),
        initial_speed_mps: speed,
        ..RunConfig::default()
    };
    let run = drive(&spec, &cfg, &texture_for(&spec)?)?;
    let ms = 1000.0 * run.process_secs / run.outputs.len() as f64;
    let verdict = if ms < 30.0 { "within" } else { "above" };
    Ok(Outcome {
        pass: ms < 100.0 && run.summary.tracking_failures == 0,
        detail: format!(
            "{}x{} full pipeline: {ms:.2} ms/frame over {} frames ({verdict} the 30 ms soft limit, hard limit 100 ms)",
            cam.image_width,
            cam.image_height,
            run.outputs.len()
        ),
        artifacts: run.artifacts("c8")?,
    })
}

/// Simulate, odometry, evaluate and plot through the command layer.
fn command_chain(dir: &Path) -> railvo::Result<Artifacts> {
    let spec = dir.join("spec.txt");
    std::fs::write(&spec, "image_width = 320\nimage_height = 240\nfocal_px = 250\npitch_deg = 0\n\
                           segment = 1 5 0\nnoise_sigma = 0.01\nseed = 9\ntexture_size = 512\nworld_scale_m = 0.004\n")
        .map_err(|e| railvo::Error::io(&spec, e))?;
    let config = dir.join("run.txt");
    std::fs::write(&config, "image_width = 320\nimage_height = 240\nfocal_px = 250\npitch_deg = 0\n\
                             template_x = 96\ntemplate_y = 16\ntemplate_width = 128\ntemplate_height = 48\n\
                             initial_speed_mps = 5\n")
        .map_err(|e| railvo::Error::io(&config, e))?;
    let (ds, run) = (dir.join("ds"), dir.join("run"));
    cmd_simulate(&spec, &ds)?;
    cmd_odometry(&ds, Some(&config), &run)?;
    cmd_evaluate(&run, &ds, &dir.join("report.txt"))?;
    cmd_plot(
        &run.join("trajectory.csv"),
        "velocity",
        &dir.join("velocity.svg"),
    )?;
    cmd_plot(
        &run.join("trajectory.csv"),
        "trajectory",
        &dir.join("trajectory.svg"),
    )?;
    cmd_plot(
        &dir.join("report_drift.csv"),
        "drift",
        &dir.join("drift.svg"),
    )?;
    let mut out = Artifacts::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let mut entries: Vec<_> = std::fs::read_dir(&d)
            .map_err(|e| railvo::Error::io(&d, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                stack.push(p);
            } else if matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "svg")) {
                let bytes = std::fs::read(&p).map_err(|e| railvo::Error::io(&p, e))?;
                let rel = p
                    .strip_prefix(dir)
                    .expect("inside dir")
                    .display()
                    .to_string();
                out.push((format!("cli/{rel}"), bytes));
            }
        }
    }
    Ok(out)
}

type Criterion = fn() -> railvo::Result<Outcome>;

const CRITERIA: [(&str, Criterion); 8] = [
    ("sub-pixel necessity", subpixel_necessity),
    ("keyframe drift reduction", keyframe_drift),
    ("epipole gate", epipole_gate),
    ("least-squares epipole oracle", epipole_oracle),
    ("flow covariance properties", flow_covariance),
    ("velocity conversion and uncertainty", velocity_units),
    ("fusion and tag correction", tag_fusion),
    ("performance", performance),
];

fn report(index: usize, name: &str, pass: bool, detail: &str) {
    println!(
        "{} criterion {index} ({name}): {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

/// Runs the selected criteria (all when `only` is empty).
fn run_all(only: &[usize], print: bool) -> (bool, Vec<Artifacts>) {
    let mut all_pass = true;
    let mut artifacts = Vec::new();
    for (i, (name, f)) in CRITERIA.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        let o = f().unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!("error: {e}"),
            artifacts: Vec::new(),
        });
        if print {
            report(i + 1, name, o.pass, &o.detail);
        }
        all_pass &= o.pass;
        artifacts.push(o.artifacts);
    }
    (all_pass, artifacts)
}

fn determinism(only: &[usize], first: &[Artifacts]) -> (bool, String) {
    let (_, second) = run_all(only, false);
    let mut compared = 0;
    let mut mismatched = Vec::new();
    for (a, b) in first.iter().zip(&second) {
        if a.len() != b.len() {
            mismatched.push("artifact count".to_string());
            continue;
        }
        for ((na, ba), (nb, bb)) in a.iter().zip(b) {
            compared += 1;
            if na != nb || ba != bb {
                mismatched.push(na.clone());
            }
        }
    }
    let chains: Vec<railvo::Result<Artifacts>> = (0..2)
        .map(|_| {
            let dir =
                tempfile::tempdir().map_err(|e| railvo::Error::io(Path::new("tempdir"), e))?;
            command_chain(dir.path())
        })
        .collect();
    match (&chains[0], &chains[1]) {
        (Ok(a), Ok(b)) => {
            compared += a.len();
            if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x != y) {
                mismatched.push("command outputs".into());
            }
        }
        (Err(e), _) | (_, Err(e)) => mismatched.push(format!("command chain failed: {e}")),
    }
    let detail = if mismatched.is_empty() {
        format!("{compared} CSV/SVG outputs byte-identical across two executions")
    } else {
        format!(
            "{} of {compared} outputs differ: {}",
            mismatched.len(),
            mismatched.join(", ")
        )
    };
    (mismatched.is_empty(), detail)
}

/// Criterion numbers on the command line restrict the run; the determinism
/// check then covers only those.
fn main() -> ExitCode {
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let (mut all_pass, artifacts) = run_all(&only, true);
    if only.is_empty() || only.contains(&9) {
        let (same, detail) = determinism(&only, &artifacts);
        report(9, "determinism", same, &detail);
        all_pass &= same;
    }
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
