use std::fmt::Write as _;
use std::path::Path;

use super::csvio::{read_table, CsvWriter, Table};
use crate::synthrail::GroundTruthRecord;
use crate::{Error, Result};

/// One estimated sample: time, position, speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub frames: usize,
    pub true_distance_m: f64,
    pub estimated_distance_m: f64,
    pub distance_error_m: f64,
    pub distance_error_pct: f64,
    pub velocity_rmse_mps: f64,
    pub final_position_error_m: f64,
    pub max_position_error_m: f64,
    /// `None` when no displacement log was available.
    pub keyframe_switches: Option<usize>,
}

/// Per-sample drift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSample {
    pub t: f64,
    pub true_distance_m: f64,
    pub estimated_distance_m: f64,
    pub distance_error_m: f64,
    pub position_error_m: f64,
}

/// Drops consecutive samples repeating the previous timestamp.
fn dedup_by_time<T: Copy>(items: &[T], t: impl Fn(&T) -> f64) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(items.len());
    for it in items {
        if out.last().is_some_and(|l| t(l) == t(it)) {
            continue;
        }
        out.push(*it);
    }
    out
}

/// Compares an estimated trajectory with ground truth sample by sample.
pub fn evaluate_samples(
    estimate: &[EstimateSample],
    truth: &[GroundTruthRecord],
    keyframe_switches: Option<usize>,
) -> Result<(Metrics, Vec<DriftSample>)> {
    let est = dedup_by_time(estimate, |s| s.t);
    let gt = dedup_by_time(truth, |g| g.t);
    if est.is_empty() || gt.is_empty() {
        return Err(Error::EmptySeries);
    }
    if est.len() != gt.len() {
        return Err(Error::Alignment(format!(
            "{} estimated samples vs {} ground-truth samples",
            est.len(),
            gt.len()
        )));
    }
    let mut drift = Vec::with_capacity(est.len());
    let (mut d_true, mut d_est, mut sq, mut max_err) = (0.0, 0.0, 0.0, 0.0f64);
    for (i, (e, g)) in est.iter().zip(&gt).enumerate() {
        if (e.t - g.t).abs() > 1e-6 {
            return Err(Error::Alignment(format!(
                "sample {i}: t = {} vs {}",
                e.t, g.t
            )));
        }
        if i > 0 {
            let dt = g.t - gt[i - 1].t;
            d_true += g.v_l.abs() * dt;
            d_est += e.v.abs() * dt;
        }
        sq += (e.v - g.v_l).powi(2);
        let pos = (e.x - g.x).hypot(e.y - g.y);
        max_err = max_err.max(pos);
        drift.push(DriftSample {
            t: g.t,
            true_distance_m: d_true,
            estimated_distance_m: d_est,
            distance_error_m: d_est - d_true,
            position_error_m: pos,
        });
    }
    let n = est.len();
    let last = drift.last().expect("non-empty");
    let metrics = Metrics {
        frames: n,
        true_distance_m: d_true,
        estimated_distance_m: d_est,
        distance_error_m: d_est - d_true,
        distance_error_pct: if d_true > 0.0 {
            100.0 * (d_est - d_true) / d_true
        } else {
            0.0
        },
        velocity_rmse_mps: (sq / n as f64).sqrt(),
        final_position_error_m: last.position_error_m,
        max_position_error_m: max_err,
        keyframe_switches,
    };
    Ok((metrics, drift))
}

/// Reads `trajectory.csv` rows.
pub fn read_estimate(path: &Path) -> Result<Vec<EstimateSample>> {
    let t = read_table(path)?;
    let c: Vec<usize> = ["t", "x_g", "y_g", "v"]
        .iter()
        .map(|n| t.require(n, path))
        .collect::<Result<_>>()?;
    Ok(t.rows
        .iter()
        .map(|r| EstimateSample {
            t: r[c[0]],
            x: r[c[1]],
            y: r[c[2]],
            v: r[c[3]],
        })
        .collect())
}

/// Number of keyframe changes in a displacement log.
pub fn count_switches(table: &Table, path: &Path) -> Result<usize> {
    let c = table.require("keyframe_id", path)?;
    Ok(table.rows.windows(2).filter(|w| w[0][c] != w[1][c]).count())
}

pub fn metrics_text(m: &Metrics) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "frames: {}", m.frames);
    let _ = writeln!(s, "true distance: {} m", m.true_distance_m);
    let _ = writeln!(s, "estimated distance: {} m", m.estimated_distance_m);
    let _ = writeln!(
        s,
        "distance error: {} m ({} %)",
        m.distance_error_m, m.distance_error_pct
    );
    let _ = writeln!(s, "velocity RMSE: {} m/s", m.velocity_rmse_mps);
    let _ = writeln!(s, "final position error: {} m", m.final_position_error_m);
    let _ = writeln!(s, "max position error: {} m", m.max_position_error_m);
    match m.keyframe_switches {
        Some(k) => {
            let _ = writeln!(s, "keyframe switches: {k}");
        }
        None => s.push_str("keyframe switches: n/a\n"),
    }
    s
}

pub fn metrics_csv(m: &Metrics) -> String {
    let mut w = CsvWriter::new(&[
        "frames",
        "true_distance_m",
        "estimated_distance_m",
        "distance_error_m",
        "distance_error_pct",
        "velocity_rmse_mps",
        "final_position_error_m",
        "max_position_error_m",
        "keyframe_switches",
    ]);
    w.row([
        m.frames.to_string(),
        m.true_distance_m.to_string(),
        m.estimated_distance_m.to_string(),
        m.distance_error_m.to_string(),
        m.distance_error_pct.to_string(),
        m.velocity_rmse_mps.to_string(),
        m.final_position_error_m.to_string(),
        m.max_position_error_m.to_string(),
        m.keyframe_switches
            .map_or("NaN".to_string(), |k| k.to_string()),
    ]);
    w.into_string()
}

pub fn drift_csv(drift: &[DriftSample]) -> String {
    let mut w = CsvWriter::new(&[
        "t",
        "true_distance_m",
        "estimated_distance_m",
        "distance_error_m",
        "position_error_m",
    ]);
    for d in drift {
        w.row([
            d.t,
            d.true_distance_m,
            d.estimated_distance_m,
            d.distance_error_m,
            d.position_error_m,
        ]);
    }
    w.into_string()
}
