use std::path::{Path, PathBuf};

use super::config::parse_config;
use super::csvio::{read_table, write_file};
use super::dataset::{parse_simulation_spec, read_ground_truth, simulate, Dataset, GROUND_TRUTH};
use super::evaluate::{
    count_switches, drift_csv, evaluate_samples, metrics_csv, metrics_text, read_estimate, Metrics,
};
use super::pipeline::{run_pipeline, RunSummary};
use super::plot::{emit_plot, PlotKind, Series};
use crate::{Error, Result};

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// `simulate <spec> -o <dir>`
pub fn cmd_simulate(spec: &Path, out: &Path) -> Result<usize> {
    let (s, _) = parse_simulation_spec(&read_text(spec)?)?;
    simulate(&s, out)
}

/// `odometry <dataset> -c <config> -o <dir>`
pub fn cmd_odometry(dataset: &Path, config: Option<&Path>, out: &Path) -> Result<RunSummary> {
    let cfg = match config {
        Some(p) => parse_config(&read_text(p)?)?,
        None => parse_config("")?,
    };
    let same = |a: &Path, b: &Path| match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    };
    if same(dataset, out) {
        return Err(Error::InvalidParameter(
            "output directory must differ from the dataset".into(),
        ));
    }
    let ds = Dataset::open(dataset)?;
    run_pipeline(&cfg, &ds, out)
}

fn resolve(p: &Path, file: &str) -> PathBuf {
    if p.is_dir() {
        p.join(file)
    } else {
        p.to_path_buf()
    }
}

fn sibling(report: &Path, suffix: &str) -> PathBuf {
    let stem = report
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report");
    report.with_file_name(format!("{stem}_{suffix}.csv"))
}

/// `evaluate <run> <truth> -o <report>`: writes the text report plus
/// `<stem>_metrics.csv` and `<stem>_drift.csv` next to it.
pub fn cmd_evaluate(run: &Path, truth: &Path, report: &Path) -> Result<Metrics> {
    let est = read_estimate(&resolve(run, "trajectory.csv"))?;
    let gt = read_ground_truth(&resolve(truth, GROUND_TRUTH))?;
    let disp = run.join("displacement.csv");
    let switches = if run.is_dir() && disp.exists() {
        Some(count_switches(&read_table(&disp)?, &disp)?)
    } else {
        None
    };
    let (m, drift) = evaluate_samples(&est, &gt, switches)?;
    if let Some(parent) = report.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_file(report, metrics_text(&m).as_bytes())?;
    write_file(&sibling(report, "metrics"), metrics_csv(&m).as_bytes())?;
    write_file(&sibling(report, "drift"), drift_csv(&drift).as_bytes())?;
    Ok(m)
}

/// Picks the plotted columns of a CSV for a plot kind.
pub fn series_from_csv(path: &Path, kind: PlotKind) -> Result<Vec<Series>> {
    let t = read_table(path)?;
    let pick = |x: usize, ys: Vec<usize>| -> Vec<Series> {
        ys.into_iter()
            .map(|y| Series {
                label: t.headers[y].clone(),
                points: t.rows.iter().map(|r| (r[x], r[y])).collect(),
            })
            .collect()
    };
    let series = match kind {
        PlotKind::Velocity => {
            let x = t
                .col("t")
                .or_else(|| t.col("frame_idx"))
                .ok_or_else(|| Error::Csv {
                    path: path.to_path_buf(),
                    reason: "needs a `t` or `frame_idx` column".into(),
                })?;
            let ys = (0..t.headers.len())
                .filter(|&i| i != x && t.headers[i].starts_with('v'))
                .collect();
            pick(x, ys)
        }
        PlotKind::Trajectory => [("x_g", "y_g"), ("x", "y"), ("x_true", "y_true")]
            .iter()
            .filter_map(|(a, b)| {
                let (i, j) = (t.col(a)?, t.col(b)?);
                Some(Series {
                    label: format!("{a}/{b}"),
                    points: t.rows.iter().map(|r| (r[i], r[j])).collect(),
                })
            })
            .collect(),
        PlotKind::Drift => {
            let x = t.require("true_distance_m", path)?;
            let ys = ["distance_error_m", "position_error_m"]
                .iter()
                .filter_map(|n| t.col(n))
                .collect();
            pick(x, ys)
        }
    };
    if series.is_empty() {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            reason: "no plottable columns".into(),
        });
    }
    Ok(series)
}

/// `plot <csv> --kind <k> -o <svg>`
pub fn cmd_plot(csv: &Path, kind: &str, out: &Path) -> Result<()> {
    let kind = PlotKind::parse(kind)?;
    let svg = emit_plot(&series_from_csv(csv, kind)?, kind)?;
    write_file(out, svg.as_bytes())
}
