//! Command-line front end: configuration, dataset I/O, the per-frame
//! pipeline, evaluation and SVG plots.

mod commands;
mod config;
mod csvio;
mod dataset;
mod evaluate;
mod kv;
mod pipeline;
mod plot;

pub use commands::{cmd_evaluate, cmd_odometry, cmd_plot, cmd_simulate, series_from_csv};
pub use config::{parse_config, CameraConfig, RunConfig};
pub use csvio::{parse_table, read_table, CsvWriter, Table};
pub use dataset::{
    frame_path, ground_truth_csv, parse_simulation_spec, read_ground_truth, read_tag_records,
    simulate, tag_records, tags_csv, Dataset, SimulationSpec, TagConfig, TagRecord, GROUND_TRUTH,
    MANIFEST, TAGS,
};
pub use evaluate::{
    count_switches, drift_csv, evaluate_samples, metrics_csv, metrics_text, read_estimate,
    DriftSample, EstimateSample, Metrics,
};
pub use pipeline::{
    run_pipeline, FrameOutput, Odometry, RunSummary, RunWriters, SfmRecord, TagSensor,
    DISPLACEMENT_COLUMNS, POSE_COLUMNS, TRAJECTORY_COLUMNS,
};
pub use plot::{emit_plot, PlotKind, Series};
