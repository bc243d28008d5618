//! Experiment orchestration behind the `fuse` binary: strict JSON specs,
//! sweep expansion, parallel runs, metrics and on-disk artifacts.

pub mod config;
pub mod experiment;
pub mod export;
pub mod metrics;

pub use config::{apply_override, parse_config, ExperimentSpec, Metric, RunPlan, SweepAxis, TargetSpec};
pub use experiment::{
    load_report, run_experiment, run_experiment_in, summarize, ExperimentOutcome, RunRecord, OUT_ENV,
};
pub use export::{export_fixture, FIXTURES};
pub use metrics::{compute_metrics, per_pixel_kl, pooled_kl, MetricReport};
