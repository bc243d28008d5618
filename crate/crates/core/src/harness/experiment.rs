use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::Value;

use super::config::{ExperimentSpec, Metric, RunPlan};
use super::metrics::{compute_metrics, per_pixel_kl, MetricReport};
use crate::error::{FuseError, Result};
use crate::grid::Grid;
use crate::predictor::{Condition, SceneEntry};

/// Environment variable that replaces the spec's `out_dir`.
pub const OUT_ENV: &str = "FUSE_OUT";

pub const REPORT_FILE: &str = "report.csv";
pub const POINTS_FILE: &str = "points.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const COVERAGE_FILE: &str = "mask_coverage.csv";

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub plan: RunPlan,
    pub dir: PathBuf,
    pub outcome: std::result::Result<MetricReport, String>,
    /// Final sample; kept for the cross-seed summary.
    pub x0: Option<Grid>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub out_dir: PathBuf,
    pub records: Vec<RunRecord>,
}

impl ExperimentOutcome {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.outcome.is_err()).count()
    }

    pub fn all_ok(&self) -> bool {
        self.failures() == 0
    }
}

/// `FUSE_OUT` if set, else the spec's directory.
pub fn resolve_out_dir(spec: &ExperimentSpec) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => spec.out_dir.clone(),
    }
}

fn run_one(spec: &ExperimentSpec, plan: &RunPlan, target: &SceneEntry, base_dir: &Path, out_dir: &Path) -> RunRecord {
    let dir = out_dir.join(&plan.id);
    let result = (|| -> Result<(MetricReport, Grid)> {
        let mut fusion = plan.fusion.clone();
        if spec
            .metrics
            .iter()
            .any(|m| matches!(m, Metric::Coverage | Metric::Stability))
            || spec.dump_every > 0
        {
            fusion.diagnostics = true;
        }
        let traj = crate::sampler::run_fusion(&fusion, base_dir)?;
        let report = compute_metrics(&traj, target, &spec.metrics)?;
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| FuseError::io(&dir, e))?;
        }
        traj.dump(&dir, spec.dump_every)?;
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        let path = dir.join(METRICS_FILE);
        fs::write(&path, json + "\n").map_err(|e| FuseError::io(&path, e))?;
        if !report.coverage.is_empty() {
            let mut csv = String::from("t,coverage\n");
            for c in &report.coverage {
                writeln!(csv, "{},{}", c.t, c.coverage).unwrap();
            }
            let path = dir.join(COVERAGE_FILE);
            fs::write(&path, csv).map_err(|e| FuseError::io(&path, e))?;
        }
        let x0 = traj.final_sample().cloned().expect("complete trajectory");
        Ok((report, x0))
    })();
    match result {
        Ok((report, x0)) => RunRecord {
            plan: plan.clone(),
            dir,
            outcome: Ok(report),
            x0: Some(x0),
        },
        Err(e) => RunRecord {
            plan: plan.clone(),
            dir,
            outcome: Err(e.to_string()),
            x0: None,
        },
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per run, in plan order.
pub fn report_csv(spec: &ExperimentSpec, records: &[RunRecord]) -> String {
    let channels = records
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok())
        .map(|m| m.channel_mean.len())
        .max()
        .unwrap_or(0);
    let mut header = vec!["run".to_string(), "point".into(), "seed".into()];
    header.extend(spec.sweep.iter().map(|a| a.param.clone()));
    header.extend(["mode".into(), "status".into()]);
    header.extend((0..channels).map(|c| format!("mean_c{c}")));
    header.extend((0..channels).map(|c| format!("std_c{c}")));
    header.extend([
        "kl".into(),
        "coverage_mean".into(),
        "mask_change".into(),
        "stability".into(),
        "error".into(),
    ]);
    let mut out = header.iter().map(|h| csv_field(h)).collect::<Vec<_>>().join(",");
    out.push('\n');
    for r in records {
        let mut row = vec![r.plan.id.clone(), r.plan.point.to_string(), r.plan.seed.to_string()];
        for axis in &spec.sweep {
            let v = r
                .plan
                .overrides
                .iter()
                .find(|(p, _)| *p == axis.param)
                .map(|(_, v)| value_text(v));
            row.push(v.unwrap_or_default());
        }
        row.push(r.plan.fusion.blend.name().to_string());
        match &r.outcome {
            Ok(m) => {
                row.push("ok".into());
                for c in 0..channels {
                    row.push(m.channel_mean.get(c).map(|v| v.to_string()).unwrap_or_default());
                }
                for c in 0..channels {
                    row.push(m.channel_std.get(c).map(|v| v.to_string()).unwrap_or_default());
                }
                row.extend([
                    opt(m.kl),
                    opt(m.coverage_mean),
                    opt(m.mask_change),
                    opt(m.stability),
                    String::new(),
                ]);
            }
            Err(e) => {
                row.push("failed".into());
                row.extend(std::iter::repeat_n(String::new(), 2 * channels + 4));
                row.push(e.clone());
            }
        }
        out.push_str(&row.iter().map(|f| csv_field(f)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

/// One row per sweep point: completed seeds and the per-pixel KL of the
/// final samples across seeds.
pub fn points_csv(spec: &ExperimentSpec, records: &[RunRecord], target: &SceneEntry) -> String {
    let mut out = String::from("point");
    for a in &spec.sweep {
        write!(out, ",{}", csv_field(&a.param)).unwrap();
    }
    out.push_str(",runs,completed,per_pixel_kl\n");
    let points = records.iter().map(|r| r.plan.point).max().map_or(0, |p| p + 1);
    for p in 0..points {
        let runs: Vec<&RunRecord> = records.iter().filter(|r| r.plan.point == p).collect();
        let samples: Vec<Grid> = runs.iter().filter_map(|r| r.x0.clone()).collect();
        write!(out, "{p}").unwrap();
        for axis in &spec.sweep {
            let v = runs[0]
                .plan
                .overrides
                .iter()
                .find(|(n, _)| *n == axis.param)
                .map(|(_, v)| value_text(v));
            write!(out, ",{}", csv_field(&v.unwrap_or_default())).unwrap();
        }
        let kl = if samples.is_empty() {
            None
        } else {
            per_pixel_kl(&samples, target).ok()
        };
        writeln!(out, ",{},{},{}", runs.len(), samples.len(), opt(kl)).unwrap();
    }
    out
}

/// Executes every run of `spec` (all sweep points when `sweep` is set) in
/// parallel. Model and mask paths resolve against `base_dir`. Per-run
/// failures are recorded, not raised; errors here mean nothing could run.
pub fn run_experiment(spec: &ExperimentSpec, base_dir: &Path, sweep: bool) -> Result<ExperimentOutcome> {
    let out_dir = resolve_out_dir(spec);
    run_experiment_in(spec, base_dir, sweep, &out_dir)
}

pub fn run_experiment_in(
    spec: &ExperimentSpec,
    base_dir: &Path,
    sweep: bool,
    out_dir: &Path,
) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let plan = spec.plan(sweep)?;
    let (target_spec, target_cond) = spec.target();
    let scene = target_spec.load_scene(base_dir)?;
    let target = scene.entry(&Condition::new(&target_cond))?.clone();
    fs::create_dir_all(out_dir).map_err(|e| FuseError::io(out_dir, e))?;
    let records: Vec<RunRecord> = plan
        .par_iter()
        .map(|p| run_one(spec, p, &target, base_dir, out_dir))
        .collect();
    let report = out_dir.join(REPORT_FILE);
    fs::write(&report, report_csv(spec, &records)).map_err(|e| FuseError::io(&report, e))?;
    let points = out_dir.join(POINTS_FILE);
    fs::write(&points, points_csv(spec, &records, &target)).map_err(|e| FuseError::io(&points, e))?;
    Ok(ExperimentOutcome {
        out_dir: out_dir.to_path_buf(),
        records,
    })
}

/// Reads back a run directory's `metrics.json`.
pub fn load_report(run_dir: &Path) -> Result<MetricReport> {
    let path = run_dir.join(METRICS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| FuseError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| FuseError::Load {
        path,
        key: format!("line {}", e.line()),
        msg: e.to_string(),
    })
}

/// Human-readable summary of one run's metrics.
pub fn summarize(report: &MetricReport) -> String {
    let mut out = String::new();
    for (c, (m, s)) in report.channel_mean.iter().zip(&report.channel_std).enumerate() {
        writeln!(out, "channel {c}: mean {m:.6} std {s:.6}").unwrap();
    }
    if let Some(kl) = report.kl {
        writeln!(out, "kl: {kl:.6}").unwrap();
    }
    if let Some(c) = report.coverage_mean {
        let first = report.coverage.first().map(|p| p.coverage).unwrap_or(c);
        let last = report.coverage.last().map(|p| p.coverage).unwrap_or(c);
        writeln!(
            out,
            "coverage: mean {c:.4} (first step {first:.4}, last step {last:.4}, {} steps)",
            report.coverage.len()
        )
        .unwrap();
    }
    if let (Some(s), Some(ch)) = (report.stability, report.mask_change) {
        writeln!(out, "stability: {s:.4} (mask change rate {ch:.4})").unwrap();
    }
    if out.is_empty() {
        out.push_str("no metrics recorded\n");
    }
    out
}
