//! Writes the built-in scenes to disk together with a ready-to-run
//! experiment document that references them by relative path.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::error::{FuseError, Result};
use crate::fixtures;

pub const FIXTURES: &[&str] = &["two-region", "gaussian"];

fn write(path: PathBuf, text: String, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, text).map_err(|e| FuseError::io(&path, e))?;
    written.push(path);
    Ok(())
}

fn pretty(v: serde_json::Value) -> String {
    serde_json::to_string_pretty(&v).expect("json") + "\n"
}

/// Exports fixture `name` into `dir`, returning the files written.
pub fn export_fixture(name: &str, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| FuseError::io(dir, e))?;
    let mut written = Vec::new();
    match name {
        "two-region" => {
            write(
                dir.join("general.json"),
                fixtures::two_region_general().to_json(),
                &mut written,
            )?;
            write(
                dir.join("expert.json"),
                fixtures::two_region_expert().to_json(),
                &mut written,
            )?;
            write(
                dir.join("target.json"),
                fixtures::two_region_target().to_json(),
                &mut written,
            )?;
            let experiment = json!({
                "fusion": {
                    "schedule": {"kind": "linear", "steps": 1000},
                    "guidance_scale": 1.0,
                    "k_g": 100.0,
                    "k_e": 100.0,
                    "model_g": {"kind": "scene", "path": "general.json"},
                    "model_e": {"kind": "scene", "path": "expert.json"},
                    "c_g": "scene",
                    "c_e": "object",
                    "seed": 0
                },
                "seeds": 4,
                "sweep": [{"param": "blend", "values": [{"mode": "snb"}, {"mode": "weighted_sum", "w": 0.5}]}],
                "out_dir": "runs/two-region",
                "target": {"model": {"kind": "scene", "path": "target.json"}, "condition": "composite"}
            });
            write(dir.join("experiment.json"), pretty(experiment), &mut written)?;
        }
        "gaussian" => {
            write(
                dir.join("scene.json"),
                fixtures::gaussian_grid().to_json(),
                &mut written,
            )?;
            let experiment = json!({
                "fusion": {
                    "schedule": {"kind": "linear", "steps": 1000},
                    "guidance_scale": 1.0,
                    "model_g": {"kind": "scene", "path": "scene.json"},
                    "c_g": "data",
                    "blend": {"mode": "single_g"}
                },
                "seeds": 64,
                "out_dir": "runs/gaussian",
                "metrics": ["moments", "kl"]
            });
            write(dir.join("experiment.json"), pretty(experiment), &mut written)?;
        }
        other => {
            return Err(FuseError::Config(format!(
                "unknown fixture `{other}` (expected one of {})",
                FIXTURES.join(", ")
            )))
        }
    }
    Ok(written)
}
