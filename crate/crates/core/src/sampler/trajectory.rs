use std::fs;
use std::path::Path;

use super::StepDiagnostics;
use crate::error::{FuseError, Result};
use crate::grid::io::{write_csv, write_pgm};
use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub t: usize,
    pub x: Grid,
    /// Maps and mask computed while stepping away from this state.
    pub diagnostics: Option<StepDiagnostics>,
}

/// States ordered from `t = T` down to `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<TrajectoryState>,
}

impl Trajectory {
    pub fn new(states: Vec<TrajectoryState>) -> Self {
        Self { states }
    }

    pub fn states(&self) -> &[TrajectoryState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Checks the `T, T-1, .., 0` ordering and constant shape.
    pub fn is_complete(&self) -> bool {
        let Some(first) = self.states.first() else {
            return false;
        };
        let n = self.states.len();
        let shape = first.x.shape();
        first.t + 1 == n
            && self
                .states
                .iter()
                .enumerate()
                .all(|(i, s)| s.t == n - 1 - i && s.x.shape() == shape)
    }

    pub fn final_sample(&self) -> Option<&Grid> {
        self.states.last().filter(|s| s.t == 0).map(|s| &s.x)
    }

    /// Writes `x0.csv`/`x0.pgm` and, every `every` steps (0 = never),
    /// `step_<t>/x.csv` plus any mask and salience images.
    pub fn dump(&self, dir: &Path, every: usize) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| FuseError::io(dir, e))?;
        if every > 0 {
            for s in self.states.iter().filter(|s| s.t % every == 0) {
                let sub = dir.join(format!("step_{}", s.t));
                fs::create_dir_all(&sub).map_err(|e| FuseError::io(&sub, e))?;
                write_csv(&s.x, sub.join("x.csv"))?;
                if let Some(d) = &s.diagnostics {
                    write_pgm(&d.mask.to_grid(), sub.join("mask.pgm"))?;
                    if let Some(m) = &d.salience_g {
                        write_pgm(&m.to_grid(), sub.join("salience_g.pgm"))?;
                    }
                    if let Some(m) = &d.salience_e {
                        write_pgm(&m.to_grid(), sub.join("salience_e.pgm"))?;
                    }
                }
            }
        }
        let x0 = self
            .final_sample()
            .ok_or_else(|| FuseError::param("trajectory has no t=0 state"))?;
        write_csv(x0, dir.join("x0.csv"))?;
        write_pgm(x0, dir.join("x0.pgm"))
    }
}
