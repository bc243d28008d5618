//! Text and image emitters for grids.
//!
//! CSV layout: each channel is a block introduced by a `# channel <i>` line,
//! followed by one comma-separated line per image row. Values are written
//! with Rust's shortest round-trip formatting, so parsing a written file
//! reproduces the grid bit for bit.
//!
//! PGM output is 8-bit binary (`P5`). Channels are stacked vertically and
//! the grid's `[min, max]` range is mapped affinely onto `[0, 255]`; the
//! range is recorded in a sidecar `<name>.range` text file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Grid, Shape};
use crate::error::{FuseError, Result};

pub fn to_csv(grid: &Grid) -> String {
    let s = grid.shape();
    let mut out = String::with_capacity(s.len() * 20);
    for c in 0..s.channels {
        writeln!(out, "# channel {c}").unwrap();
        let plane = grid.channel(c);
        for row in plane.chunks(s.width) {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{v}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}

/// Error from parsing CSV blocks: 1-based line number plus message.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvError {
    pub line: usize,
    pub msg: String,
}

/// Parses consecutive `# channel i` blocks from `(line_number, text)` pairs.
///
/// Blank lines are skipped. When `expected` is given the parsed shape must
/// match it exactly.
pub fn parse_csv_lines<'a>(
    lines: impl IntoIterator<Item = (usize, &'a str)>,
    expected: Option<Shape>,
) -> std::result::Result<Grid, CsvError> {
    let mut channels: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut last_line = 0;
    let mut width: Option<usize> = None;
    for (no, raw) in lines {
        last_line = no;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let idx = rest
                .trim()
                .strip_prefix("channel")
                .and_then(|n| n.trim().parse::<usize>().ok())
                .ok_or_else(|| CsvError {
                    line: no,
                    msg: format!("expected `# channel <i>`, found `{line}`"),
                })?;
            if idx != channels.len() {
                return Err(CsvError {
                    line: no,
                    msg: format!("channel {idx} out of order, expected {}", channels.len()),
                });
            }
            channels.push(Vec::new());
            continue;
        }
        let block = channels.last_mut().ok_or_else(|| CsvError {
            line: no,
            msg: "data before the first `# channel` header".into(),
        })?;
        let row = line
            .split(',')
            .map(|cell| {
                let cell = cell.trim();
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CsvError {
                        line: no,
                        msg: format!("`{cell}` is not a finite number"),
                    })
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        match width {
            Some(w) if w != row.len() => {
                return Err(CsvError {
                    line: no,
                    msg: format!("row has {} columns, expected {w}", row.len()),
                });
            }
            _ => width = Some(row.len()),
        }
        block.push(row);
    }
    if channels.is_empty() || channels[0].is_empty() {
        return Err(CsvError {
            line: last_line,
            msg: "no grid data".into(),
        });
    }
    let height = channels[0].len();
    let width = channels[0][0].len();
    if let Some((c, _)) = channels.iter().enumerate().find(|(_, b)| b.len() != height) {
        return Err(CsvError {
            line: last_line,
            msg: format!("channel {c} has {} rows, expected {height}", channels[c].len()),
        });
    }
    let shape = Shape::new(channels.len(), height, width);
    if let Some(exp) = expected {
        if exp != shape {
            return Err(CsvError {
                line: last_line,
                msg: format!("grid is {shape}, expected {exp}"),
            });
        }
    }
    let values = channels.into_iter().flatten().flatten().collect();
    Grid::new(shape, values).map_err(|e| CsvError {
        line: last_line,
        msg: e.to_string(),
    })
}

pub fn parse_csv(text: &str) -> std::result::Result<Grid, CsvError> {
    parse_csv_lines(text.lines().enumerate().map(|(i, l)| (i + 1, l)), None)
}

pub fn write_csv(grid: &Grid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_csv(grid)).map_err(|e| FuseError::io(path, e))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| FuseError::io(path, e))?;
    parse_csv(&text).map_err(|e| FuseError::load(path, format!("line {}", e.line), e.msg))
}

/// Encodes `grid` as a binary PGM and returns the bytes plus the `(min, max)`
/// mapped onto `[0, 255]`. A constant grid maps to all zeros.
pub fn to_pgm(grid: &Grid) -> (Vec<u8>, (f64, f64)) {
    let s = grid.shape();
    let (lo, hi) = grid.min_max();
    let span = hi - lo;
    let mut bytes = format!("P5\n{} {}\n255\n", s.width, s.channels * s.height).into_bytes();
    bytes.extend(grid.values().iter().map(|&v| {
        if span > 0.0 {
            ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    (bytes, (lo, hi))
}

pub fn sidecar_path(pgm: &Path) -> PathBuf {
    pgm.with_extension("range")
}

pub fn write_pgm(grid: &Grid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (bytes, (lo, hi)) = to_pgm(grid);
    fs::write(path, bytes).map_err(|e| FuseError::io(path, e))?;
    let s = grid.shape();
    let side = sidecar_path(path);
    let text = format!(
        "min {lo}\nmax {hi}\nchannels {}\nheight {}\nwidth {}\n",
        s.channels, s.height, s.width
    );
    fs::write(&side, text).map_err(|e| FuseError::io(side, e))
}
