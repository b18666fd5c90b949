use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::simulate::{read_potential, read_trajectory, write_frames, POLYGON_FILE, POTENTIAL_FILE, TRAJECTORY_FILE};
use super::{create_dir, write_file};
use crate::error::{Error, Result};
use crate::geometry::{Polygon, Vec2};

pub const MERGED_FILE: &str = "potential_merged.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExportConfig {
    /// Output directories of earlier `simulate` runs.
    pub runs: Vec<PathBuf>,
    /// Every subdirectory holding a trajectory is added to `runs`.
    pub input_dir: Option<PathBuf>,
    /// Column and folder names; the run directory names by default.
    pub labels: Option<Vec<String>>,
    pub frames: bool,
    pub frame_interval: f64,
    pub tail: f64,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self { runs: Vec::new(), input_dir: None, labels: None, frames: true, frame_interval: 1.0, tail: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportReport {
    pub labels: Vec<String>,
    pub rows: usize,
    pub frames: usize,
}

struct StoredRun {
    label: String,
    poly: Polygon,
    positions: Vec<Vec<Vec2>>,
    potential: Vec<(f64, f64)>,
}

fn require(dir: &Path, file: &str) -> Result<PathBuf> {
    let path = dir.join(file);
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::invalid(format!("{}: missing {file}", dir.display())))
    }
}

fn load_run(dir: &Path, label: String) -> Result<StoredRun> {
    let poly_path = require(dir, POLYGON_FILE)?;
    let text = fs::read_to_string(&poly_path).map_err(|e| Error::io(&poly_path, e))?;
    let vertices: Vec<Vec2> =
        serde_json::from_str(&text).map_err(|e| Error::InvalidPolygon(format!("{}: {e}", poly_path.display())))?;
    let poly = Polygon::new(vertices)?;
    let positions = read_trajectory(&require(dir, TRAJECTORY_FILE)?)?;
    let potential = read_potential(&require(dir, POTENTIAL_FILE)?)?;
    Ok(StoredRun { label, poly, positions, potential })
}

fn discover(cfg: &ExportConfig) -> Result<Vec<PathBuf>> {
    let mut runs = cfg.runs.clone();
    if let Some(input) = &cfg.input_dir {
        let entries = fs::read_dir(input).map_err(|e| Error::io(input, e))?;
        let mut found = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(input, e))?.path();
            if path.join(TRAJECTORY_FILE).is_file() {
                found.push(path);
            }
        }
        if found.is_empty() {
            return Err(Error::invalid(format!("{}: no stored runs found", input.display())));
        }
        found.sort();
        runs.extend(found);
    }
    if runs.is_empty() {
        return Err(Error::invalid("export needs at least one run directory"));
    }
    Ok(runs)
}

fn labels_for(cfg: &ExportConfig, runs: &[PathBuf]) -> Result<Vec<String>> {
    if let Some(labels) = &cfg.labels {
        if labels.len() != runs.len() {
            return Err(Error::LengthMismatch { expected: runs.len(), got: labels.len() });
        }
        return Ok(labels.clone());
    }
    let mut out: Vec<String> = Vec::new();
    for (k, r) in runs.iter().enumerate() {
        let base = r.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format!("run{k}"));
        let label = if out.contains(&base) { format!("{base}_{k}") } else { base };
        out.push(label);
    }
    Ok(out)
}

/// Time in nanoseconds, the alignment key of merged traces.
fn time_key(t: f64) -> i64 {
    (t * 1e9).round() as i64
}

fn merged_csv(runs: &[StoredRun]) -> (String, usize) {
    let mut table: BTreeMap<i64, (f64, Vec<Option<f64>>)> = BTreeMap::new();
    for (k, run) in runs.iter().enumerate() {
        for &(t, phi) in &run.potential {
            table.entry(time_key(t)).or_insert_with(|| (t, vec![None; runs.len()])).1[k] = Some(phi);
        }
    }
    let mut s = String::from("time_s");
    for r in runs {
        s.push(',');
        s.push_str(&r.label);
    }
    s.push('\n');
    for (t, row) in table.values() {
        let _ = write!(s, "{t}");
        for v in row {
            s.push(',');
            if let Some(v) = v {
                let _ = write!(s, "{v}");
            }
        }
        s.push('\n');
    }
    (s, table.len())
}

/// Merges the potential traces of stored runs into one CSV with a shared
/// time column and re-renders each trajectory as SVG frames under
/// `out/<label>/`. Every input is read and checked before anything is
/// written.
pub fn cmd_export(cfg: &ExportConfig, out: &Path) -> Result<ExportReport> {
    if cfg.frames && !(cfg.frame_interval > 0.0 && cfg.tail >= 0.0) {
        return Err(Error::invalid("frame_interval must be positive and tail non-negative"));
    }
    let dirs = discover(cfg)?;
    let labels = labels_for(cfg, &dirs)?;
    let runs: Vec<StoredRun> = dirs.iter().zip(&labels).map(|(d, l)| load_run(d, l.clone())).collect::<Result<_>>()?;

    create_dir(out)?;
    let (merged, rows) = merged_csv(&runs);
    write_file(&out.join(MERGED_FILE), merged)?;
    let mut frames = 0;
    if cfg.frames {
        for run in &runs {
            let dt = match run.potential.as_slice() {
                [(t0, _), (t1, _), ..] if t1 > t0 => t1 - t0,
                _ => 1.0,
            };
            frames += write_frames(&out.join(&run.label), &run.poly, &run.positions, dt, cfg.frame_interval, cfg.tail)?;
        }
    }
    Ok(ExportReport { labels, rows, frames })
}
