//! CSV and JSON artifacts written by runs.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! CSV written here parses back to bit-identical values.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::measures::{Atom, AtomicMeasure};
use crate::semiflow::SnapshotStats;

/// Number of histogram bins for population snapshots.
pub const HISTOGRAM_BINS: usize = 200;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

fn parse_field(path: &Path, row: usize, column: &str, raw: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|e| Error::Json {
        path: path.to_path_buf(),
        message: format!("row {row}, column `{column}`: cannot parse {raw:?} as a number ({e})"),
    })
}

/// Reads the named float columns of a headed CSV file.
fn read_columns(path: &Path, columns: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h.trim() == *c)
                .ok_or_else(|| Error::Json {
                    path: path.to_path_buf(),
                    message: format!("missing column `{c}`"),
                })
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let values = idx
            .iter()
            .zip(columns)
            .map(|(&i, c)| parse_field(path, row + 1, c, record.get(i).unwrap_or("")))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    Ok(rows)
}

/// Writes `position,weight` rows.
pub fn write_measure_csv(path: impl AsRef<Path>, mu: &AtomicMeasure) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let wrap = |e| Error::csv(path, e);
    w.write_record(["position", "weight"]).map_err(wrap)?;
    for a in mu.atoms() {
        w.write_record([a.position.to_string(), a.weight.to_string()])
            .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a `position,weight` file written by [`write_measure_csv`].
pub fn read_measure_csv(path: impl AsRef<Path>) -> Result<AtomicMeasure> {
    let path = path.as_ref();
    let rows = read_columns(path, &["position", "weight"])?;
    let atoms = rows.into_iter().map(|r| Atom::new(r[0], r[1])).collect();
    AtomicMeasure::from_normalized(atoms)
}

/// Writes one `value` per row.
pub fn write_values_csv(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let wrap = |e| Error::csv(path, e);
    w.write_record(["value"]).map_err(wrap)?;
    for v in values {
        w.write_record([v.to_string()]).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_values_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    Ok(read_columns(path, &["value"])?
        .into_iter()
        .map(|r| r[0])
        .collect())
}

/// Writes `t,mass,mean,variance,min,max` rows.
pub fn write_trajectory_csv(
    path: impl AsRef<Path>,
    times: &[f64],
    stats: &[SnapshotStats],
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let wrap = |e| Error::csv(path, e);
    w.write_record(["t", "mass", "mean", "variance", "min", "max"])
        .map_err(wrap)?;
    for (t, s) in times.iter().zip(stats) {
        w.write_record([*t, s.mass, s.mean, s.variance, s.min, s.max].map(|v| v.to_string()))
            .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trajectory_csv(path: impl AsRef<Path>) -> Result<(Vec<f64>, Vec<SnapshotStats>)> {
    let rows = read_columns(
        path.as_ref(),
        &["t", "mass", "mean", "variance", "min", "max"],
    )?;
    Ok(rows
        .into_iter()
        .map(|r| {
            (
                r[0],
                SnapshotStats {
                    mass: r[1],
                    mean: r[2],
                    variance: r[3],
                    min: r[4],
                    max: r[5],
                },
            )
        })
        .unzip())
}

/// One histogram bin `[left, right)`; the last bin is closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub left: f64,
    pub right: f64,
    pub count: u64,
}

/// `bins` equal-width bins spanning `[min, max]` of `values`. A sample with
/// a single distinct value yields one zero-width bin.
pub fn histogram(values: &[f64], bins: usize) -> Result<Vec<Bin>> {
    if values.is_empty() || bins == 0 {
        return Err(Error::InvalidInput(
            "histogram needs values and at least one bin".into(),
        ));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidInput(
            "histogram values must be finite".into(),
        ));
    }
    if lo == hi {
        return Ok(vec![Bin {
            left: lo,
            right: hi,
            count: values.len() as u64,
        }]);
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| Bin {
            left: lo + k as f64 * width,
            right: if k + 1 == bins {
                hi
            } else {
                lo + (k + 1) as f64 * width
            },
            count,
        })
        .collect())
}

/// Writes `bin_left,bin_right,count` rows.
pub fn write_histogram_csv(path: impl AsRef<Path>, bins: &[Bin]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let wrap = |e| Error::csv(path, e);
    w.write_record(["bin_left", "bin_right", "count"])
        .map_err(wrap)?;
    for b in bins {
        w.write_record([b.left.to_string(), b.right.to_string(), b.count.to_string()])
            .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        message: format!("at `{}`: {}", e.path(), e.inner()),
    })
}

/// How a snapshot file stores its state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotFormat {
    /// `position,weight` atoms.
    Measure,
    /// One wealth value per individual.
    Values,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub index: usize,
    pub t: f64,
    /// Path relative to the run directory.
    pub file: PathBuf,
    pub format: SnapshotFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<PathBuf>,
}

/// Everything needed to rerun and interpret a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub mode: String,
    pub config: RunConfig,
    pub seed: u64,
    pub rng: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_convention: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<u64>,
    #[serde(default)]
    pub snapshots: Vec<SnapshotEntry>,
    /// Cumulative mass lost through the grid boundary, per snapshot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lost_mass: Option<Vec<f64>>,
    /// Accumulated transport cost of compressions in atomic runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compression_transport: Option<f64>,
}

impl Manifest {
    pub fn new(config: &RunConfig, rng: &str) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            mode: config.mode.as_str().to_string(),
            config: config.clone(),
            seed: config.seed,
            rng: rng.to_string(),
            rate_convention: None,
            events: None,
            snapshots: Vec::new(),
            lost_mass: None,
            compression_transport: None,
        }
    }

    /// Snapshot whose time matches `t` to within `1e-9·max(1, |t|)`.
    pub fn snapshot_at(&self, t: f64) -> Option<&SnapshotEntry> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.snapshots.iter().find(|s| (s.t - t).abs() <= tol)
    }
}

pub fn read_manifest(run_dir: impl AsRef<Path>) -> Result<Manifest> {
    read_json(run_dir.as_ref().join(MANIFEST_FILE))
}
