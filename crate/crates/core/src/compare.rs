//! Snapshot-by-snapshot comparison of two run directories.
//!
//! Population snapshots are read as empirical measures divided by `N`, so a
//! simulation compares directly with a deterministic run started from the
//! normalized initial data.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::{read_manifest, read_measure_csv, read_values_csv, Manifest, SnapshotFormat};
use crate::measures::{AtomicMeasure, W1_MASS_TOL};
use crate::stats::summarize_measure;

/// Differences `b − a` at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareEntry {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CompareEntry {
    fn failed(t: f64, error: String) -> Self {
        CompareEntry {
            t,
            w1: None,
            mass: None,
            mean_delta: None,
            variance_delta: None,
            min_delta: None,
            max_delta: None,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub run_a: PathBuf,
    pub run_b: PathBuf,
    pub entries: Vec<CompareEntry>,
}

impl ComparisonReport {
    /// Largest W1 over entries that compared successfully.
    pub fn max_w1(&self) -> Option<f64> {
        self.entries.iter().filter_map(|e| e.w1).reduce(f64::max)
    }

    pub fn has_errors(&self) -> bool {
        self.entries.iter().any(|e| e.error.is_some())
    }

    /// Fixed-width text table.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>10} {:>14} {:>14} {:>14} {:>14} {:>14}  note",
            "t", "W1", "d_mean", "d_variance", "d_min", "d_max"
        );
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{:>10} {:>14} {:>14} {:>14} {:>14} {:>14}  {}",
                e.t,
                fmt(e.w1),
                fmt(e.mean_delta),
                fmt(e.variance_delta),
                fmt(e.min_delta),
                fmt(e.max_delta),
                e.error.as_deref().unwrap_or("")
            );
        }
        out
    }
}

/// Loads the snapshot recorded at time `t`, normalizing populations by `N`.
pub fn load_snapshot(run_dir: &Path, manifest: &Manifest, t: f64) -> Result<AtomicMeasure> {
    let entry = manifest.snapshot_at(t).ok_or_else(|| {
        Error::InvalidInput(format!(
            "run {} has no snapshot at t = {t}",
            run_dir.display()
        ))
    })?;
    let path = run_dir.join(&entry.file);
    match entry.format {
        SnapshotFormat::Measure => read_measure_csv(&path),
        SnapshotFormat::Values => {
            let values = read_values_csv(&path)?;
            let n = values.len() as f64;
            Ok(AtomicMeasure::empirical(&values)?.scale(1.0 / n))
        }
    }
}

/// Compares the snapshots of two runs at each time in `times`.
///
/// A missing snapshot yields an entry with `error` set; unequal masses
/// reject the whole comparison.
pub fn compare(run_a: &Path, run_b: &Path, times: &[f64]) -> Result<ComparisonReport> {
    let ma = read_manifest(run_a)?;
    let mb = read_manifest(run_b)?;
    let mut entries = Vec::with_capacity(times.len());
    for &t in times {
        let (a, b) = match (load_snapshot(run_a, &ma, t), load_snapshot(run_b, &mb, t)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                entries.push(CompareEntry::failed(t, e.to_string()));
                continue;
            }
        };
        let (mass_a, mass_b) = (a.mass(), b.mass());
        if (mass_a - mass_b).abs() > W1_MASS_TOL * mass_a.abs().max(mass_b.abs()) {
            return Err(Error::InvalidInput(format!(
                "mass mismatch at t = {t}: {} has mass {mass_a}, {} has mass {mass_b}",
                run_a.display(),
                run_b.display()
            )));
        }
        let sa = summarize_measure(&a)?;
        let sb = summarize_measure(&b)?;
        entries.push(CompareEntry {
            t,
            w1: Some(a.wasserstein1(&b)?),
            mass: Some(mass_a),
            mean_delta: Some(sb.mean - sa.mean),
            variance_delta: Some(sb.variance - sa.variance),
            min_delta: Some(sb.min - sa.min),
            max_delta: Some(sb.max - sa.max),
            error: None,
        });
    }
    Ok(ComparisonReport {
        run_a: run_a.to_path_buf(),
        run_b: run_b.to_path_buf(),
        entries,
    })
}
