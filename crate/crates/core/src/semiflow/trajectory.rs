use serde::{Deserialize, Serialize};

use crate::measures::AtomicMeasure;

/// Per-snapshot summary: mass, mean, second central moment, support bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotStats {
    pub mass: f64,
    pub mean: f64,
    pub variance: f64,
    pub min: f64,
    pub max: f64,
}

/// States that can report [`SnapshotStats`].
pub trait Snapshot {
    fn snapshot_stats(&self) -> SnapshotStats;
}

impl Snapshot for AtomicMeasure {
    fn snapshot_stats(&self) -> SnapshotStats {
        let (min, max) = self.support_bounds().unwrap_or((f64::NAN, f64::NAN));
        SnapshotStats {
            mass: self.mass(),
            mean: self.mean().unwrap_or(f64::NAN),
            variance: self.variance().unwrap_or(f64::NAN),
            min,
            max,
        }
    }
}

/// Time-stamped snapshots of a deterministic run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
    pub stats: Vec<SnapshotStats>,
    /// Accumulated transport cost of all compressions performed during the
    /// run (zero for grid runs).
    pub compression_transport: f64,
}

impl<S: Snapshot> Trajectory<S> {
    pub(crate) fn new() -> Self {
        Trajectory {
            times: Vec::new(),
            states: Vec::new(),
            stats: Vec::new(),
            compression_transport: 0.0,
        }
    }

    pub(crate) fn push(&mut self, t: f64, state: S) {
        self.stats.push(state.snapshot_stats());
        self.times.push(t);
        self.states.push(state);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, &S)> {
        Some((*self.times.last()?, self.states.last()?))
    }

    /// Snapshot index whose time matches `t` to within `1e-9·max(1, |t|)`.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.times.iter().position(|&s| (s - t).abs() <= tol)
    }

    /// Largest `|mass(t) − mass(0)| / |mass(0)|` over snapshots.
    pub fn max_relative_mass_drift(&self) -> f64 {
        let Some(first) = self.stats.first() else {
            return 0.0;
        };
        self.stats
            .iter()
            .map(|s| (s.mass - first.mass).abs() / first.mass.abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|mean(t) − mean(0)| / (1 + |mean(0)|)` over snapshots.
    pub fn max_relative_mean_drift(&self) -> f64 {
        let Some(first) = self.stats.first() else {
            return 0.0;
        };
        self.stats
            .iter()
            .map(|s| (s.mean - first.mean).abs() / (1.0 + first.mean.abs()))
            .fold(0.0, f64::max)
    }
}
