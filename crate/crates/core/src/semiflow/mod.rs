//! Deterministic integration of the transfer equation
//! `∂ₜu = 2τ T(u) − 2τ u`.
//!
//! The atomic solver works on [`AtomicMeasure`](crate::measures::AtomicMeasure)
//! states, the grid solver on [`GridDensity`] states. Both advance with the
//! exponential step `u ↦ e^{−2τh} u + (1 − e^{−2τh}) T(u)`, a convex
//! combination of nonnegative measures with equal mass and first moment.

mod atomic;
mod grid;
mod trajectory;

pub use atomic::{
    bilinear_b, bilinear_b_limited, evolve, renormalized_flow, step_exponential,
    step_exponential_with_report, transfer_t, variance_rate, SolverConfig, DEFAULT_ATOM_BUDGET,
    DEFAULT_PAIR_LIMIT,
};
pub use grid::{grid_b, grid_evolve, grid_t, GridDensity, GridProduct, GridTrajectory};
pub use trajectory::{Snapshot, SnapshotStats, Trajectory};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum March {
    /// Advance the state by this much time.
    Step(f64),
    /// The state now sits at a snapshot time.
    Record(f64),
}

/// Drives a fixed-step march to `t_end`, landing exactly on every requested
/// snapshot time. Emits `Step(h)` for each sub-step and `Record(t)` after
/// each step that ends on a snapshot (or after every step when
/// `snapshot_times` is empty).
pub(crate) fn march<F>(t_end: f64, dt: f64, snapshot_times: &[f64], mut visit: F) -> Result<()>
where
    F: FnMut(March) -> Result<()>,
{
    let every_step = snapshot_times.is_empty();
    let mut pending = snapshot_times
        .iter()
        .copied()
        .filter(|&s| s > 0.0)
        .peekable();
    let mut t = 0.0;
    let mut k: u64 = 0;
    let snap_tol = 1e-9 * dt;
    while t < t_end {
        let grid_next = ((k + 1) as f64 * dt).min(t_end);
        let mut next = grid_next;
        let mut on_grid = true;
        if let Some(&s) = pending.peek() {
            if s < grid_next - snap_tol {
                next = s;
                on_grid = false;
            } else if s <= grid_next + snap_tol {
                next = s;
            }
        }
        if t_end - next <= snap_tol {
            next = t_end;
        }
        let h = next - t;
        if h > 0.0 {
            visit(March::Step(h))?;
        }
        t = next;
        if on_grid {
            k += 1;
        }
        let hit = matches!(pending.peek(), Some(&s) if (s - t).abs() <= snap_tol);
        if hit {
            pending.next();
        }
        if every_step || hit {
            visit(March::Record(t))?;
        }
    }
    Ok(())
}

pub(crate) fn checked_snapshot_times(times: &[f64], t_end: f64) -> Result<Vec<f64>> {
    for w in times.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidConfig(
                "snapshot times must be strictly increasing".into(),
            ));
        }
    }
    if let Some(&bad) = times.iter().find(|&&s| !(0.0..=t_end).contains(&s)) {
        return Err(Error::InvalidConfig(format!(
            "snapshot time {bad} outside [0, {t_end}]"
        )));
    }
    Ok(times.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(t_end: f64, dt: f64, snaps: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut steps = Vec::new();
        let mut recs = Vec::new();
        march(t_end, dt, snaps, |ev| {
            match ev {
                March::Step(h) => steps.push(h),
                March::Record(t) => recs.push(t),
            }
            Ok(())
        })
        .unwrap();
        (steps, recs)
    }

    #[test]
    fn every_step_recording() {
        let (steps, recs) = run(1.0, 0.25, &[]);
        assert_eq!(steps, vec![0.25; 4]);
        assert_eq!(recs, vec![0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn lands_on_off_grid_snapshots() {
        let (steps, recs) = run(1.0, 0.25, &[0.1, 0.3, 1.0]);
        assert_eq!(recs, vec![0.1, 0.3, 1.0]);
        let total: f64 = steps.iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert_eq!(steps.len(), 6);
    }

    #[test]
    fn rounding_near_grid_does_not_create_slivers() {
        let (steps, recs) = run(0.3, 0.1, &[0.3]);
        assert_eq!(recs, vec![0.3]);
        assert_eq!(steps.len(), 3);
        assert!(steps.iter().all(|&h| h > 0.09));
    }

    #[test]
    fn zero_horizon_does_nothing() {
        let (steps, recs) = run(0.0, 0.1, &[0.0]);
        assert!(steps.is_empty() && recs.is_empty());
    }
}
