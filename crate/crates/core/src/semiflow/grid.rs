use crate::error::{Error, Result};
use crate::kernels::{BaseDensity, TransferKernel};
use crate::measures::{Atom, AtomicMeasure};

use super::atomic::SolverConfig;
use super::trajectory::{Snapshot, SnapshotStats, Trajectory};
use super::{march, March};

/// Nonnegative density sampled at `x_min + k·dx`, `k = 0..len`.
///
/// Values are individuals per unit of wealth; mass is `dx · Σ values`.
/// Between nodes the density is the linear interpolant, and it vanishes
/// outside `[x_min, x_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    x_min: f64,
    dx: f64,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(x_min: f64, dx: f64, values: Vec<f64>) -> Result<Self> {
        if !x_min.is_finite() || !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "grid needs finite x_min and dx > 0, got x_min={x_min}, dx={dx}"
            )));
        }
        if values.len() < 2 {
            return Err(Error::InvalidInput("grid needs at least two nodes".into()));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "grid density values must be finite and >= 0, found {bad}"
            )));
        }
        Ok(GridDensity { x_min, dx, values })
    }

    /// Samples `density` at the nodes of `[x_min, x_max]` spaced by about `dx`.
    pub fn from_fn<F: Fn(f64) -> f64>(x_min: f64, x_max: f64, dx: f64, density: F) -> Result<Self> {
        if x_max.partial_cmp(&x_min) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::InvalidInput(format!(
                "grid range [{x_min}, {x_max}] is empty"
            )));
        }
        let n = ((x_max - x_min) / dx).round() as usize + 1;
        let values = (0..n).map(|k| density(x_min + k as f64 * dx)).collect();
        Self::new(x_min, dx, values)
    }

    /// A grid of the same geometry holding zeros.
    pub fn zeros_like(&self) -> Self {
        GridDensity {
            x_min: self.x_min,
            dx: self.dx,
            values: vec![0.0; self.values.len()],
        }
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.node(self.values.len() - 1)
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn node(&self, k: usize) -> f64 {
        self.x_min + k as f64 * self.dx
    }

    pub fn mass(&self) -> f64 {
        self.dx * self.values.iter().sum::<f64>()
    }

    pub fn scale(&self, lambda: f64) -> Self {
        GridDensity {
            x_min: self.x_min,
            dx: self.dx,
            values: self.values.iter().map(|v| v * lambda).collect(),
        }
    }

    fn same_geometry(&self, other: &GridDensity) -> bool {
        self.x_min == other.x_min && self.dx == other.dx && self.values.len() == other.values.len()
    }

    /// One atom per node carrying `dx · value`.
    pub fn to_atomic(&self) -> AtomicMeasure {
        let atoms = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &v)| Atom::new(self.node(k), v * self.dx))
            .collect();
        crate::measures::normalize_finite(atoms, crate::measures::DEFAULT_MERGE_TOL)
    }

    /// Support of the interpolant: half a cell beyond the extreme nodes.
    fn support(&self) -> (f64, f64) {
        (self.x_min - 0.5 * self.dx, self.x_max() + 0.5 * self.dx)
    }

    /// Linear interpolation between nodes, constant over the outer half
    /// cells, so the interpolant integrates to exactly `dx · Σ values`.
    #[inline]
    fn interp(&self, y: f64) -> f64 {
        let s = (y - self.x_min) / self.dx;
        let last = (self.values.len() - 1) as f64;
        if !(s >= -0.5 && s <= last + 0.5) {
            return 0.0;
        }
        if s <= 0.0 {
            return self.values[0];
        }
        if s >= last {
            return self.values[self.values.len() - 1];
        }
        let k = s.floor() as usize;
        let frac = s - k as f64;
        self.values[k] + frac * (self.values[k + 1] - self.values[k])
    }
}

impl Snapshot for GridDensity {
    fn snapshot_stats(&self) -> SnapshotStats {
        let total: f64 = self.values.iter().sum();
        let mass = self.dx * total;
        let (mut mean, mut variance) = (f64::NAN, f64::NAN);
        if total > 0.0 {
            mean = self
                .values
                .iter()
                .enumerate()
                .map(|(k, v)| v * self.node(k))
                .sum::<f64>()
                / total;
            variance = self
                .values
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let d = self.node(k) - mean;
                    v * d * d
                })
                .sum::<f64>()
                / total;
        }
        let first = self.values.iter().position(|&v| v > 0.0);
        let last = self.values.iter().rposition(|&v| v > 0.0);
        SnapshotStats {
            mass,
            mean,
            variance,
            min: first.map_or(f64::NAN, |k| self.node(k)),
            max: last.map_or(f64::NAN, |k| self.node(k)),
        }
    }
}

/// Result of a grid bilinear evaluation: the part landing on the grid and
/// the mass that fell outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct GridProduct {
    pub density: GridDensity,
    pub lost_mass: f64,
}

/// `∫ u(x − a σ) v(x + b σ) dσ` by the midpoint rule in σ with step `dx`
/// over `σ ∈ [−D, D]`, `D` the support width.
fn shear_integral(u: &GridDensity, v: &GridDensity, x: f64, a: f64, b: f64) -> f64 {
    let h = u.dx;
    let n_sigma = 2 * u.values.len();
    let diameter = u.values.len() as f64 * h;
    let (lo, hi) = u.support();

    // σ-window where both arguments can fall inside the support.
    let mut s_lo = (-diameter).max((x - hi) / a);
    let mut s_hi = diameter.min((x - lo) / a);
    if b > 0.0 {
        s_lo = s_lo.max((lo - x) / b);
        s_hi = s_hi.min((hi - x) / b);
    } else if b < 0.0 {
        s_lo = s_lo.max((hi - x) / b);
        s_hi = s_hi.min((lo - x) / b);
    }
    if s_lo > s_hi {
        return 0.0;
    }
    let m_lo = (((s_lo + diameter) / h - 0.5).floor() - 1.0).max(0.0) as usize;
    let m_hi = ((((s_hi + diameter) / h - 0.5).ceil() + 2.0).max(0.0) as usize).min(n_sigma);
    let mut acc = 0.0;
    for m in m_lo..m_hi {
        let sigma = -diameter + (m as f64 + 0.5) * h;
        let pu = u.interp(x - a * sigma);
        if pu != 0.0 {
            acc += pu * v.interp(x + b * sigma);
        }
    }
    acc * h
}

/// Adds `scale · B_point(u, v)` on nodes `x_min + k·dx`, `k ∈ [−ext, n + ext)`.
fn accumulate_point(
    u: &GridDensity,
    v: &GridDensity,
    a: f64,
    b: f64,
    scale: f64,
    ext: usize,
    out: &mut [f64],
) {
    for (idx, slot) in out.iter_mut().enumerate() {
        let x = u.x_min + (idx as f64 - ext as f64) * u.dx;
        let term = shear_integral(u, v, x, a, b) + shear_integral(v, u, x, a, b);
        *slot += 0.5 * scale * term;
    }
}

fn convolve_with(values: &[f64], g: &BaseDensity, dx: f64) -> Vec<f64> {
    let j = (g.halfwidth() / dx).floor() as usize;
    if g.is_dirac() || j == 0 {
        return values.to_vec();
    }
    let mut weights: Vec<f64> = (0..=2 * j)
        .map(|i| g.eval((i as f64 - j as f64) * dx))
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let n = values.len();
    let mut out = vec![0.0; n];
    for (k, &val) in values.iter().enumerate() {
        if val == 0.0 {
            continue;
        }
        for (i, w) in weights.iter().enumerate() {
            let target = k as isize + i as isize - j as isize;
            if target >= 0 && (target as usize) < n {
                out[target as usize] += val * w;
            }
        }
    }
    out
}

/// Grid version of the bilinear transfer operator.
///
/// The Robin Hood part uses the explicit density
/// `½ ∫ u(x − (1−f)σ) v(x + fσ) + v(x − (1−f)σ) u(x + fσ) dσ`, the Sheriff
/// part the analogue with shears `(1+f)` and `−f`. Distributed kernels
/// convolve the point result with the base density. Mass landing outside
/// the grid is reported in `lost_mass` and not renormalized away.
pub fn grid_b(u: &GridDensity, v: &GridDensity, kernel: &TransferKernel) -> Result<GridProduct> {
    kernel.validate()?;
    if !u.same_geometry(v) {
        return Err(Error::InvalidInput(
            "grid_b requires densities on the same grid".into(),
        ));
    }
    let n = u.len();
    let span = (n - 1) as f64;

    // (a, b, weight) shear terms, widest SN fraction, optional spreading density.
    let mut terms: Vec<(f64, f64, f64)> = Vec::new();
    let mut sn_frac: f64 = 0.0;
    let mut spread: Option<&BaseDensity> = None;
    match kernel {
        TransferKernel::RobinHood { f } => terms.push((1.0 - f, *f, 1.0)),
        TransferKernel::Sheriff { f } => {
            terms.push((1.0 + f, -f, 1.0));
            sn_frac = *f;
        }
        TransferKernel::Mixed { p, f1, f2 } => {
            if *p > 0.0 {
                terms.push((1.0 - f1, *f1, *p));
            }
            if *p < 1.0 {
                terms.push((1.0 + f2, -f2, 1.0 - p));
                sn_frac = *f2;
            }
        }
        TransferKernel::DistributedRobinHood { f, g } => {
            terms.push((1.0 - f, *f, 1.0));
            spread = Some(g);
        }
        TransferKernel::DistributedSheriff { f, g } => {
            terms.push((1.0 + f, -f, 1.0));
            sn_frac = *f;
            spread = Some(g);
        }
    }
    let spread_nodes = spread.map_or(0, |g| (g.halfwidth() / u.dx).floor() as usize);
    let ext = (sn_frac * (span + 1.0)).ceil() as usize + spread_nodes + 1;

    let mut extended = vec![0.0; n + 2 * ext];
    for &(a, b, w) in &terms {
        accumulate_point(u, v, a, b, w, ext, &mut extended);
    }
    if let Some(g) = spread {
        extended = convolve_with(&extended, g, u.dx);
    }

    let outside: f64 = extended[..ext].iter().chain(&extended[ext + n..]).sum();
    let values = extended[ext..ext + n].to_vec();
    Ok(GridProduct {
        density: GridDensity {
            x_min: u.x_min,
            dx: u.dx,
            values,
        },
        lost_mass: outside * u.dx,
    })
}

/// `T(u) = B(u, u) / mass(u)` on the grid; lost mass is scaled alike.
pub fn grid_t(u: &GridDensity, kernel: &TransferKernel) -> Result<GridProduct> {
    let mass = u.mass();
    if mass <= 0.0 {
        return Ok(GridProduct {
            density: u.zeros_like(),
            lost_mass: 0.0,
        });
    }
    let b = grid_b(u, u, kernel)?;
    Ok(GridProduct {
        density: b.density.scale(1.0 / mass),
        lost_mass: b.lost_mass / mass,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridTrajectory {
    pub trajectory: Trajectory<GridDensity>,
    /// Cumulative mass lost through the grid boundary at each snapshot.
    pub lost_mass: Vec<f64>,
}

impl GridTrajectory {
    pub fn total_lost_mass(&self) -> f64 {
        self.lost_mass.last().copied().unwrap_or(0.0)
    }
}

pub fn grid_evolve(u0: &GridDensity, config: &SolverConfig) -> Result<GridTrajectory> {
    config.validate()?;
    if u0.mass() <= 0.0 {
        return Err(Error::InvalidInput(
            "initial grid density has zero mass".into(),
        ));
    }
    let mut traj = Trajectory::new();
    let mut lost = vec![0.0];
    traj.push(0.0, u0.clone());
    let mut state = u0.clone();
    let mut cumulative = 0.0;
    march(config.t_end, config.dt, &config.snapshot_times, |ev| {
        match ev {
            March::Step(h) => {
                let keep = (-2.0 * config.tau * h).exp();
                let gain = -(-2.0 * config.tau * h).exp_m1();
                let t_u = grid_t(&state, &config.kernel)?;
                for (s, t) in state.values.iter_mut().zip(&t_u.density.values) {
                    *s = keep * *s + gain * t;
                }
                cumulative += gain * t_u.lost_mass;
            }
            March::Record(t) => {
                traj.push(t, state.clone());
                lost.push(cumulative);
            }
        }
        Ok(())
    })?;
    Ok(GridTrajectory {
        trajectory: traj,
        lost_mass: lost,
    })
}
