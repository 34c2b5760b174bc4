use crate::error::{Error, Result};
use crate::kernels::TransferKernel;
use crate::measures::{normalize_finite, Atom, AtomicMeasure, CompressionReport};

use super::trajectory::{Snapshot, Trajectory};
use super::{checked_snapshot_times, march, March};

pub const DEFAULT_ATOM_BUDGET: usize = 2000;

/// Largest number of atom pairs a single bilinear evaluation may visit.
pub const DEFAULT_PAIR_LIMIT: usize = 50_000_000;

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Transfer rate (1/time).
    pub tau: f64,
    pub dt: f64,
    pub t_end: f64,
    pub atom_budget: usize,
    pub kernel: TransferKernel,
    /// Times at which snapshots are recorded besides `t = 0`. Empty means
    /// every step.
    pub snapshot_times: Vec<f64>,
    pub pair_limit: usize,
    /// Restore the pre-compression variance after each merge pass; see
    /// [`AtomicMeasure::compress_preserving_variance`].
    pub preserve_variance: bool,
}

impl SolverConfig {
    pub fn new(kernel: TransferKernel, tau: f64, dt: f64, t_end: f64) -> Self {
        SolverConfig {
            tau,
            dt,
            t_end,
            atom_budget: DEFAULT_ATOM_BUDGET,
            kernel,
            snapshot_times: Vec::new(),
            pair_limit: DEFAULT_PAIR_LIMIT,
            preserve_variance: true,
        }
    }

    pub fn with_budget(mut self, atom_budget: usize) -> Self {
        self.atom_budget = atom_budget;
        self
    }

    pub fn with_preserve_variance(mut self, preserve: bool) -> Self {
        self.preserve_variance = preserve;
        self
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "tau must be > 0, got {}",
                self.tau
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "dt must be > 0, got {}",
                self.dt
            )));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "t_end must be >= 0, got {}",
                self.t_end
            )));
        }
        if self.t_end > 0.0 && self.dt > self.t_end {
            return Err(Error::InvalidConfig(format!(
                "dt ({}) must not exceed t_end ({})",
                self.dt, self.t_end
            )));
        }
        if self.atom_budget < 1 {
            return Err(Error::InvalidConfig("atom_budget must be >= 1".into()));
        }
        self.kernel.validate()?;
        checked_snapshot_times(&self.snapshot_times, self.t_end)?;
        Ok(())
    }
}

/// `B(u, v) = ∬ K(·, x1, x2) u(dx1) v(dx2)` on atomic measures.
pub fn bilinear_b(
    u: &AtomicMeasure,
    v: &AtomicMeasure,
    kernel: &TransferKernel,
) -> Result<AtomicMeasure> {
    bilinear_b_limited(u, v, kernel, DEFAULT_PAIR_LIMIT)
}

pub fn bilinear_b_limited(
    u: &AtomicMeasure,
    v: &AtomicMeasure,
    kernel: &TransferKernel,
    pair_limit: usize,
) -> Result<AtomicMeasure> {
    kernel.validate()?;
    check_pairs(u.len(), v.len(), pair_limit)?;
    let mut out = Vec::with_capacity(4 * u.len() * v.len());
    for a in u.atoms() {
        for b in v.atoms() {
            let w = a.weight * b.weight;
            kernel.for_each_atom(a.position, b.position, |y, k| out.push(Atom::new(y, k * w)));
        }
    }
    Ok(normalize_finite(out, u.merge_tol().max(v.merge_tol())))
}

fn check_pairs(n: usize, m: usize, limit: usize) -> Result<()> {
    match n.checked_mul(m) {
        Some(p) if p <= limit => Ok(()),
        _ => Err(Error::Resource(format!(
            "{n} x {m} atom pairs exceed the limit of {limit}; compress the inputs first"
        ))),
    }
}

/// Raw (unnormalized) atoms of `scale · B(u, u)`, using exchange symmetry of
/// the kernel to visit each unordered pair once.
fn quadratic_atoms(u: &AtomicMeasure, kernel: &TransferKernel, scale: f64, out: &mut Vec<Atom>) {
    let atoms = u.atoms();
    for (i, a) in atoms.iter().enumerate() {
        let wa = a.weight * scale;
        kernel.for_each_atom(a.position, a.position, |y, k| {
            out.push(Atom::new(y, k * wa * a.weight))
        });
        let wa2 = 2.0 * wa;
        for b in &atoms[i + 1..] {
            let w = wa2 * b.weight;
            kernel.for_each_atom(a.position, b.position, |y, k| out.push(Atom::new(y, k * w)));
        }
    }
}

fn require_nonnegative(u: &AtomicMeasure, what: &str) -> Result<()> {
    if u.is_nonnegative() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{what} requires a nonnegative measure"
        )))
    }
}

/// `T(u) = B(u, u) / ∫u`, with `T(0) = 0`.
pub fn transfer_t(u: &AtomicMeasure, kernel: &TransferKernel) -> Result<AtomicMeasure> {
    kernel.validate()?;
    require_nonnegative(u, "transfer operator")?;
    if u.is_zero() {
        return Ok(AtomicMeasure::zero());
    }
    check_pairs(u.len(), u.len(), DEFAULT_PAIR_LIMIT)?;
    let mut out = Vec::with_capacity(2 * u.len() * u.len());
    quadratic_atoms(u, kernel, 1.0 / u.mass(), &mut out);
    Ok(normalize_finite(out, u.merge_tol()))
}

/// One exponential step followed by variance-preserving compression to
/// `atom_budget`.
pub fn step_exponential(
    u: &AtomicMeasure,
    dt: f64,
    tau: f64,
    kernel: &TransferKernel,
    atom_budget: usize,
) -> Result<AtomicMeasure> {
    step_exponential_with_report(u, dt, tau, kernel, atom_budget, DEFAULT_PAIR_LIMIT, true)
        .map(|(m, _)| m)
}

pub fn step_exponential_with_report(
    u: &AtomicMeasure,
    dt: f64,
    tau: f64,
    kernel: &TransferKernel,
    atom_budget: usize,
    pair_limit: usize,
    preserve_variance: bool,
) -> Result<(AtomicMeasure, CompressionReport)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidConfig(format!("dt must be > 0, got {dt}")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidConfig(format!("tau must be > 0, got {tau}")));
    }
    kernel.validate()?;
    require_nonnegative(u, "exponential step")?;
    if u.is_zero() {
        return Ok((AtomicMeasure::zero(), CompressionReport::default()));
    }
    check_pairs(u.len(), u.len(), pair_limit)?;
    let keep = (-2.0 * tau * dt).exp();
    let gain = -(-2.0 * tau * dt).exp_m1();
    let mut raw = Vec::with_capacity(2 * u.len() * u.len() + u.len());
    raw.extend(
        u.atoms()
            .iter()
            .map(|a| Atom::new(a.position, keep * a.weight)),
    );
    quadratic_atoms(u, kernel, gain / u.mass(), &mut raw);
    let raw = normalize_finite(raw, u.merge_tol());
    if preserve_variance {
        raw.compress_preserving_variance(atom_budget)
    } else {
        raw.compress_with_report(atom_budget)
    }
}

/// Integrates from `u0` to `config.t_end`, recording `t = 0` and the
/// requested snapshots. `u0` is compressed to the atom budget before the
/// first step; the `t = 0` snapshot is `u0` itself.
pub fn evolve(u0: &AtomicMeasure, config: &SolverConfig) -> Result<Trajectory<AtomicMeasure>> {
    config.validate()?;
    require_nonnegative(u0, "evolve")?;
    if u0.is_zero() {
        return Err(Error::InvalidInput("initial measure has zero mass".into()));
    }
    let mut traj = Trajectory::new();
    traj.push(0.0, u0.clone());
    let (mut state, report) = if config.preserve_variance {
        u0.compress_preserving_variance(config.atom_budget)?
    } else {
        u0.compress_with_report(config.atom_budget)?
    };
    let mut transport = report.transport_bound;
    march(config.t_end, config.dt, &config.snapshot_times, |ev| {
        match ev {
            March::Step(h) => {
                let (next, rep) = step_exponential_with_report(
                    &state,
                    h,
                    config.tau,
                    &config.kernel,
                    config.atom_budget,
                    config.pair_limit,
                    config.preserve_variance,
                )?;
                state = next;
                transport += rep.transport_bound;
            }
            March::Record(t) => traj.push(t, state.clone()),
        }
        Ok(())
    })?;
    traj.compression_transport = transport;
    Ok(traj)
}

/// Exponential rate `r` with `d Var/dt = r · Var` for point kernels.
///
/// Follows from the second moment of the outcome mixture: a Robin Hood
/// transfer scales the pair's variance by `(1−f)² + f²`, a Sheriff transfer
/// by `(1+f)² + f²`.
pub fn variance_rate(kernel: &TransferKernel, tau: f64) -> Result<f64> {
    kernel.validate()?;
    let rh = |f: f64| -4.0 * tau * f * (1.0 - f);
    let sn = |f: f64| 4.0 * tau * f * (1.0 + f);
    match *kernel {
        TransferKernel::RobinHood { f } => Ok(rh(f)),
        TransferKernel::Sheriff { f } => Ok(sn(f)),
        TransferKernel::Mixed { p, f1, f2 } => Ok(p * rh(f1) + (1.0 - p) * sn(f2)),
        _ => Err(Error::Unsupported(
            "variance rate of distributed kernels depends on the base density".into(),
        )),
    }
}

/// Rescales each snapshot by `1 / (1 + ∫₀ᵗ F(S(σ)φ) dσ)` with
/// `F(u) = ∫ weight_fn du`, the time integral taken by the trapezoid rule
/// over recorded snapshots.
pub fn renormalized_flow<F>(
    traj: &Trajectory<AtomicMeasure>,
    weight_fn: F,
) -> Result<Trajectory<AtomicMeasure>>
where
    F: Fn(f64) -> f64,
{
    let mut values = Vec::with_capacity(traj.len());
    for state in &traj.states {
        for a in state.atoms() {
            let v = weight_fn(a.position);
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "weight function must be finite and nonnegative, got {v} at {}",
                    a.position
                )));
            }
        }
        values.push(state.dual_pairing(&weight_fn)?);
    }
    let mut out = Trajectory::new();
    out.compression_transport = traj.compression_transport;
    let mut integral = 0.0;
    for (k, state) in traj.states.iter().enumerate() {
        if k > 0 {
            integral += 0.5 * (values[k] + values[k - 1]) * (traj.times[k] - traj.times[k - 1]);
        }
        out.push(traj.times[k], state.scale(1.0 / (1.0 + integral)));
    }
    Ok(out)
}

impl<S: Snapshot> Trajectory<S> {
    /// Least-squares slope of `ln variance` against time over snapshots
    /// with `t` in `[t_from, t_to]`.
    pub fn log_variance_slope(&self, t_from: f64, t_to: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .times
            .iter()
            .zip(&self.stats)
            .filter(|(t, s)| **t >= t_from && **t <= t_to && s.variance > 0.0)
            .map(|(t, s)| (*t, s.variance.ln()))
            .collect();
        crate::stats::least_squares_slope(&pts)
    }
}
