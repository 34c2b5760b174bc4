//! Transfer kernels: the rule that turns an interacting pair `(x1, x2)` into
//! a probability mixture over post-transfer wealth.
//!
//! Point kernels (Robin Hood, Sheriff of Nottingham, and their p-mixture)
//! produce finitely many Dirac outcomes. Distributed kernels replace each
//! Dirac outcome by a translate of a mean-zero [`BaseDensity`].

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of representative atoms per distributed outcome.
pub const DEFAULT_QUANTILE_ATOMS: usize = 8;

/// Quadrature tolerance for the unit-mass and zero-mean checks on `g`.
pub const DENSITY_CHECK_TOL: f64 = 1e-8;

const QUADRATURE_PANELS: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointOutcome {
    pub weight: f64,
    pub position: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributedOutcome {
    pub weight: f64,
    pub shift: f64,
}

#[derive(Clone)]
pub enum DensityShape {
    /// `(w - |x|) / w²` on `[-w, w]`.
    Triangular,
    /// `1 / (2w)` on `[-w, w]`.
    Uniform,
    /// Arbitrary evaluator supported on `[-w, w]`.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for DensityShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensityShape::Triangular => f.write_str("Triangular"),
            DensityShape::Uniform => f.write_str("Uniform"),
            DensityShape::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// A probability density with zero mean, supported on `[-halfwidth, halfwidth]`.
///
/// A halfwidth of zero is the Dirac mass at the origin, which turns a
/// distributed kernel back into its point kernel.
#[derive(Debug, Clone)]
pub struct BaseDensity {
    shape: DensityShape,
    halfwidth: f64,
    /// Quantile midpoints `Q((k + 1/2) / q)`.
    offsets: Vec<f64>,
    mean: f64,
}

impl BaseDensity {
    pub fn triangular(halfwidth: f64) -> Result<Self> {
        Self::build(DensityShape::Triangular, halfwidth, DEFAULT_QUANTILE_ATOMS)
    }

    pub fn uniform(halfwidth: f64) -> Result<Self> {
        Self::build(DensityShape::Uniform, halfwidth, DEFAULT_QUANTILE_ATOMS)
    }

    /// Wraps an arbitrary evaluator. Unit mass and zero mean are checked by
    /// quadrature on `[-halfwidth, halfwidth]`.
    pub fn custom<F>(evaluator: F, halfwidth: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::build(
            DensityShape::Custom(Arc::new(evaluator)),
            halfwidth,
            DEFAULT_QUANTILE_ATOMS,
        )
    }

    /// Same density, `q` representative atoms per outcome in the atomic solver.
    pub fn with_quantile_atoms(self, q: usize) -> Result<Self> {
        Self::build(self.shape, self.halfwidth, q)
    }

    fn build(shape: DensityShape, halfwidth: f64, q: usize) -> Result<Self> {
        if !(halfwidth >= 0.0 && halfwidth.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "density halfwidth must be finite and >= 0, got {halfwidth}"
            )));
        }
        if q == 0 {
            return Err(Error::InvalidConfig(
                "quantile atom count must be >= 1".into(),
            ));
        }
        let mut density = BaseDensity {
            shape,
            halfwidth,
            offsets: Vec::new(),
            mean: 0.0,
        };
        if halfwidth == 0.0 {
            density.offsets = vec![0.0];
            return Ok(density);
        }
        let mass = density.integrate(|_| 1.0);
        if (mass - 1.0).abs() > DENSITY_CHECK_TOL {
            return Err(Error::InvalidConfig(format!(
                "base density must integrate to 1, quadrature gives {mass}"
            )));
        }
        let mean = density.integrate(|x| x);
        if mean.abs() > DENSITY_CHECK_TOL * halfwidth.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "base density must have zero mean, quadrature gives {mean}"
            )));
        }
        density.mean = mean;
        density.offsets = density.quantile_midpoints(q);
        Ok(density)
    }

    pub fn shape(&self) -> &DensityShape {
        &self.shape
    }

    pub fn halfwidth(&self) -> f64 {
        self.halfwidth
    }

    pub fn is_dirac(&self) -> bool {
        self.halfwidth == 0.0
    }

    /// Mean computed by quadrature at construction.
    pub fn numerical_mean(&self) -> f64 {
        self.mean
    }

    /// Offsets of the representative atoms, each carrying weight `1 / len`.
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn eval(&self, x: f64) -> f64 {
        let w = self.halfwidth;
        if w == 0.0 || x.abs() > w {
            return 0.0;
        }
        match &self.shape {
            DensityShape::Triangular => (w - x.abs()) / (w * w),
            DensityShape::Uniform => 0.5 / w,
            DensityShape::Custom(g) => g(x),
        }
    }

    /// Composite Simpson rule of `h(x)·g(x)` over the support.
    pub fn integrate<H: Fn(f64) -> f64>(&self, h: H) -> f64 {
        let w = self.halfwidth;
        if w == 0.0 {
            return h(0.0);
        }
        let n = QUADRATURE_PANELS;
        let step = 2.0 * w / n as f64;
        let f = |k: usize| {
            let x = -w + k as f64 * step;
            h(x) * self.eval(x)
        };
        let mut acc = f(0) + f(n);
        for k in 1..n {
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k);
        }
        acc * step / 3.0
    }

    fn quantile_midpoints(&self, q: usize) -> Vec<f64> {
        let w = self.halfwidth;
        let probs = (0..q).map(|k| (k as f64 + 0.5) / q as f64);
        match &self.shape {
            DensityShape::Triangular => probs
                .map(|p| {
                    if p <= 0.5 {
                        -w + w * (2.0 * p).sqrt()
                    } else {
                        w - w * (2.0 * (1.0 - p)).sqrt()
                    }
                })
                .collect(),
            DensityShape::Uniform => probs.map(|p| -w + 2.0 * w * p).collect(),
            DensityShape::Custom(_) => {
                // Tabulated CDF by the trapezoid rule, inverted linearly.
                let n = QUADRATURE_PANELS;
                let step = 2.0 * w / n as f64;
                let mut cdf = Vec::with_capacity(n + 1);
                let mut acc = 0.0;
                cdf.push(0.0);
                for k in 0..n {
                    let x0 = -w + k as f64 * step;
                    acc += 0.5 * step * (self.eval(x0) + self.eval(x0 + step));
                    cdf.push(acc);
                }
                probs
                    .map(|p| {
                        let target = p * acc;
                        let k = cdf.partition_point(|&c| c < target).clamp(1, n);
                        let (c0, c1) = (cdf[k - 1], cdf[k]);
                        let frac = if c1 > c0 {
                            (target - c0) / (c1 - c0)
                        } else {
                            0.5
                        };
                        -w + (k as f64 - 1.0 + frac) * step
                    })
                    .collect()
            }
        }
    }
}

/// Kernel variants. Fractions live in `(0, 1)`, `p` in `[0, 1]`.
#[derive(Debug, Clone)]
pub enum TransferKernel {
    RobinHood { f: f64 },
    Sheriff { f: f64 },
    Mixed { p: f64, f1: f64, f2: f64 },
    DistributedRobinHood { f: f64, g: BaseDensity },
    DistributedSheriff { f: f64, g: BaseDensity },
}

fn check_fraction(name: &str, f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "transfer fraction {name} must lie in (0, 1), got {f}"
        )))
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "redistribution probability p must lie in [0, 1], got {p}"
        )))
    }
}

/// Robin Hood outcomes: the poorer party gains `f` of the gap.
pub fn outcomes_rh(x1: f64, x2: f64, f: f64) -> Result<Vec<PointOutcome>> {
    check_fraction("f", f)?;
    Ok(rh_pair(x1, x2, f).collect_outcomes(1.0))
}

/// Sheriff of Nottingham outcomes: the richer party takes `f` of the gap.
pub fn outcomes_sn(x1: f64, x2: f64, f: f64) -> Result<Vec<PointOutcome>> {
    check_fraction("f", f)?;
    Ok(sn_pair(x1, x2, f).collect_outcomes(1.0))
}

/// `p`-mixture of the Robin Hood and Sheriff outcomes.
pub fn outcomes_mixed(x1: f64, x2: f64, p: f64, f1: f64, f2: f64) -> Result<Vec<PointOutcome>> {
    check_probability(p)?;
    check_fraction("f1", f1)?;
    check_fraction("f2", f2)?;
    let mut out = rh_pair(x1, x2, f1).collect_outcomes(p);
    out.extend(sn_pair(x1, x2, f2).collect_outcomes(1.0 - p));
    Ok(merge_duplicates(out))
}

/// The two translates of `g` making up a distributed kernel's outcome.
pub fn outcomes_distributed(
    x1: f64,
    x2: f64,
    kernel: &TransferKernel,
) -> Result<Vec<DistributedOutcome>> {
    kernel.validate()?;
    let pair = match kernel {
        TransferKernel::DistributedRobinHood { f, .. } => rh_pair(x1, x2, *f),
        TransferKernel::DistributedSheriff { f, .. } => sn_pair(x1, x2, *f),
        _ => {
            return Err(Error::InvalidConfig(
                "distributed outcomes require a distributed kernel".into(),
            ))
        }
    };
    Ok(vec![
        DistributedOutcome {
            weight: 0.5,
            shift: pair.0,
        },
        DistributedOutcome {
            weight: 0.5,
            shift: pair.1,
        },
    ])
}

#[derive(Debug, Clone, Copy)]
struct OutcomePair(f64, f64, bool);

impl OutcomePair {
    fn collect_outcomes(self, scale: f64) -> Vec<PointOutcome> {
        if scale == 0.0 {
            return Vec::new();
        }
        if self.2 {
            vec![PointOutcome {
                weight: scale,
                position: self.0,
            }]
        } else {
            vec![
                PointOutcome {
                    weight: 0.5 * scale,
                    position: self.0,
                },
                PointOutcome {
                    weight: 0.5 * scale,
                    position: self.1,
                },
            ]
        }
    }
}

#[inline]
fn rh_pair(x1: f64, x2: f64, f: f64) -> OutcomePair {
    if f == 0.5 {
        // Both outcomes land on the midpoint.
        return OutcomePair(0.5 * (x1 + x2), 0.5 * (x1 + x2), true);
    }
    OutcomePair(x2 - f * (x2 - x1), x1 - f * (x1 - x2), false)
}

#[inline]
fn sn_pair(x1: f64, x2: f64, f: f64) -> OutcomePair {
    OutcomePair(x2 + f * (x2 - x1), x1 + f * (x1 - x2), false)
}

fn merge_duplicates(outcomes: Vec<PointOutcome>) -> Vec<PointOutcome> {
    let mut merged: Vec<PointOutcome> = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        match merged.iter_mut().find(|m| m.position == o.position) {
            Some(m) => m.weight += o.weight,
            None => merged.push(o),
        }
    }
    merged
}

impl TransferKernel {
    pub fn robin_hood(f: f64) -> Result<Self> {
        let k = TransferKernel::RobinHood { f };
        k.validate()?;
        Ok(k)
    }

    pub fn sheriff(f: f64) -> Result<Self> {
        let k = TransferKernel::Sheriff { f };
        k.validate()?;
        Ok(k)
    }

    pub fn mixed(p: f64, f1: f64, f2: f64) -> Result<Self> {
        let k = TransferKernel::Mixed { p, f1, f2 };
        k.validate()?;
        Ok(k)
    }

    pub fn distributed_robin_hood(f: f64, g: BaseDensity) -> Result<Self> {
        let k = TransferKernel::DistributedRobinHood { f, g };
        k.validate()?;
        Ok(k)
    }

    pub fn distributed_sheriff(f: f64, g: BaseDensity) -> Result<Self> {
        let k = TransferKernel::DistributedSheriff { f, g };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TransferKernel::RobinHood { f }
            | TransferKernel::Sheriff { f }
            | TransferKernel::DistributedRobinHood { f, .. }
            | TransferKernel::DistributedSheriff { f, .. } => check_fraction("f", *f),
            TransferKernel::Mixed { p, f1, f2 } => {
                check_probability(*p)?;
                check_fraction("f1", *f1)?;
                check_fraction("f2", *f2)
            }
        }
    }

    pub fn is_distributed(&self) -> bool {
        matches!(
            self,
            TransferKernel::DistributedRobinHood { .. } | TransferKernel::DistributedSheriff { .. }
        )
    }

    /// Point outcomes for point kernels; for distributed kernels the
    /// outcome translates are expanded into the base density's
    /// representative atoms.
    pub fn point_outcomes(&self, x1: f64, x2: f64) -> Vec<PointOutcome> {
        let mut out = Vec::with_capacity(4);
        self.for_each_atom(x1, x2, |position, weight| {
            out.push(PointOutcome { weight, position })
        });
        out
    }

    /// Calls `emit(position, weight)` for each atom of the outcome mixture.
    /// Parameters are assumed validated.
    #[inline]
    pub fn for_each_atom<F: FnMut(f64, f64)>(&self, x1: f64, x2: f64, mut emit: F) {
        let mut emit_pair = |pair: OutcomePair, scale: f64| {
            if scale == 0.0 {
                return;
            }
            if pair.2 {
                emit(pair.0, scale);
            } else {
                emit(pair.0, 0.5 * scale);
                emit(pair.1, 0.5 * scale);
            }
        };
        match self {
            TransferKernel::RobinHood { f } => emit_pair(rh_pair(x1, x2, *f), 1.0),
            TransferKernel::Sheriff { f } => emit_pair(sn_pair(x1, x2, *f), 1.0),
            TransferKernel::Mixed { p, f1, f2 } => {
                emit_pair(rh_pair(x1, x2, *f1), *p);
                emit_pair(sn_pair(x1, x2, *f2), 1.0 - *p);
            }
            TransferKernel::DistributedRobinHood { f, g }
            | TransferKernel::DistributedSheriff { f, g } => {
                let pair = if matches!(self, TransferKernel::DistributedRobinHood { .. }) {
                    rh_pair(x1, x2, *f)
                } else {
                    sn_pair(x1, x2, *f)
                };
                let w = 0.5 / g.offsets.len() as f64;
                for shift in [pair.0, pair.1] {
                    for off in &g.offsets {
                        emit(shift + off, w);
                    }
                }
            }
        }
    }
}

/// Total weight and first moment of a kernel's outcome mixture at a pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureMoments {
    pub total_weight: f64,
    pub first_moment: f64,
}

/// Anything that can report the mass and first moment of its outcome
/// mixture; the input to [`validate_assumption`].
pub trait OutcomeMixture {
    fn mixture_moments(&self, x1: f64, x2: f64) -> MixtureMoments;
}

impl OutcomeMixture for TransferKernel {
    fn mixture_moments(&self, x1: f64, x2: f64) -> MixtureMoments {
        match self {
            TransferKernel::DistributedRobinHood { g, .. }
            | TransferKernel::DistributedSheriff { g, .. } => {
                let outcomes = outcomes_distributed(x1, x2, self).unwrap_or_default();
                MixtureMoments {
                    total_weight: outcomes.iter().map(|o| o.weight).sum(),
                    first_moment: outcomes
                        .iter()
                        .map(|o| o.weight * (o.shift + g.numerical_mean()))
                        .sum(),
                }
            }
            _ => point_moments(&self.point_outcomes(x1, x2)),
        }
    }
}

impl<F> OutcomeMixture for F
where
    F: Fn(f64, f64) -> Vec<PointOutcome>,
{
    fn mixture_moments(&self, x1: f64, x2: f64) -> MixtureMoments {
        point_moments(&self(x1, x2))
    }
}

fn point_moments(outcomes: &[PointOutcome]) -> MixtureMoments {
    MixtureMoments {
        total_weight: outcomes.iter().map(|o| o.weight).sum(),
        first_moment: outcomes.iter().map(|o| o.weight * o.position).sum(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub pairs_checked: usize,
    pub tol: f64,
    /// max |Σ weights − 1|
    pub max_weight_deviation: f64,
    /// max |mixture mean − (x1+x2)/2|
    pub max_mean_deviation: f64,
    pub worst_weight_pair: Option<(f64, f64)>,
    pub worst_mean_pair: Option<(f64, f64)>,
    pub weights_pass: bool,
    pub mean_pass: bool,
    pub passed: bool,
}

/// Checks unit total weight and mean `(x1+x2)/2` of the outcome mixture on
/// every sample pair. Failures are reported, never raised.
///
/// The mean deviation is measured relative to `max(1, |x1|, |x2|)` so that
/// a fixed tolerance is meaningful across wealth scales.
pub fn validate_assumption<K: OutcomeMixture + ?Sized>(
    kernel: &K,
    sample_pairs: &[(f64, f64)],
    tol: f64,
) -> AssumptionReport {
    let mut report = AssumptionReport {
        pairs_checked: sample_pairs.len(),
        tol,
        max_weight_deviation: 0.0,
        max_mean_deviation: 0.0,
        worst_weight_pair: None,
        worst_mean_pair: None,
        weights_pass: false,
        mean_pass: false,
        passed: false,
    };
    for &(x1, x2) in sample_pairs {
        let m = kernel.mixture_moments(x1, x2);
        let wdev = (m.total_weight - 1.0).abs();
        let scale = 1.0f64.max(x1.abs()).max(x2.abs());
        let mdev = (m.first_moment - 0.5 * (x1 + x2)).abs() / scale;
        if wdev > report.max_weight_deviation || report.worst_weight_pair.is_none() {
            report.max_weight_deviation = wdev;
            report.worst_weight_pair = Some((x1, x2));
        }
        if mdev > report.max_mean_deviation || report.worst_mean_pair.is_none() {
            report.max_mean_deviation = mdev;
            report.worst_mean_pair = Some((x1, x2));
        }
    }
    let nonempty = !sample_pairs.is_empty();
    report.weights_pass = nonempty && report.max_weight_deviation <= tol;
    report.mean_pass = nonempty && report.max_mean_deviation <= tol;
    report.passed = report.weights_pass && report.mean_pass;
    report
}
