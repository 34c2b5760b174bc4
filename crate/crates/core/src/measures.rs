//! Finite signed atomic measures on the real line.
//!
//! An [`AtomicMeasure`] is a finite sum of weighted Dirac masses kept in a
//! canonical form: atoms sorted by position, atoms closer than `merge_tol`
//! merged, zero weights dropped. Every constructor goes through
//! [`normalize`], so values are immutable and canonical once built.
//!
//! On atomic measures the Jordan/Hahn decomposition, the total variation
//! norm and the dual pairing all have exact finite formulas, which is what
//! makes the conservation checks elsewhere in the crate exact.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default merge tolerance in position units.
pub const DEFAULT_MERGE_TOL: f64 = 1e-12;

/// A weighted point mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub position: f64,
    pub weight: f64,
}

impl Atom {
    pub fn new(position: f64, weight: f64) -> Self {
        Atom { position, weight }
    }
}

impl From<(f64, f64)> for Atom {
    fn from((position, weight): (f64, f64)) -> Self {
        Atom { position, weight }
    }
}

/// A finite signed measure represented as a sorted list of point masses.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    atoms: Vec<Atom>,
    merge_tol: f64,
}

/// Disjointly supported positive and negative parts of a signed measure.
#[derive(Debug, Clone, PartialEq)]
pub struct JordanPair {
    pub positive: AtomicMeasure,
    pub negative: AtomicMeasure,
}

impl JordanPair {
    /// `positive - negative`.
    pub fn reconstruct(&self) -> AtomicMeasure {
        self.positive.sub(&self.negative)
    }

    /// The variation measure `|μ| = μ⁺ + μ⁻`.
    pub fn variation(&self) -> AtomicMeasure {
        self.positive.add(&self.negative)
    }
}

/// Diagnostics returned by [`AtomicMeasure::compress_with_report`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompressionReport {
    pub merges: usize,
    /// Sum over merges of the transport cost of moving both atoms onto
    /// their merged position; an upper bound on the W1 displacement.
    pub transport_bound: f64,
}

/// Canonical form: sort, merge atoms within `merge_tol`, drop zero weights.
///
/// A merged cluster sits at the |weight|-weighted mean of its members, which
/// for same-sign clusters is the weight-weighted mean and so preserves the
/// first moment.
pub fn normalize(atoms: Vec<Atom>, merge_tol: f64) -> Result<AtomicMeasure> {
    if !(merge_tol >= 0.0 && merge_tol.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "merge tolerance must be finite and nonnegative, got {merge_tol}"
        )));
    }
    if let Some(bad) = atoms
        .iter()
        .find(|a| !a.position.is_finite() || !a.weight.is_finite())
    {
        return Err(Error::InvalidInput(format!(
            "non-finite atom (position {}, weight {})",
            bad.position, bad.weight
        )));
    }
    Ok(normalize_finite(atoms, merge_tol))
}

/// [`normalize`] for inputs already known to be finite.
pub(crate) fn normalize_finite(mut atoms: Vec<Atom>, merge_tol: f64) -> AtomicMeasure {
    atoms.retain(|a| a.weight != 0.0);
    atoms.sort_unstable_by(|a, b| a.position.total_cmp(&b.position));

    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    // Running cluster: position, signed weight, |weight| sum.
    let mut cluster: Option<(f64, f64, f64)> = None;
    for atom in atoms {
        match cluster.as_mut() {
            Some((pos, w, abs)) if atom.position - *pos < merge_tol || atom.position == *pos => {
                let a = atom.weight.abs();
                let total = *abs + a;
                *pos += (a / total) * (atom.position - *pos);
                *w += atom.weight;
                *abs = total;
            }
            _ => {
                if let Some((pos, w, _)) = cluster.take() {
                    if w != 0.0 {
                        out.push(Atom::new(pos, w));
                    }
                }
                cluster = Some((atom.position, atom.weight, atom.weight.abs()));
            }
        }
    }
    if let Some((pos, w, _)) = cluster {
        if w != 0.0 {
            out.push(Atom::new(pos, w));
        }
    }
    AtomicMeasure {
        atoms: out,
        merge_tol,
    }
}

impl AtomicMeasure {
    /// Normalizes `atoms` with the default merge tolerance.
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        normalize(atoms, DEFAULT_MERGE_TOL)
    }

    pub fn with_tolerance(atoms: Vec<Atom>, merge_tol: f64) -> Result<Self> {
        normalize(atoms, merge_tol)
    }

    /// Keeps `atoms` verbatim when they are finite, nonzero and strictly
    /// increasing in position (the output of an earlier normalization);
    /// otherwise normalizes them.
    pub fn from_normalized(atoms: Vec<Atom>) -> Result<Self> {
        let sorted = atoms.windows(2).all(|w| w[0].position < w[1].position);
        let clean = atoms
            .iter()
            .all(|a| a.position.is_finite() && a.weight.is_finite() && a.weight != 0.0);
        if sorted && clean {
            Ok(AtomicMeasure {
                atoms,
                merge_tol: DEFAULT_MERGE_TOL,
            })
        } else {
            Self::new(atoms)
        }
    }

    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        Self::new(pairs.into_iter().map(Atom::from).collect())
    }

    pub fn zero() -> Self {
        AtomicMeasure {
            atoms: Vec::new(),
            merge_tol: DEFAULT_MERGE_TOL,
        }
    }

    /// Unit point mass at `x`.
    pub fn dirac(x: f64) -> Result<Self> {
        Self::from_pairs([(x, 1.0)])
    }

    /// Sum of unit point masses, one per value.
    pub fn empirical(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&x| Atom::new(x, 1.0)).collect())
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn into_atoms(self) -> Vec<Atom> {
        self.atoms
    }

    pub fn merge_tol(&self) -> f64 {
        self.merge_tol
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.atoms.iter().all(|a| a.weight >= 0.0)
    }

    /// `Σ |weight_i|`.
    pub fn tv_norm(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight.abs()).sum()
    }

    /// `Σ position_iⁿ · weight_i`.
    pub fn moment(&self, n: u32) -> f64 {
        match n {
            0 => self.atoms.iter().map(|a| a.weight).sum(),
            1 => self.atoms.iter().map(|a| a.position * a.weight).sum(),
            _ => self
                .atoms
                .iter()
                .map(|a| a.position.powi(n as i32) * a.weight)
                .sum(),
        }
    }

    pub fn mass(&self) -> f64 {
        self.moment(0)
    }

    /// First moment divided by mass; `None` for zero mass.
    pub fn mean(&self) -> Option<f64> {
        let m = self.mass();
        (m != 0.0).then(|| self.moment(1) / m)
    }

    /// Second central moment per unit mass.
    pub fn variance(&self) -> Option<f64> {
        let m = self.mass();
        let mean = self.mean()?;
        let ss: f64 = self
            .atoms
            .iter()
            .map(|a| {
                let d = a.position - mean;
                a.weight * d * d
            })
            .sum();
        Some(ss / m)
    }

    /// Smallest and largest atom position.
    pub fn support_bounds(&self) -> Option<(f64, f64)> {
        Some((self.atoms.first()?.position, self.atoms.last()?.position))
    }

    /// Mass assigned to the closed interval `[lo, hi]`.
    pub fn interval_mass(&self, lo: f64, hi: f64) -> f64 {
        let start = self.atoms.partition_point(|a| a.position < lo);
        self.atoms[start..]
            .iter()
            .take_while(|a| a.position <= hi)
            .map(|a| a.weight)
            .sum()
    }

    /// Hahn split of the atoms by weight sign.
    pub fn jordan_decompose(&self) -> JordanPair {
        let (pos, neg): (Vec<Atom>, Vec<Atom>) = self.atoms.iter().partition(|a| a.weight > 0.0);
        JordanPair {
            positive: AtomicMeasure {
                atoms: pos,
                merge_tol: self.merge_tol,
            },
            negative: AtomicMeasure {
                atoms: neg
                    .into_iter()
                    .map(|a| Atom::new(a.position, -a.weight))
                    .collect(),
                merge_tol: self.merge_tol,
            },
        }
    }

    pub fn positive_part(&self) -> AtomicMeasure {
        self.jordan_decompose().positive
    }

    pub fn negative_part(&self) -> AtomicMeasure {
        self.jordan_decompose().negative
    }

    /// The variation measure `|μ|`.
    pub fn abs(&self) -> AtomicMeasure {
        AtomicMeasure {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom::new(a.position, a.weight.abs()))
                .collect(),
            merge_tol: self.merge_tol,
        }
    }

    /// `∫ φ dμ = Σ φ(position_i)·weight_i`.
    pub fn dual_pairing<F>(&self, phi: F) -> Result<f64>
    where
        F: Fn(f64) -> f64,
    {
        let mut acc = 0.0;
        for a in &self.atoms {
            let v = phi(a.position);
            if !v.is_finite() {
                return Err(Error::Evaluation(format!(
                    "test function returned {v} at position {}",
                    a.position
                )));
            }
            acc += v * a.weight;
        }
        Ok(acc)
    }

    pub fn add(&self, other: &AtomicMeasure) -> AtomicMeasure {
        let mut atoms = Vec::with_capacity(self.len() + other.len());
        atoms.extend_from_slice(&self.atoms);
        atoms.extend_from_slice(&other.atoms);
        normalize_finite(atoms, self.merge_tol.max(other.merge_tol))
    }

    pub fn sub(&self, other: &AtomicMeasure) -> AtomicMeasure {
        self.add(&other.scale(-1.0))
    }

    /// Multiplies every weight by `lambda`; `lambda` must be finite.
    pub fn scale(&self, lambda: f64) -> AtomicMeasure {
        assert!(lambda.is_finite(), "scale factor must be finite");
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom::new(a.position, a.weight * lambda))
            .collect();
        normalize_finite(atoms, self.merge_tol)
    }

    /// Greedy reduction to at most `budget` atoms.
    ///
    /// # Examples
    ///
    /// ```
    /// use wealthflow::AtomicMeasure;
    ///
    /// let mu = AtomicMeasure::from_pairs([(0.0, 1.0), (1.0, 1.0)]).unwrap();
    /// let c = mu.compress(1).unwrap();
    /// assert_eq!(c.atoms()[0].position, 0.5);
    /// assert_eq!(c.mass(), 2.0);
    /// ```
    pub fn compress(&self, budget: usize) -> Result<AtomicMeasure> {
        self.compress_with_report(budget).map(|(m, _)| m)
    }

    /// Repeatedly merges the adjacent pair whose merge loses the least
    /// variance, `gap² · w_l w_r / (w_l + w_r)`, into one atom at the
    /// mass-weighted mean until at most `budget` atoms remain. Costs are
    /// compared on a mass-normalized key truncated to about 4e-9 relative
    /// precision, so rounding noise cannot reorder near-equal merges; ties go
    /// to the lowest position. Preserves mass and first moment.
    pub fn compress_with_report(
        &self,
        budget: usize,
    ) -> Result<(AtomicMeasure, CompressionReport)> {
        if budget < 1 {
            return Err(Error::InvalidInput(
                "compression budget must be >= 1".into(),
            ));
        }
        if !self.is_nonnegative() {
            return Err(Error::InvalidInput(
                "compression requires a nonnegative measure".into(),
            ));
        }
        let n = self.atoms.len();
        if n <= budget {
            return Ok((self.clone(), CompressionReport::default()));
        }

        let mut pos: Vec<f64> = self.atoms.iter().map(|a| a.position).collect();
        let mut w: Vec<f64> = self.atoms.iter().map(|a| a.weight).collect();
        let mut prev: Vec<usize> = (0..n).map(|i| i.wrapping_sub(1)).collect();
        let mut next: Vec<usize> = (1..=n).collect();
        let mut alive = vec![true; n];

        // Heap entries pack (key, left index) into one u64. An entry is
        // current when its key matches the pair's recomputed key.
        let index_bits = (usize::BITS - (n - 1).leading_zeros()).max(1);
        let drop = index_bits.max(MERGE_KEY_DROP_BITS);
        let index_mask = (1u64 << index_bits) - 1;
        let inv_mass = 1.0 / w.iter().sum::<f64>();
        let key = |w: &[f64], pos: &[f64], l: usize, r: usize| {
            merge_key(w[l], w[r], pos[r] - pos[l], inv_mass) >> drop
        };
        let pack = |k: u64, l: usize| Reverse((k << index_bits) | l as u64);
        let mut heap: BinaryHeap<Reverse<u64>> = (0..n - 1)
            .map(|i| pack(key(&w, &pos, i, i + 1), i))
            .collect::<Vec<_>>()
            .into();

        let mut report = CompressionReport::default();
        let mut remaining = n;
        while remaining > budget {
            let Reverse(entry) = heap
                .pop()
                .expect("merge heap exhausted before reaching budget");
            let l = (entry & index_mask) as usize;
            let r = next[l];
            if !alive[l] || r >= n || key(&w, &pos, l, r) != entry >> index_bits {
                continue;
            }
            let total = w[l] + w[r];
            let merged = pos[l] + (w[r] / total) * (pos[r] - pos[l]);
            report.transport_bound += w[l] * (merged - pos[l]) + w[r] * (pos[r] - merged);
            report.merges += 1;

            pos[l] = merged;
            w[l] = total;
            alive[r] = false;
            let nr = next[r];
            next[l] = nr;
            if nr < n {
                prev[nr] = l;
                heap.push(pack(key(&w, &pos, l, nr), l));
            }
            let pl = prev[l];
            if pl < n {
                heap.push(pack(key(&w, &pos, pl, l), pl));
            }
            remaining -= 1;
        }

        let atoms = (0..n)
            .filter(|&i| alive[i])
            .map(|i| Atom::new(pos[i], w[i]))
            .collect();
        Ok((
            AtomicMeasure {
                atoms,
                merge_tol: self.merge_tol,
            },
            report,
        ))
    }

    /// [`compress_with_report`](Self::compress_with_report) followed by a
    /// stretch of all positions about the mean that restores the variance
    /// of `self`. Mass and mean are unchanged; the stretch displacement is
    /// added to the report's transport bound. Signed measures, or outcomes
    /// with zero variance, are returned without the stretch.
    pub fn compress_preserving_variance(
        &self,
        budget: usize,
    ) -> Result<(AtomicMeasure, CompressionReport)> {
        let (merged, mut report) = self.compress_with_report(budget)?;
        if report.merges == 0 || !self.is_nonnegative() {
            return Ok((merged, report));
        }
        let (Some(target), Some(current), Some(mean)) =
            (self.variance(), merged.variance(), merged.mean())
        else {
            return Ok((merged, report));
        };
        if !(current > 0.0 && target > 0.0) {
            return Ok((merged, report));
        }
        let stretch = (target / current).sqrt();
        let mut displacement = 0.0;
        let atoms = merged
            .atoms
            .iter()
            .map(|a| {
                let offset = a.position - mean;
                displacement += a.weight * (offset * (stretch - 1.0)).abs();
                Atom::new(mean + stretch * offset, a.weight)
            })
            .collect();
        report.transport_bound += displacement;
        Ok((normalize_finite(atoms, self.merge_tol), report))
    }

    /// Wasserstein-1 distance between two nonnegative measures of equal
    /// mass, computed as the L¹ distance between cumulative mass functions.
    pub fn wasserstein1(&self, other: &AtomicMeasure) -> Result<f64> {
        wasserstein1(self, other)
    }
}

/// Low bits dropped from merge-cost keys: about 4e-9 relative resolution.
const MERGE_KEY_DROP_BITS: u32 = 24;

/// Bit pattern of `cost / mass`, `cost = gap² · w_l w_r / (w_l + w_r)`; for
/// nonnegative floats the bit pattern orders like the value.
fn merge_key(wl: f64, wr: f64, gap: f64, inv_mass: f64) -> u64 {
    let total = wl + wr;
    let cost = if total > 0.0 {
        gap * gap * wl * (wr / total)
    } else {
        0.0
    };
    (cost * inv_mass).max(0.0).to_bits()
}

/// Relative tolerance on the mass mismatch accepted by [`wasserstein1`].
pub const W1_MASS_TOL: f64 = 1e-9;

pub fn wasserstein1(mu: &AtomicMeasure, nu: &AtomicMeasure) -> Result<f64> {
    if !mu.is_nonnegative() || !nu.is_nonnegative() {
        return Err(Error::InvalidInput(
            "Wasserstein distance requires nonnegative measures".into(),
        ));
    }
    let (ma, mb) = (mu.mass(), nu.mass());
    let scale = ma.abs().max(mb.abs());
    if (ma - mb).abs() > W1_MASS_TOL * scale {
        return Err(Error::InvalidInput(format!(
            "Wasserstein distance requires equal masses, got {ma} and {mb}"
        )));
    }

    let (a, b) = (mu.atoms(), nu.atoms());
    let (mut i, mut j) = (0, 0);
    let mut cdf_diff: f64 = 0.0;
    let mut last: Option<f64> = None;
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(p), Some(q)) => p.position.min(q.position),
            (Some(p), None) => p.position,
            (None, Some(q)) => q.position,
            (None, None) => unreachable!(),
        };
        if let Some(prev) = last {
            total += cdf_diff.abs() * (x - prev);
        }
        while i < a.len() && a[i].position == x {
            cdf_diff += a[i].weight;
            i += 1;
        }
        while j < b.len() && b[j].position == x {
            cdf_diff -= b[j].weight;
            j += 1;
        }
        last = Some(x);
    }
    Ok(total)
}

impl Serialize for AtomicMeasure {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.atoms.iter().map(|a| (a.position, a.weight)))
    }
}

impl<'de> Deserialize<'de> for AtomicMeasure {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let pairs = Vec::<(f64, f64)>::deserialize(deserializer)?;
        AtomicMeasure::from_pairs(pairs).map_err(serde::de::Error::custom)
    }
}
