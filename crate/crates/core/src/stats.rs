//! Summary statistics for wealth samples and atomic measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::AtomicMeasure;

/// Distributional summary of a snapshot.
///
/// `deciles` holds the 10%, 20%, ..., 90% quantiles. `gini` is `None`
/// whenever a negative value is present or the total is zero with unequal
/// values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mass: f64,
    pub mean: f64,
    pub variance: f64,
    pub min: f64,
    pub max: f64,
    pub deciles: Vec<f64>,
    pub gini: Option<f64>,
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Statistics of unit-weight samples. Quantiles interpolate linearly
/// between order statistics (`h = (n−1)q`).
pub fn summarize(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::InvalidInput(
            "cannot summarize an empty sample".into(),
        ));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite sample value {bad}"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = compensated_sum(sorted.iter().copied()) / n;
    let variance = compensated_sum(sorted.iter().map(|x| (x - mean) * (x - mean))) / n;
    let deciles = (1..10)
        .map(|k| {
            let h = (sorted.len() - 1) as f64 * k as f64 / 10.0;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(sorted.len() - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        })
        .collect();
    let gini = gini_sorted(sorted.iter().map(|&x| (x, 1.0)));
    Ok(SummaryStats {
        mass: n,
        mean,
        variance,
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        deciles,
        gini,
    })
}

/// Statistics of a nonnegative measure, weights read as masses. Quantiles
/// are the lower inverse of the cumulative mass function.
pub fn summarize_measure(mu: &AtomicMeasure) -> Result<SummaryStats> {
    if mu.is_empty() {
        return Err(Error::InvalidInput(
            "cannot summarize the zero measure".into(),
        ));
    }
    if !mu.is_nonnegative() {
        return Err(Error::InvalidInput(
            "summary requires a nonnegative measure".into(),
        ));
    }
    let atoms = mu.atoms();
    let mass = compensated_sum(atoms.iter().map(|a| a.weight));
    let mean = compensated_sum(atoms.iter().map(|a| a.weight * a.position)) / mass;
    let variance = compensated_sum(atoms.iter().map(|a| {
        let d = a.position - mean;
        a.weight * d * d
    })) / mass;
    let mut deciles = Vec::with_capacity(9);
    let mut cumulative = 0.0;
    let mut idx = 0;
    for k in 1..10 {
        let target = mass * k as f64 / 10.0;
        while idx + 1 < atoms.len() && cumulative + atoms[idx].weight < target {
            cumulative += atoms[idx].weight;
            idx += 1;
        }
        deciles.push(atoms[idx].position);
    }
    let gini = gini_sorted(atoms.iter().map(|a| (a.position, a.weight)));
    Ok(SummaryStats {
        mass,
        mean,
        variance,
        min: atoms[0].position,
        max: atoms[atoms.len() - 1].position,
        deciles,
        gini,
    })
}

/// Gini coefficient `Σᵢⱼ wᵢwⱼ|xᵢ − xⱼ| / (2 W Σ wᵢxᵢ)` of ascending
/// `(value, weight)` pairs, using `Σᵢⱼ wᵢwⱼ|xᵢ − xⱼ| = 2 Σᵢ wᵢxᵢ (W_below − W_above)`.
fn gini_sorted<I: Iterator<Item = (f64, f64)> + Clone>(pairs: I) -> Option<f64> {
    let mut total_w = 0.0;
    let mut total_wx = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, w) in pairs.clone() {
        if x < 0.0 {
            return None;
        }
        total_w += w;
        total_wx += w * x;
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if lo == hi {
        return Some(0.0);
    }
    if total_wx <= 0.0 {
        return None;
    }
    let mut below = 0.0;
    let mut acc = 0.0;
    for (x, w) in pairs {
        let above = total_w - below - w;
        acc += w * x * (below - above);
        below += w;
    }
    Some((acc / (total_w * total_wx)).clamp(0.0, 1.0))
}

/// Ordinary least-squares slope of `y` on `x`; `None` with fewer than two
/// distinct abscissae.
pub fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gini_brute(values: &[f64]) -> f64 {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let mut acc = 0.0;
        for a in values {
            for b in values {
                acc += (a - b).abs();
            }
        }
        acc / (2.0 * n * n * mean)
    }

    #[test]
    fn two_point_sample() {
        let s = summarize(&[0.0, 1.0]).unwrap();
        assert_eq!(s.mean, 0.5);
        assert_eq!(s.variance, 0.25);
        assert_eq!((s.min, s.max, s.mass), (0.0, 1.0, 2.0));
        assert_eq!(s.gini, Some(0.5));
    }

    #[test]
    fn equal_values_have_zero_gini() {
        assert_eq!(summarize(&[3.0; 7]).unwrap().gini, Some(0.0));
        assert_eq!(summarize(&[0.0; 4]).unwrap().gini, Some(0.0));
    }

    #[test]
    fn gini_matches_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let values: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..5.0)).collect();
        let g = summarize(&values).unwrap().gini.unwrap();
        assert!((g - gini_brute(&values)).abs() <= 1e-10);
        let mu = AtomicMeasure::empirical(&values).unwrap();
        let gm = summarize_measure(&mu).unwrap().gini.unwrap();
        assert!((gm - g).abs() <= 1e-10);
    }

    #[test]
    fn debts_make_gini_undefined() {
        assert_eq!(summarize(&[-1.0, 2.0, 3.0]).unwrap().gini, None);
    }

    #[test]
    fn deciles_are_sorted_and_interpolated() {
        let values: Vec<f64> = (0..=10).rev().map(f64::from).collect();
        let s = summarize(&values).unwrap();
        assert_eq!(s.deciles, (1..10).map(f64::from).collect::<Vec<_>>());
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let values: Vec<f64> = (0..501).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s = summarize(&values).unwrap();
        assert!(s.deciles.windows(2).all(|w| w[0] <= w[1]));
        assert!(s.variance >= 0.0);
    }

    #[test]
    fn measure_summary_uses_weights() {
        let mu = AtomicMeasure::from_pairs([(0.0, 3.0), (4.0, 1.0)]).unwrap();
        let s = summarize_measure(&mu).unwrap();
        assert_eq!(s.mass, 4.0);
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.variance, 3.0);
        assert_eq!(s.deciles[..7], [0.0; 7]);
        assert_eq!(s.deciles[7..], [4.0, 4.0]);
        assert!(summarize_measure(&AtomicMeasure::zero()).is_err());
    }

    #[test]
    fn empty_and_non_finite_rejected() {
        assert!(summarize(&[]).is_err());
        assert!(summarize(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }
}
