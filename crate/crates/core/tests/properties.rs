use proptest::prelude::*;

use wealthflow::abm::{simulate, AbmConfig, Population};
use wealthflow::semiflow::{step_exponential, variance_rate};
use wealthflow::stats::summarize;
use wealthflow::{AtomicMeasure, TransferKernel};

fn nonnegative(max_atoms: usize) -> impl Strategy<Value = AtomicMeasure> {
    prop::collection::vec((-10.0..10.0f64, 0.001..5.0f64), 1..max_atoms)
        .prop_map(|pairs| AtomicMeasure::from_pairs(pairs).unwrap())
}

fn signed(max_atoms: usize) -> impl Strategy<Value = AtomicMeasure> {
    prop::collection::vec((-10.0..10.0f64, -5.0..5.0f64), 1..max_atoms)
        .prop_map(|pairs| AtomicMeasure::from_pairs(pairs).unwrap())
}

fn kernel() -> impl Strategy<Value = TransferKernel> {
    prop_oneof![
        (0.01..0.99f64).prop_map(|f| TransferKernel::robin_hood(f).unwrap()),
        (0.01..0.99f64).prop_map(|f| TransferKernel::sheriff(f).unwrap()),
        (0.0..=1.0f64, 0.01..0.99f64, 0.01..0.99f64)
            .prop_map(|(p, f1, f2)| TransferKernel::mixed(p, f1, f2).unwrap()),
    ]
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn compression_keeps_mass_and_mean(mu in nonnegative(200), budget in 1usize..50) {
        let (c, report) = mu.compress_with_report(budget).unwrap();
        prop_assert!(c.len() <= budget);
        prop_assert!(close(c.mass(), mu.mass(), 1e-12));
        prop_assert!(close(c.moment(1), mu.moment(1), 1e-12));
        prop_assert!(mu.wasserstein1(&c).unwrap() <= report.transport_bound * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn variance_preserving_compression(mu in nonnegative(200), budget in 2usize..50) {
        let (c, _) = mu.compress_preserving_variance(budget).unwrap();
        prop_assert!(c.len() <= budget);
        prop_assert!(close(c.mass(), mu.mass(), 1e-12));
        prop_assert!(close(c.mean().unwrap(), mu.mean().unwrap(), 1e-12));
        prop_assert!(close(c.variance().unwrap(), mu.variance().unwrap(), 1e-10));
    }

    #[test]
    fn jordan_parts_reconstruct(mu in signed(30)) {
        let j = mu.jordan_decompose();
        prop_assert_eq!(j.reconstruct(), mu.clone());
        prop_assert!(j.positive.is_nonnegative() && j.negative.is_nonnegative());
        prop_assert!(close(j.variation().mass(), mu.tv_norm(), 1e-14));
    }

    #[test]
    fn w1_is_a_metric(a in nonnegative(20), b in nonnegative(20), c in nonnegative(20)) {
        let (a, b, c) = (a.scale(1.0 / a.mass()), b.scale(1.0 / b.mass()), c.scale(1.0 / c.mass()));
        let ab = a.wasserstein1(&b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!(close(ab, b.wasserstein1(&a).unwrap(), 1e-12));
        prop_assert!(ab <= a.wasserstein1(&c).unwrap() + c.wasserstein1(&b).unwrap() + 1e-12);
        prop_assert_eq!(a.wasserstein1(&a).unwrap(), 0.0);
    }

    #[test]
    fn step_conserves_and_stays_nonnegative(
        u in nonnegative(20),
        k in kernel(),
        dt in 1e-4..1.0f64,
        tau in 0.1..5.0f64,
    ) {
        let next = step_exponential(&u, dt, tau, &k, 40).unwrap();
        prop_assert!(next.is_nonnegative());
        prop_assert!(next.len() <= 40);
        prop_assert!(close(next.mass(), u.mass(), 1e-12));
        prop_assert!(close(next.mean().unwrap(), u.mean().unwrap(), 1e-11));
    }

    #[test]
    fn robin_hood_rate_is_negative(f in 0.001..0.999f64, tau in 0.01..10.0f64) {
        let r = variance_rate(&TransferKernel::robin_hood(f).unwrap(), tau).unwrap();
        prop_assert!(r < 0.0);
        let s = variance_rate(&TransferKernel::sheriff(f).unwrap(), tau).unwrap();
        prop_assert!(s > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn simulation_conserves_wealth(
        seed in any::<u64>(),
        n in 2usize..200,
        p in 0.0..=1.0f64,
        f1 in 0.01..0.99f64,
        f2 in 0.01..0.99f64,
    ) {
        let init = Population::uniform(n, 0.0, 1.0, seed).unwrap();
        let config = AbmConfig::new(n, 1.0, p, f1, f2, 5.0, seed);
        let log = simulate(&init, &config).unwrap();
        let last = &log.snapshots.last().unwrap().population;
        prop_assert_eq!(last.len(), n);
        let drift = (last.total() - init.total()).abs();
        let scale = summarize(last.values()).unwrap();
        prop_assert!(drift <= 1e-12 * n as f64 * (scale.max.abs().max(scale.min.abs()).max(1.0)));
    }
}
