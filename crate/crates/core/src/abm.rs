//! Individual-based simulation of pairwise Robin Hood / Sheriff transfers.
//!
//! Events arrive as a Poisson process of population rate `N·τ`, so each
//! individual takes part in transfers at rate `2τ`. Each event picks an
//! unordered pair of distinct individuals uniformly and applies the Robin
//! Hood rule with probability `p`, the Sheriff rule otherwise.
//!
//! Randomness comes from one ChaCha8 stream per simulation, consumed in a
//! fixed order per event: waiting time, first index, second index, kernel
//! coin. Initial populations are sampled from stream 1 of the same seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::AtomicMeasure;
use crate::semiflow::checked_snapshot_times;
use crate::stats::{compensated_sum, summarize, SummaryStats};

/// Name of the generator recorded in run manifests.
pub const RNG_NAME: &str = "ChaCha8 (rand_chacha 0.9), stream 0 events, stream 1 initial sampling";

/// Event-rate convention recorded in run manifests.
pub const RATE_CONVENTION: &str =
    "population event rate N*tau (each individual transfers at rate 2*tau)";

const INIT_STREAM: u64 = 1;

/// Wealth of each individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Population {
    values: Vec<f64>,
}

impl Population {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("population is empty".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite wealth value {bad}"
            )));
        }
        Ok(Population { values })
    }

    /// `n` draws from uniform `[a, b)`.
    pub fn uniform(n: usize, a: f64, b: f64, seed: u64) -> Result<Self> {
        if !(a < b && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "uniform init needs a < b, got [{a}, {b}]"
            )));
        }
        let mut rng = init_rng(seed);
        Self::new((0..n).map(|_| rng.random_range(a..b)).collect())
    }

    /// `n` draws from a normal law with mean `mu` and standard deviation `sigma`.
    pub fn gaussian(n: usize, mu: f64, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gaussian init needs finite mu and sigma > 0, got mu={mu}, sigma={sigma}"
            )));
        }
        let normal = Normal::new(mu, sigma)
            .map_err(|e| Error::InvalidConfig(format!("gaussian init: {e}")))?;
        let mut rng = init_rng(seed);
        Self::new((0..n).map(|_| normal.sample(&mut rng)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Compensated total wealth.
    pub fn total(&self) -> f64 {
        compensated_sum(self.values.iter().copied())
    }

    pub fn summary(&self) -> SummaryStats {
        summarize(&self.values).expect("population is non-empty and finite")
    }
}

fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    rng
}

/// One unit-weight atom per individual.
pub fn empirical_measure(pop: &Population) -> AtomicMeasure {
    AtomicMeasure::empirical(pop.values()).expect("population values are finite")
}

/// Robin Hood transfer: the pair gap shrinks by the factor `1 − 2f`.
pub fn apply_rh(x1: f64, x2: f64, f: f64) -> (f64, f64) {
    let d = f * (x2 - x1);
    (x1 + d, x2 - d)
}

/// Sheriff transfer: the pair gap grows by the factor `1 + 2f`.
pub fn apply_sn(x1: f64, x2: f64, f: f64) -> (f64, f64) {
    let d = f * (x2 - x1);
    (x1 - d, x2 + d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbmConfig {
    pub n: usize,
    pub tau: f64,
    pub p: f64,
    pub f1: f64,
    pub f2: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    pub seed: u64,
}

impl AbmConfig {
    /// Config with snapshots at `0` and `t_end`.
    pub fn new(n: usize, tau: f64, p: f64, f1: f64, f2: f64, t_end: f64, seed: u64) -> Self {
        AbmConfig {
            n,
            tau,
            p,
            f1,
            f2,
            t_end,
            snapshot_times: vec![0.0, t_end],
            seed,
        }
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidConfig(format!(
                "transfers need at least 2 individuals, got N = {}",
                self.n
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "tau must be > 0, got {}",
                self.tau
            )));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidConfig(format!(
                "p must lie in [0, 1], got {}",
                self.p
            )));
        }
        for (name, f) in [("f1", self.f1), ("f2", self.f2)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in (0, 1), got {f}"
                )));
            }
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "t_end must be >= 0, got {}",
                self.t_end
            )));
        }
        checked_snapshot_times(&self.snapshot_times, self.t_end)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferRule {
    RobinHood,
    Sheriff,
}

/// A transfer that took place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub first: usize,
    pub second: usize,
    pub rule: TransferRule,
}

/// Population recorded at a snapshot time.
#[derive(Debug, Clone, PartialEq)]
pub struct AbmSnapshot {
    pub t: f64,
    pub population: Population,
    pub stats: SummaryStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub events: u64,
    pub snapshots: Vec<AbmSnapshot>,
}

impl EventLog {
    /// Largest `|total(t) − total(0)|` over snapshots, relative to
    /// `N · max(|mean(0)|, tiny)`.
    pub fn max_relative_wealth_drift(&self) -> f64 {
        let Some(first) = self.snapshots.first() else {
            return 0.0;
        };
        let t0 = first.population.total();
        let n = first.population.len() as f64;
        let scale = (t0 / n).abs().max(f64::MIN_POSITIVE) * n;
        self.snapshots
            .iter()
            .map(|s| (s.population.total() - t0).abs() / scale)
            .fold(0.0, f64::max)
    }
}

/// Event-by-event simulator.
#[derive(Debug, Clone)]
pub struct AbmSimulator {
    config: AbmConfig,
    values: Vec<f64>,
    rng: ChaCha8Rng,
    waiting: Exp<f64>,
    time: f64,
    events: u64,
}

impl AbmSimulator {
    pub fn new(init: Population, config: AbmConfig) -> Result<Self> {
        config.validate()?;
        if init.len() != config.n {
            return Err(Error::InvalidConfig(format!(
                "population has {} individuals but N = {}",
                init.len(),
                config.n
            )));
        }
        let rate = config.n as f64 * config.tau;
        let waiting =
            Exp::new(rate).map_err(|e| Error::InvalidConfig(format!("event rate: {e}")))?;
        Ok(AbmSimulator {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            values: init.into_values(),
            config,
            waiting,
            time: 0.0,
            events: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn population(&self) -> Population {
        Population {
            values: self.values.clone(),
        }
    }

    /// Draws the next event time without applying anything.
    fn draw_wait(&mut self) -> f64 {
        self.waiting.sample(&mut self.rng)
    }

    /// Draws the pair and rule, applies the transfer and advances the clock
    /// to `time`.
    fn fire(&mut self, time: f64) -> Event {
        let n = self.values.len();
        let first = self.rng.random_range(0..n);
        let mut second = self.rng.random_range(0..n - 1);
        if second >= first {
            second += 1;
        }
        let coin: f64 = self.rng.random();
        let (x1, x2) = (self.values[first], self.values[second]);
        let (rule, (y1, y2)) = if coin < self.config.p {
            (TransferRule::RobinHood, apply_rh(x1, x2, self.config.f1))
        } else {
            (TransferRule::Sheriff, apply_sn(x1, x2, self.config.f2))
        };
        self.values[first] = y1;
        self.values[second] = y2;
        self.time = time;
        self.events += 1;
        Event {
            time,
            first,
            second,
            rule,
        }
    }

    /// Advances to and applies the next event, ignoring `t_end`.
    pub fn step(&mut self) -> Event {
        let t = self.time + self.draw_wait();
        self.fire(t)
    }
}

/// Runs to `t_end`, recording the population at every snapshot time.
pub fn simulate(init: &Population, config: &AbmConfig) -> Result<EventLog> {
    let mut sim = AbmSimulator::new(init.clone(), config.clone())?;
    let mut snapshots = Vec::with_capacity(config.snapshot_times.len());
    let mut pending = config.snapshot_times.iter().copied().peekable();
    let record = |sim: &AbmSimulator, t: f64, out: &mut Vec<AbmSnapshot>| {
        let population = sim.population();
        let stats = population.summary();
        out.push(AbmSnapshot {
            t,
            population,
            stats,
        });
    };
    loop {
        let next = sim.time + sim.draw_wait();
        while let Some(&s) = pending.peek() {
            if s < next {
                record(&sim, s, &mut snapshots);
                pending.next();
            } else {
                break;
            }
        }
        if next > config.t_end {
            break;
        }
        sim.fire(next);
    }
    for s in pending {
        record(&sim, s, &mut snapshots);
    }
    Ok(EventLog {
        events: sim.events,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::TransferKernel;
    use crate::semiflow::variance_rate;

    #[test]
    fn rh_and_sn_substitution() {
        assert_eq!(apply_rh(0.0, 1.0, 0.1), (0.1, 0.9));
        assert_eq!(apply_sn(0.0, 1.0, 0.1), (-0.1, 1.1));
        assert_eq!(apply_rh(2.5, 2.5, 0.3), (2.5, 2.5));
        assert_eq!(apply_sn(2.5, 2.5, 0.3), (2.5, 2.5));
    }

    #[test]
    fn contraction_and_expansion_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..1000 {
            let (x1, x2): (f64, f64) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let f = rng.random_range(0.01..0.99);
            let gap = (x2 - x1).abs();
            let (a, b) = apply_rh(x1, x2, f);
            assert!(((b - a).abs() - (1.0 - 2.0 * f).abs() * gap).abs() <= 1e-12 * (1.0 + gap));
            assert!((a + b - (x1 + x2)).abs() <= 1e-14 * (1.0 + x1.abs() + x2.abs()));
            let (a, b) = apply_sn(x1, x2, f);
            assert!(((b - a).abs() - (1.0 + 2.0 * f) * gap).abs() <= 1e-12 * (1.0 + gap));
            assert!((a + b - (x1 + x2)).abs() <= 1e-14 * (1.0 + x1.abs() + x2.abs()));
        }
    }

    #[test]
    fn single_forced_event() {
        let init = Population::new(vec![0.0, 1.0]).unwrap();
        let cfg = AbmConfig::new(2, 1.0, 1.0, 0.1, 0.1, 10.0, 4);
        let mut sim = AbmSimulator::new(init, cfg).unwrap();
        let ev = sim.step();
        assert_eq!(ev.rule, TransferRule::RobinHood);
        assert!(ev.time > 0.0);
        let mut v = sim.values().to_vec();
        v.sort_by(f64::total_cmp);
        assert_eq!(v, vec![0.1, 0.9]);
    }

    #[test]
    fn small_populations_rejected() {
        let init = Population::new(vec![1.0]).unwrap();
        let cfg = AbmConfig::new(1, 1.0, 1.0, 0.1, 0.1, 1.0, 0);
        assert!(matches!(
            simulate(&init, &cfg),
            Err(Error::InvalidConfig(_))
        ));
        let init = Population::new(vec![1.0, 2.0, 3.0]).unwrap();
        let cfg = AbmConfig::new(2, 1.0, 1.0, 0.1, 0.1, 1.0, 0);
        assert!(simulate(&init, &cfg).is_err());
        let cfg = AbmConfig::new(3, 1.0, 1.5, 0.1, 0.1, 1.0, 0);
        assert!(simulate(&init, &cfg).is_err());
    }

    #[test]
    fn seed_determinism() {
        let init = Population::uniform(200, 0.0, 1.0, 9).unwrap();
        assert_eq!(init, Population::uniform(200, 0.0, 1.0, 9).unwrap());
        let cfg = AbmConfig::new(200, 1.0, 0.5, 0.1, 0.2, 5.0, 10)
            .with_snapshots(vec![0.0, 1.0, 2.5, 5.0]);
        let a = simulate(&init, &cfg).unwrap();
        let b = simulate(&init, &cfg).unwrap();
        assert_eq!(a, b);
        for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
            for (u, v) in x.population.values().iter().zip(y.population.values()) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
        let mut other = cfg.clone();
        other.seed = 11;
        assert_ne!(simulate(&init, &other).unwrap(), a);
    }

    #[test]
    fn snapshots_land_on_requested_times() {
        let init = Population::uniform(50, 0.0, 1.0, 1).unwrap();
        let times = vec![0.0, 0.5, 1.0, 3.0];
        let cfg = AbmConfig::new(50, 1.0, 1.0, 0.1, 0.1, 3.0, 2).with_snapshots(times.clone());
        let log = simulate(&init, &cfg).unwrap();
        let got: Vec<f64> = log.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(got, times);
        assert_eq!(log.snapshots[0].population, init);
        // About N·τ·t_end events.
        assert!((log.events as f64 - 150.0).abs() < 5.0 * 150f64.sqrt());
    }

    #[test]
    fn wealth_is_conserved() {
        let n = 1000;
        let init = Population::uniform(n, 0.0, 1.0, 3).unwrap();
        let cfg = AbmConfig::new(n, 1.0, 0.3, 0.1, 0.1, 20.0, 5);
        let log = simulate(&init, &cfg).unwrap();
        assert!(log.max_relative_wealth_drift() <= n as f64 * 1e-12);
    }

    #[test]
    fn robin_hood_variance_never_increases() {
        let init = Population::uniform(40, 0.0, 1.0, 6).unwrap();
        let cfg = AbmConfig::new(40, 1.0, 1.0, 0.2, 0.2, 1.0, 7);
        let mut sim = AbmSimulator::new(init, cfg).unwrap();
        let mut var = sim.population().summary().variance;
        for _ in 0..2000 {
            sim.step();
            let next = sim.population().summary().variance;
            assert!(next <= var * (1.0 + 1e-12) + 1e-300);
            var = next;
        }
    }

    #[test]
    fn empirical_measure_has_unit_atoms() {
        let pop = Population::new(vec![0.0, 1.0]).unwrap();
        let mu = empirical_measure(&pop);
        assert_eq!(
            mu,
            AtomicMeasure::from_pairs([(0.0, 1.0), (1.0, 1.0)]).unwrap()
        );
        let pop = Population::uniform(300, 0.0, 1.0, 2).unwrap();
        assert_eq!(empirical_measure(&pop).mass(), 300.0);
    }

    #[test]
    fn variance_slope_matches_rate() {
        let n = 10_000;
        let init = Population::uniform(n, 0.0, 1.0, 12).unwrap();
        let times: Vec<f64> = (0..=20).map(f64::from).collect();
        let cfg = AbmConfig::new(n, 1.0, 1.0, 0.1, 0.1, 20.0, 13).with_snapshots(times);
        let log = simulate(&init, &cfg).unwrap();
        let pts: Vec<(f64, f64)> = log
            .snapshots
            .iter()
            .map(|s| (s.t, s.stats.variance.ln()))
            .collect();
        let slope = crate::stats::least_squares_slope(&pts).unwrap();
        let rate = variance_rate(&TransferKernel::robin_hood(0.1).unwrap(), 1.0).unwrap();
        assert!(
            (slope - rate).abs() <= 0.1 * rate.abs(),
            "{slope} vs {rate}"
        );
    }
}
