//! Executes a [`RunConfig`] and writes its artifacts.
//!
//! Every run directory holds `manifest.json`; timed runs add
//! `trajectory.csv`, `summary.json` and one file per snapshot
//! (`snapshot_<i>.csv` for measures, `values_<i>.csv` plus
//! `histogram_<i>.csv` for populations).

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::abm::{simulate, AbmConfig, Population, RATE_CONVENTION, RNG_NAME};
use crate::compare::{compare, ComparisonReport};
use crate::config::{InitSpec, Mode, RunConfig};
use crate::error::{Error, Result};
use crate::export::{
    histogram, write_histogram_csv, write_json, write_measure_csv, write_trajectory_csv,
    write_values_csv, Manifest, SnapshotEntry, SnapshotFormat, HISTOGRAM_BINS, MANIFEST_FILE,
    SUMMARY_FILE, TRAJECTORY_FILE,
};
use crate::kernels::{validate_assumption, AssumptionReport};
use crate::measures::AtomicMeasure;
use crate::semiflow::{evolve, grid_evolve, GridDensity, SolverConfig, DEFAULT_ATOM_BUDGET};
use crate::stats::{summarize_measure, SummaryStats};

pub const REPORT_FILE: &str = "report.json";
pub const COMPARISON_FILE: &str = "comparison.json";

/// Summary statistics of one snapshot, as written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedSummary {
    pub t: f64,
    #[serde(flatten)]
    pub stats: SummaryStats,
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Ode { snapshots: usize },
    Grid { snapshots: usize, lost_mass: f64 },
    Abm { snapshots: usize, events: u64 },
    ValidateKernel(AssumptionReport),
    Compare(ComparisonReport),
}

impl RunOutcome {
    /// False only for a failed kernel validation or a comparison with
    /// missing snapshots.
    pub fn success(&self) -> bool {
        match self {
            RunOutcome::ValidateKernel(r) => r.passed,
            RunOutcome::Compare(r) => !r.has_errors(),
            _ => true,
        }
    }
}

/// Runs `config`, writing artifacts into `out_dir`.
pub fn run(config: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    match config.mode {
        Mode::Ode => run_ode(config, out_dir),
        Mode::Grid => run_grid(config, out_dir),
        Mode::Abm => run_abm(config, out_dir),
        Mode::ValidateKernel => run_validate(config, out_dir),
        Mode::Compare => run_compare(config, out_dir),
    }
}

fn sample_count(config: &RunConfig, n: Option<usize>) -> Result<usize> {
    n.or(config.n)
        .ok_or_else(|| Error::InvalidConfig("initial sample count missing".into()))
}

/// Initial population for simulations and sampled deterministic runs.
pub fn initial_population(config: &RunConfig) -> Result<Population> {
    match &config.init {
        Some(InitSpec::Uniform { a, b, n }) => {
            Population::uniform(sample_count(config, *n)?, *a, *b, config.seed)
        }
        Some(InitSpec::Gaussian { mu, sigma, n }) => {
            Population::gaussian(sample_count(config, *n)?, *mu, *sigma, config.seed)
        }
        Some(InitSpec::Atoms { atoms }) => Population::new(atoms.iter().map(|&(x, _)| x).collect()),
        Some(InitSpec::GridFile { .. }) | None => Err(Error::InvalidConfig(
            "population init needs atoms, uniform or gaussian".into(),
        )),
    }
}

/// Initial measure of an atomic run. Sampled inits place one unit atom
/// per draw, matching the population of a simulation with the same seed.
pub fn initial_measure(config: &RunConfig) -> Result<AtomicMeasure> {
    let mu = match &config.init {
        Some(InitSpec::Atoms { atoms }) => AtomicMeasure::from_pairs(atoms.iter().copied())?,
        _ => AtomicMeasure::empirical(initial_population(config)?.values())?,
    };
    if config.normalize {
        let m = mu.mass();
        if m <= 0.0 {
            return Err(Error::InvalidInput(
                "cannot normalize a zero-mass init".into(),
            ));
        }
        Ok(mu.scale(1.0 / m))
    } else {
        Ok(mu)
    }
}

/// Initial density of a grid run. Analytic inits carry mass `n` (or 1 when
/// `n` is absent or `normalize` is set).
pub fn initial_grid(config: &RunConfig) -> Result<GridDensity> {
    let target = |n: Option<usize>| {
        if config.normalize {
            1.0
        } else {
            n.or(config.n).map_or(1.0, |n| n as f64)
        }
    };
    let (grid, mass) = match &config.init {
        Some(InitSpec::GridFile { path }) => {
            let g = read_grid_csv(path)?;
            let m = if config.normalize { 1.0 } else { g.mass() };
            (g, m)
        }
        Some(InitSpec::Uniform { a, b, n }) => {
            let spec = grid_spec(config)?;
            let (a, b) = (*a, *b);
            let g = GridDensity::from_fn(spec.0, spec.1, spec.2, |x| {
                if x >= a && x <= b {
                    1.0
                } else {
                    0.0
                }
            })?;
            (g, target(*n))
        }
        Some(InitSpec::Gaussian { mu, sigma, n }) => {
            let spec = grid_spec(config)?;
            let (mu, sigma) = (*mu, *sigma);
            let g = GridDensity::from_fn(spec.0, spec.1, spec.2, |x| {
                (-(x - mu) * (x - mu) / (2.0 * sigma * sigma)).exp()
            })?;
            (g, target(*n))
        }
        Some(InitSpec::Atoms { .. }) | None => {
            return Err(Error::InvalidConfig(
                "grid init needs uniform, gaussian or grid_file".into(),
            ))
        }
    };
    let m = grid.mass();
    if m <= 0.0 {
        return Err(Error::InvalidInput(
            "initial density has zero mass on the grid".into(),
        ));
    }
    Ok(grid.scale(mass / m))
}

fn grid_spec(config: &RunConfig) -> Result<(f64, f64, f64)> {
    let g = config
        .grid
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("grid mode needs a `grid` section".into()))?;
    Ok((g.x_min, g.x_max, g.dx))
}

/// Reads an `x,density` CSV on equally spaced nodes.
pub fn read_grid_csv(path: &Path) -> Result<GridDensity> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let parse = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "{}: row {} needs numeric x,density",
                        path.display(),
                        row + 1
                    ))
                })
        };
        xs.push(parse(0)?);
        vs.push(parse(1)?);
    }
    if xs.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "{}: grid file needs at least two rows",
            path.display()
        )));
    }
    let dx = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
    let uneven = xs
        .iter()
        .enumerate()
        .any(|(k, x)| (x - (xs[0] + k as f64 * dx)).abs() > 1e-9 * dx.abs().max(1e-300));
    if uneven {
        return Err(Error::InvalidInput(format!(
            "{}: grid nodes must be equally spaced and increasing",
            path.display()
        )));
    }
    GridDensity::new(xs[0], dx, vs)
}

fn solver_config(config: &RunConfig) -> Result<SolverConfig> {
    let dt = config
        .dt
        .ok_or_else(|| Error::InvalidConfig("dt missing".into()))?;
    Ok(
        SolverConfig::new(config.transfer_kernel()?, config.tau, dt, config.t_end)
            .with_budget(config.atom_budget.unwrap_or(DEFAULT_ATOM_BUDGET))
            .with_preserve_variance(config.preserve_variance)
            .with_snapshots(config.snapshot_times()),
    )
}

fn write_measure_snapshots(
    out_dir: &Path,
    times: &[f64],
    states: &[AtomicMeasure],
    manifest: &mut Manifest,
) -> Result<()> {
    let mut summaries = Vec::with_capacity(states.len());
    for (index, (t, mu)) in times.iter().zip(states).enumerate() {
        let file = PathBuf::from(format!("snapshot_{index}.csv"));
        write_measure_csv(out_dir.join(&file), mu)?;
        manifest.snapshots.push(SnapshotEntry {
            index,
            t: *t,
            file,
            format: SnapshotFormat::Measure,
            histogram: None,
        });
        if !mu.is_empty() {
            summaries.push(TimedSummary {
                t: *t,
                stats: summarize_measure(mu)?,
            });
        }
    }
    write_json(out_dir.join(SUMMARY_FILE), &summaries)
}

fn run_ode(config: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    let u0 = initial_measure(config)?;
    let traj = evolve(&u0, &solver_config(config)?)?;
    let mut manifest = Manifest::new(config, RNG_NAME);
    manifest.compression_transport = Some(traj.compression_transport);
    write_trajectory_csv(out_dir.join(TRAJECTORY_FILE), &traj.times, &traj.stats)?;
    write_measure_snapshots(out_dir, &traj.times, &traj.states, &mut manifest)?;
    write_json(out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(RunOutcome::Ode {
        snapshots: traj.len(),
    })
}

fn run_grid(config: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    let u0 = initial_grid(config)?;
    let run = grid_evolve(&u0, &solver_config(config)?)?;
    let traj = &run.trajectory;
    let mut manifest = Manifest::new(config, RNG_NAME);
    manifest.lost_mass = Some(run.lost_mass.clone());
    write_trajectory_csv(out_dir.join(TRAJECTORY_FILE), &traj.times, &traj.stats)?;
    let atomic: Vec<AtomicMeasure> = traj.states.iter().map(GridDensity::to_atomic).collect();
    write_measure_snapshots(out_dir, &traj.times, &atomic, &mut manifest)?;
    write_json(out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(RunOutcome::Grid {
        snapshots: traj.len(),
        lost_mass: run.total_lost_mass(),
    })
}

fn run_abm(config: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    let init = initial_population(config)?;
    let (p, f1, f2) = config.abm_parameters()?;
    let abm = AbmConfig {
        n: init.len(),
        tau: config.tau,
        p,
        f1,
        f2,
        t_end: config.t_end,
        snapshot_times: config.snapshot_times(),
        seed: config.seed,
    };
    let log = simulate(&init, &abm)?;
    let mut manifest = Manifest::new(config, RNG_NAME);
    manifest.rate_convention = Some(RATE_CONVENTION.to_string());
    manifest.events = Some(log.events);

    let mut times = Vec::with_capacity(log.snapshots.len());
    let mut stats = Vec::with_capacity(log.snapshots.len());
    let mut summaries = Vec::with_capacity(log.snapshots.len());
    for (index, snap) in log.snapshots.iter().enumerate() {
        let file = PathBuf::from(format!("values_{index}.csv"));
        let hist = PathBuf::from(format!("histogram_{index}.csv"));
        write_values_csv(out_dir.join(&file), snap.population.values())?;
        write_histogram_csv(
            out_dir.join(&hist),
            &histogram(snap.population.values(), HISTOGRAM_BINS)?,
        )?;
        manifest.snapshots.push(SnapshotEntry {
            index,
            t: snap.t,
            file,
            format: SnapshotFormat::Values,
            histogram: Some(hist),
        });
        times.push(snap.t);
        stats.push(crate::semiflow::SnapshotStats {
            mass: snap.stats.mass,
            mean: snap.stats.mean,
            variance: snap.stats.variance,
            min: snap.stats.min,
            max: snap.stats.max,
        });
        summaries.push(TimedSummary {
            t: snap.t,
            stats: snap.stats.clone(),
        });
    }
    write_trajectory_csv(out_dir.join(TRAJECTORY_FILE), &times, &stats)?;
    write_json(out_dir.join(SUMMARY_FILE), &summaries)?;
    write_json(out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(RunOutcome::Abm {
        snapshots: log.snapshots.len(),
        events: log.events,
    })
}

fn run_validate(config: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    let kernel = config.transfer_kernel()?;
    let spec = config.validation.clone().unwrap_or_default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pairs: Vec<(f64, f64)> = vec![(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)];
    while pairs.len() < spec.pairs.max(4) {
        pairs.push((
            rng.random_range(spec.x_min..spec.x_max),
            rng.random_range(spec.x_min..spec.x_max),
        ));
    }
    pairs.truncate(spec.pairs.max(1));
    let report = validate_assumption(&kernel, &pairs, spec.tol);
    write_json(out_dir.join(REPORT_FILE), &report)?;
    write_json(
        out_dir.join(MANIFEST_FILE),
        &Manifest::new(config, RNG_NAME),
    )?;
    Ok(RunOutcome::ValidateKernel(report))
}

fn run_compare(config: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    let spec = config
        .compare
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("compare mode needs a `compare` section".into()))?;
    let report = compare(&spec.run_a, &spec.run_b, &spec.times)?;
    write_json(out_dir.join(COMPARISON_FILE), &report)?;
    write_json(
        out_dir.join(MANIFEST_FILE),
        &Manifest::new(config, RNG_NAME),
    )?;
    Ok(RunOutcome::Compare(report))
}
