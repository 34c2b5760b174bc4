use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use wealthflow::compare::compare;
use wealthflow::config::{parse_config, Mode, RunConfig};
use wealthflow::export::write_json;
use wealthflow::run::{run, RunOutcome, COMPARISON_FILE};
use wealthflow::semiflow::variance_rate;
use wealthflow::TransferKernel;

#[derive(Parser)]
#[command(
    name = "wealthflow",
    version,
    about = "Robin Hood / Sheriff wealth transfer dynamics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the transfer equation on atomic measures.
    Ode(RunArgs),
    /// Integrate the transfer equation on a density grid.
    Grid(RunArgs),
    /// Run the individual-based simulation.
    Abm(RunArgs),
    /// Check the mass and mean conditions of a kernel on sample pairs.
    ValidateKernel(RunArgs),
    /// Compare snapshots of two run directories.
    Compare(CompareArgs),
    /// Print predicted variance growth rates.
    Moments(MomentsArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (JSON) or a previous run's manifest.json.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated snapshot times; overrides `snapshots`.
    #[arg(long, value_delimiter = ',')]
    snapshots: Option<Vec<f64>>,
}

#[derive(Args)]
struct CompareArgs {
    /// Compare config (mode `compare`); replaces the positional runs.
    #[arg(long, conflicts_with_all = ["run_a", "run_b"])]
    config: Option<PathBuf>,
    run_a: Option<PathBuf>,
    run_b: Option<PathBuf>,
    /// Comma-separated comparison times.
    #[arg(long, alias = "times", value_delimiter = ',')]
    snapshots: Option<Vec<f64>>,
    /// Directory receiving comparison.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Rh,
    Sn,
    Mixed,
}

#[derive(Args)]
struct MomentsArgs {
    /// Take kernel and tau from a run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "mixed")]
    kernel: KernelArg,
    #[arg(long, default_value_t = 0.1)]
    f: f64,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    f1: f64,
    #[arg(long, default_value_t = 0.1)]
    f2: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ode(args) => run_mode(Mode::Ode, args),
        Command::Grid(args) => run_mode(Mode::Grid, args),
        Command::Abm(args) => run_mode(Mode::Abm, args),
        Command::ValidateKernel(args) => run_mode(Mode::ValidateKernel, args),
        Command::Compare(args) => run_compare(args),
        Command::Moments(args) => moments(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &Path, mode: Mode) -> Result<RunConfig> {
    let config =
        parse_config(path).with_context(|| format!("reading config {}", path.display()))?;
    if config.mode != mode {
        bail!(
            "{} has mode `{}` but the `{}` subcommand was used",
            path.display(),
            config.mode.as_str(),
            mode.as_str()
        );
    }
    Ok(config)
}

fn run_mode(mode: Mode, args: RunArgs) -> Result<bool> {
    let mut config = load(&args.config, mode)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(times) = args.snapshots {
        config.snapshots = Some(times);
    }
    let out = args
        .out
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(mode.as_str()));
    config.output = Some(out.clone());
    config.validate()?;
    let outcome = run(&config, &out)?;
    report(&outcome, &out);
    Ok(outcome.success())
}

fn report(outcome: &RunOutcome, out: &Path) {
    let dir = out.display();
    match outcome {
        RunOutcome::Ode { snapshots } => println!("ode: {snapshots} snapshots written to {dir}"),
        RunOutcome::Grid {
            snapshots,
            lost_mass,
        } => println!("grid: {snapshots} snapshots written to {dir}, lost mass {lost_mass:e}"),
        RunOutcome::Abm { snapshots, events } => {
            println!("abm: {events} events, {snapshots} snapshots written to {dir}")
        }
        RunOutcome::ValidateKernel(r) => {
            println!(
                "validate-kernel: {} pairs, max weight deviation {:e}, max mean deviation {:e}, tol {:e}: {}",
                r.pairs_checked,
                r.max_weight_deviation,
                r.max_mean_deviation,
                r.tol,
                if r.passed { "PASS" } else { "FAIL" }
            );
        }
        RunOutcome::Compare(r) => print!("{}", r.to_table()),
    }
}

fn run_compare(args: CompareArgs) -> Result<bool> {
    if let Some(path) = args.config {
        let mut config = load(&path, Mode::Compare)?;
        if let Some(times) = args.snapshots {
            if let Some(spec) = config.compare.as_mut() {
                spec.times = times;
            }
        }
        let out = args
            .out
            .or_else(|| config.output.clone())
            .unwrap_or_else(|| PathBuf::from("runs").join("compare"));
        let outcome = run(&config, &out)?;
        report(&outcome, &out);
        return Ok(outcome.success());
    }
    let (Some(a), Some(b)) = (args.run_a, args.run_b) else {
        bail!("compare needs two run directories or --config");
    };
    let Some(times) = args.snapshots else {
        bail!("compare needs --snapshots t1,t2,...");
    };
    let report = compare(&a, &b, &times)?;
    print!("{}", report.to_table());
    if let Some(out) = args.out {
        write_json(out.join(COMPARISON_FILE), &report)?;
    }
    Ok(!report.has_errors())
}

fn moments(args: MomentsArgs) -> Result<bool> {
    let (kernel, tau) = match &args.config {
        Some(path) => {
            let config =
                parse_config(path).with_context(|| format!("reading config {}", path.display()))?;
            (config.transfer_kernel()?, config.tau)
        }
        None => {
            let kernel = match args.kernel {
                KernelArg::Rh => TransferKernel::robin_hood(args.f)?,
                KernelArg::Sn => TransferKernel::sheriff(args.f)?,
                KernelArg::Mixed => TransferKernel::mixed(args.p.unwrap_or(0.5), args.f1, args.f2)?,
            };
            (kernel, args.tau)
        }
    };
    let rate = variance_rate(&kernel, tau)?;
    println!("kernel: {kernel:?}, tau = {tau}");
    println!("mass rate: 0");
    println!("mean rate: 0");
    println!("variance rate: {rate}");
    if rate != 0.0 {
        let label = if rate < 0.0 {
            "half-life"
        } else {
            "doubling time"
        };
        println!("variance {label}: {}", std::f64::consts::LN_2 / rate.abs());
    }
    Ok(true)
}
