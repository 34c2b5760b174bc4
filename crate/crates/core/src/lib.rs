//! Measure-valued wealth transfer models.
//!
//! - [`measures`]: finite signed atomic measures, Jordan decomposition,
//!   compression and the 1-Wasserstein distance.
//! - [`kernels`]: Robin Hood, Sheriff of Nottingham, mixed and distributed
//!   transfer kernels, plus the mass/mean assumption validator.
//! - [`semiflow`]: the bilinear and transfer operators and the deterministic
//!   atomic and grid solvers.
//! - [`abm`]: the stochastic individual-based simulator.
//! - [`stats`], [`config`], [`export`], [`compare`], [`run`]: command-line plumbing.

pub mod abm;
pub mod compare;
pub mod config;
pub mod error;
pub mod export;
pub mod kernels;
pub mod measures;
pub mod run;
pub mod semiflow;
pub mod stats;

pub use error::{Error, Result};
pub use kernels::{BaseDensity, TransferKernel};
pub use measures::{Atom, AtomicMeasure};
