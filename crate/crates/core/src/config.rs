//! JSON run configuration.
//!
//! ```json
//! { "mode": "abm", "kernel": "mixed", "p": 1.0, "f1": 0.1, "f2": 0.1,
//!   "tau": 1.0, "N": 10000, "t_end": 100.0, "seed": 1,
//!   "init": { "uniform": { "a": 0.0, "b": 1.0 } } }
//! ```
//!
//! Parsing reports the dotted path of the offending field; validation
//! collects every range violation before failing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, FieldError, Result};
use crate::kernels::{BaseDensity, TransferKernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Ode,
    Grid,
    Abm,
    ValidateKernel,
    Compare,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Ode => "ode",
            Mode::Grid => "grid",
            Mode::Abm => "abm",
            Mode::ValidateKernel => "validate-kernel",
            Mode::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rh,
    Sn,
    #[default]
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityKind {
    #[default]
    Triangular,
    Uniform,
}

/// Base density of a distributed kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    #[serde(default)]
    pub shape: DensityKind,
    pub halfwidth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile_atoms: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    /// Explicit `[position, weight]` pairs.
    Atoms { atoms: Vec<(f64, f64)> },
    /// `n` samples from uniform `[a, b)`; a box density in grid mode.
    Uniform {
        a: f64,
        b: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
    /// `n` samples from a normal law; the normal density in grid mode.
    Gaussian {
        mu: f64,
        sigma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
    /// CSV with columns `x,density` on equally spaced nodes.
    GridFile { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSpec {
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_validation_tol")]
    pub tol: f64,
    #[serde(default = "default_range_lo")]
    pub x_min: f64,
    #[serde(default = "default_range_hi")]
    pub x_max: f64,
}

impl Default for ValidationSpec {
    fn default() -> Self {
        ValidationSpec {
            pairs: default_pairs(),
            tol: default_validation_tol(),
            x_min: default_range_lo(),
            x_max: default_range_hi(),
        }
    }
}

fn default_pairs() -> usize {
    1000
}
fn default_validation_tol() -> f64 {
    1e-12
}
fn default_range_lo() -> f64 {
    -10.0
}
fn default_range_hi() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSpec {
    pub run_a: PathBuf,
    pub run_b: PathBuf,
    pub times: Vec<f64>,
}

fn default_preserve_variance() -> bool {
    true
}

fn default_tau() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default)]
    pub kernel: KernelKind,
    /// Fraction for `rh` / `sn`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<f64>,
    /// Robin Hood probability for `mixed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f2: Option<f64>,
    /// Base density turning `rh` / `sn` into a distributed kernel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<DensitySpec>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default)]
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atom_budget: Option<usize>,
    /// Restore the variance lost to atom merging after each step.
    #[serde(default = "default_preserve_variance")]
    pub preserve_variance: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSpec>,
    /// Divide initial weights by the total mass.
    #[serde(default)]
    pub normalize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// Reads, parses and validates a run configuration.
pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config = parse_config_str(&text).map_err(|e| match e {
        Error::Json { message, .. } => Error::Json {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })?;
    Ok(config)
}

/// [`parse_config`] on in-memory JSON. A run manifest is accepted too; its
/// embedded `config` is used.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let json_error = |message: String| Error::Json {
        path: PathBuf::from("<config>"),
        message,
    };
    let located = |path: String, inner: String| {
        if path == "." {
            inner
        } else {
            format!("at `{path}`: {inner}")
        }
    };
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| json_error(e.to_string()))?;
    let is_manifest = value.get("config").is_some() && value.get("tool").is_some();
    let config: RunConfig = if is_manifest {
        serde_path_to_error::deserialize(&value["config"]).map_err(|e| {
            json_error(located(
                format!("config.{}", e.path()),
                e.inner().to_string(),
            ))
        })?
    } else {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| json_error(located(e.path().to_string(), e.inner().to_string())))?
    };
    config.validate()?;
    Ok(config)
}

fn check(errors: &mut Vec<FieldError>, ok: bool, path: &str, message: impl Into<String>) {
    if !ok {
        errors.push(FieldError {
            path: path.to_string(),
            message: message.into(),
        });
    }
}

fn fraction_ok(f: f64) -> bool {
    f > 0.0 && f < 1.0
}

impl RunConfig {
    /// Collects every field violation for the selected mode.
    pub fn field_errors(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        let e = &mut errs;
        let needs_kernel = !matches!(self.mode, Mode::Compare);
        if needs_kernel {
            match self.kernel {
                KernelKind::Rh | KernelKind::Sn => {
                    match self.f {
                        Some(f) => check(
                            e,
                            fraction_ok(f),
                            "f",
                            format!("must lie in (0, 1), got {f}"),
                        ),
                        None => check(e, false, "f", "required for rh and sn kernels"),
                    }
                    check(e, self.p.is_none(), "p", "only valid for the mixed kernel");
                }
                KernelKind::Mixed => {
                    match self.p {
                        Some(p) => check(
                            e,
                            (0.0..=1.0).contains(&p),
                            "p",
                            format!("must lie in [0, 1], got {p}"),
                        ),
                        None => check(e, false, "p", "required for the mixed kernel"),
                    }
                    for (name, v) in [("f1", self.f1), ("f2", self.f2)] {
                        match v {
                            Some(f) => check(
                                e,
                                fraction_ok(f),
                                name,
                                format!("must lie in (0, 1), got {f}"),
                            ),
                            None => check(e, false, name, "required for the mixed kernel"),
                        }
                    }
                    check(
                        e,
                        self.g.is_none(),
                        "g",
                        "distributed kernels take kernel rh or sn",
                    );
                }
            }
            if let Some(g) = &self.g {
                check(
                    e,
                    g.halfwidth >= 0.0 && g.halfwidth.is_finite(),
                    "g.halfwidth",
                    format!("must be finite and >= 0, got {}", g.halfwidth),
                );
                if let Some(q) = g.quantile_atoms {
                    check(e, q >= 1, "g.quantile_atoms", "must be >= 1");
                }
            }
        }
        let timed = matches!(self.mode, Mode::Ode | Mode::Grid | Mode::Abm);
        if timed {
            check(
                e,
                self.tau > 0.0 && self.tau.is_finite(),
                "tau",
                format!("must be > 0, got {}", self.tau),
            );
            check(
                e,
                self.t_end >= 0.0 && self.t_end.is_finite(),
                "t_end",
                format!("must be >= 0, got {}", self.t_end),
            );
            if let Some(snaps) = &self.snapshots {
                let increasing = snaps.windows(2).all(|w| w[0] < w[1]);
                check(e, increasing, "snapshots", "must be strictly increasing");
                let inside = snaps.iter().all(|s| (0.0..=self.t_end).contains(s));
                check(
                    e,
                    inside,
                    "snapshots",
                    format!("must lie in [0, t_end = {}]", self.t_end),
                );
            }
        }
        if matches!(self.mode, Mode::Ode | Mode::Grid) {
            match self.dt {
                Some(dt) => {
                    check(
                        e,
                        dt > 0.0 && dt.is_finite(),
                        "dt",
                        format!("must be > 0, got {dt}"),
                    );
                    check(
                        e,
                        self.t_end == 0.0 || dt <= self.t_end,
                        "dt",
                        format!("must not exceed t_end = {}", self.t_end),
                    );
                }
                None => check(e, false, "dt", "required for deterministic modes"),
            }
            if let Some(b) = self.atom_budget {
                check(e, b >= 1, "atom_budget", "must be >= 1");
            }
        }
        match self.mode {
            Mode::Ode | Mode::Abm => match &self.init {
                None => check(e, false, "init", "required"),
                Some(init) => self.check_init(init, e),
            },
            Mode::Grid => {
                match &self.init {
                    None => check(e, false, "init", "required"),
                    Some(InitSpec::Atoms { .. }) => check(
                        e,
                        false,
                        "init",
                        "grid mode needs uniform, gaussian or grid_file",
                    ),
                    Some(init) => self.check_init(init, e),
                }
                let file = matches!(self.init, Some(InitSpec::GridFile { .. }));
                match &self.grid {
                    Some(g) => {
                        check(
                            e,
                            g.dx > 0.0 && g.dx.is_finite(),
                            "grid.dx",
                            format!("must be > 0, got {}", g.dx),
                        );
                        check(e, g.x_max > g.x_min, "grid.x_max", "must exceed grid.x_min");
                    }
                    None => check(e, file, "grid", "required unless init is a grid_file"),
                }
                check(
                    e,
                    self.kernel != KernelKind::Mixed || self.g.is_none(),
                    "g",
                    "not valid for mixed kernels",
                );
            }
            Mode::ValidateKernel => {
                let v = self.validation.clone().unwrap_or_default();
                check(e, v.pairs >= 1, "validation.pairs", "must be >= 1");
                check(
                    e,
                    v.tol > 0.0,
                    "validation.tol",
                    format!("must be > 0, got {}", v.tol),
                );
                check(
                    e,
                    v.x_max > v.x_min,
                    "validation.x_max",
                    "must exceed validation.x_min",
                );
            }
            Mode::Compare => match &self.compare {
                None => check(e, false, "compare", "required in compare mode"),
                Some(c) => check(e, !c.times.is_empty(), "compare.times", "must not be empty"),
            },
        }
        errs
    }

    fn check_init(&self, init: &InitSpec, e: &mut Vec<FieldError>) {
        let abm = self.mode == Mode::Abm;
        let count = |n: Option<usize>, n_path: &str, e: &mut Vec<FieldError>| {
            if self.mode == Mode::Grid {
                return;
            }
            match n.or(self.n) {
                Some(n) => check(
                    e,
                    n >= if abm { 2 } else { 1 },
                    "N",
                    format!("must be >= {}, got {n}", if abm { 2 } else { 1 }),
                ),
                None => check(e, false, n_path, "sample count required here or as N"),
            }
            if let (Some(a), Some(b)) = (n, self.n) {
                check(e, a == b, n_path, format!("disagrees with N = {b}"));
            }
        };
        match init {
            InitSpec::Atoms { atoms } => {
                check(
                    e,
                    !atoms.is_empty(),
                    "init.atoms.atoms",
                    "must not be empty",
                );
                let finite = atoms.iter().all(|(x, w)| x.is_finite() && w.is_finite());
                check(
                    e,
                    finite,
                    "init.atoms.atoms",
                    "positions and weights must be finite",
                );
                let nonneg = atoms.iter().all(|(_, w)| *w >= 0.0);
                check(e, nonneg, "init.atoms.atoms", "weights must be >= 0");
                if abm {
                    check(
                        e,
                        atoms.iter().all(|(_, w)| *w == 1.0),
                        "init.atoms.atoms",
                        "abm populations take unit weights",
                    );
                    check(e, atoms.len() >= 2, "N", "abm needs at least 2 individuals");
                    if let Some(n) = self.n {
                        check(
                            e,
                            n == atoms.len(),
                            "N",
                            format!("disagrees with {} atoms", atoms.len()),
                        );
                    }
                }
            }
            InitSpec::Uniform { a, b, n } => {
                check(
                    e,
                    a < b && a.is_finite() && b.is_finite(),
                    "init.uniform.b",
                    format!("need finite a < b, got [{a}, {b}]"),
                );
                count(*n, "init.uniform.n", e);
            }
            InitSpec::Gaussian { mu, sigma, n } => {
                check(e, mu.is_finite(), "init.gaussian.mu", "must be finite");
                check(
                    e,
                    *sigma > 0.0 && sigma.is_finite(),
                    "init.gaussian.sigma",
                    format!("must be > 0, got {sigma}"),
                );
                count(*n, "init.gaussian.n", e);
            }
            InitSpec::GridFile { .. } => {
                check(
                    e,
                    self.mode == Mode::Grid,
                    "init.grid_file",
                    "only valid in grid mode",
                );
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.field_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Schema(errs))
        }
    }

    /// The transfer kernel described by this config.
    pub fn transfer_kernel(&self) -> Result<TransferKernel> {
        let density = |g: &DensitySpec| -> Result<BaseDensity> {
            let base = match g.shape {
                DensityKind::Triangular => BaseDensity::triangular(g.halfwidth)?,
                DensityKind::Uniform => BaseDensity::uniform(g.halfwidth)?,
            };
            match g.quantile_atoms {
                Some(q) => base.with_quantile_atoms(q),
                None => Ok(base),
            }
        };
        let missing =
            |name: &str| Error::InvalidConfig(format!("kernel parameter `{name}` missing"));
        match self.kernel {
            KernelKind::Rh => {
                let f = self.f.ok_or_else(|| missing("f"))?;
                match &self.g {
                    Some(g) => TransferKernel::distributed_robin_hood(f, density(g)?),
                    None => TransferKernel::robin_hood(f),
                }
            }
            KernelKind::Sn => {
                let f = self.f.ok_or_else(|| missing("f"))?;
                match &self.g {
                    Some(g) => TransferKernel::distributed_sheriff(f, density(g)?),
                    None => TransferKernel::sheriff(f),
                }
            }
            KernelKind::Mixed => TransferKernel::mixed(
                self.p.ok_or_else(|| missing("p"))?,
                self.f1.ok_or_else(|| missing("f1"))?,
                self.f2.ok_or_else(|| missing("f2"))?,
            ),
        }
    }

    /// `(p, f1, f2)` for the individual-based simulator; `rh` and `sn`
    /// map to `p = 1` and `p = 0`.
    pub fn abm_parameters(&self) -> Result<(f64, f64, f64)> {
        if self.g.is_some() {
            return Err(Error::Unsupported(
                "the individual-based simulator uses point kernels only".into(),
            ));
        }
        let missing =
            |name: &str| Error::InvalidConfig(format!("kernel parameter `{name}` missing"));
        match self.kernel {
            KernelKind::Rh => {
                let f = self.f.ok_or_else(|| missing("f"))?;
                Ok((1.0, f, f))
            }
            KernelKind::Sn => {
                let f = self.f.ok_or_else(|| missing("f"))?;
                Ok((0.0, f, f))
            }
            KernelKind::Mixed => Ok((
                self.p.ok_or_else(|| missing("p"))?,
                self.f1.ok_or_else(|| missing("f1"))?,
                self.f2.ok_or_else(|| missing("f2"))?,
            )),
        }
    }

    /// Requested snapshot times, defaulting to `0` and `t_end`.
    pub fn snapshot_times(&self) -> Vec<f64> {
        match &self.snapshots {
            Some(s) => s.clone(),
            None if self.t_end > 0.0 => vec![0.0, self.t_end],
            None => vec![0.0],
        }
    }
}
