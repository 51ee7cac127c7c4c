//! Experiment configuration: the top-level envelope, shared parameter types,
//! and parsing helpers that report the offending key path on failure.

use std::fmt;

use besov_core::ensemble::EnsembleSpec;
use besov_core::opcalc::MatrixSpec;
use besov_core::spaces::exponent;
use besov_core::{Domain, Fiber, Grid, SampledFunction, C64};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Version of the configuration schema this build reads and writes.
pub const SCHEMA_VERSION: u32 = 1;

/// Failure classes, mapped to exit codes by `main`.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or configuration (exit 1).
    Config(String),
    /// The library rejected the input or could not compute (exit 1).
    Library(besov_core::Error),
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Library(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<besov_core::Error> for CliError {
    fn from(e: besov_core::Error) -> Self {
        CliError::Library(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

/// The envelope shared by every subcommand; `params` is parsed per command.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub command: String,
    /// Root of every random stream used by the run.
    pub seed: u64,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub ensemble: Option<Map<String, Value>>,
    #[serde(default)]
    pub params: Option<Value>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_dim() -> usize {
    1
}

fn default_half_width() -> f64 {
    32.0
}

fn default_points() -> usize {
    4096
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            dim: default_dim(),
            half_width: default_half_width(),
            points: default_points(),
        }
    }
}

fn located<E: fmt::Display>(prefix: &str, path: &serde_path_to_error::Path, err: E) -> CliError {
    let path = path.to_string();
    let at = if path == "." {
        prefix.to_string()
    } else if prefix.is_empty() {
        path
    } else {
        format!("{prefix}.{path}")
    };
    if at.is_empty() {
        CliError::Config(err.to_string())
    } else {
        CliError::Config(format!("at `{at}`: {err}"))
    }
}

pub fn parse_config(text: &str) -> CliResult<Config> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: Config = serde_path_to_error::deserialize(de).map_err(|e| located("", e.path(), e.inner()))?;
    if config.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "at `schema_version`: version {} is not supported (expected {SCHEMA_VERSION})",
            config.schema_version
        )));
    }
    Ok(config)
}

/// Deserialize `value`, naming the failing key relative to `prefix`.
pub fn parse_at<T: DeserializeOwned>(prefix: &str, value: Value) -> CliResult<T> {
    serde_path_to_error::deserialize(value).map_err(|e| located(prefix, e.path(), e.inner()))
}

/// Parse an object section whose `seed` is owned by the top level: an
/// explicit `seed` key is rejected and the run seed is injected, together
/// with any `defaults` for keys the user left out.
pub fn parse_seeded<T: DeserializeOwned>(
    prefix: &str,
    section: Option<&Value>,
    seed: u64,
    defaults: &[(&str, Value)],
) -> CliResult<T> {
    let mut map = match section {
        None | Some(Value::Null) => Map::new(),
        Some(Value::Object(m)) => m.clone(),
        Some(_) => return Err(CliError::Config(format!("at `{prefix}`: expected an object"))),
    };
    if map.contains_key("seed") {
        return Err(CliError::Config(format!(
            "at `{prefix}.seed`: seeds are set once, by the top-level `seed` key"
        )));
    }
    map.insert("seed".into(), Value::from(seed));
    for (k, v) in defaults {
        map.entry(k.to_string()).or_insert_with(|| v.clone());
    }
    parse_at(prefix, Value::Object(map))
}

/// Resolved run context shared by the subcommands.
#[derive(Clone)]
pub struct Context {
    pub grid: Grid,
    pub seed: u64,
    ensemble: Option<Value>,
}

impl Context {
    pub fn new(config: &Config) -> CliResult<Self> {
        let g = config.grid.unwrap_or_default();
        let grid = Grid::new(g.dim, g.half_width, g.points).map_err(|e| CliError::Config(format!("at `grid`: {e}")))?;
        let ensemble = config.ensemble.clone().map(Value::Object);
        let ctx = Context {
            grid,
            seed: config.seed,
            ensemble,
        };
        // Surface ensemble key errors before any work is done.
        ctx.ensemble(None)?;
        Ok(ctx)
    }

    /// The configured ensemble; `fiber_dim` defaults to the command's fiber
    /// dimension when the config leaves it out.
    pub fn ensemble(&self, fiber_dim: Option<usize>) -> CliResult<EnsembleSpec> {
        let defaults: Vec<(&str, Value)> = fiber_dim.map(|d| ("fiber_dim", Value::from(d))).into_iter().collect();
        parse_seeded("ensemble", self.ensemble.as_ref(), self.seed, &defaults)
    }

    pub fn with_grid(&self, grid: Grid) -> Self {
        Context { grid, ..self.clone() }
    }

    pub fn members(&self, fiber_dim: usize) -> CliResult<Vec<SampledFunction>> {
        Ok(self.ensemble(Some(fiber_dim))?.sample(&self.grid)?)
    }
}

/// An exponent in `[1, inf]`, written as a number or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Exponent(#[serde(with = "exponent")] pub f64);

fn one() -> f64 {
    1.0
}

/// Test function for the single-function commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    /// `amplitude exp(-|x - center|^2 / width^2) v`, `v` all ones by default.
    Gaussian {
        #[serde(default)]
        center: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        direction: Option<Vec<f64>>,
    },
    Zero {
        #[serde(default = "one_usize")]
        fiber_dim: usize,
    },
    /// The members of the configured ensemble.
    Ensemble,
}

fn one_usize() -> usize {
    1
}

impl Default for FunctionSpec {
    fn default() -> Self {
        FunctionSpec::Gaussian {
            center: 0.0,
            width: 1.0,
            amplitude: 1.0,
            direction: None,
        }
    }
}

impl FunctionSpec {
    pub fn fiber_dim(&self) -> Option<usize> {
        match self {
            FunctionSpec::Gaussian { direction, .. } => Some(direction.as_ref().map_or(1, Vec::len)),
            FunctionSpec::Zero { fiber_dim } => Some(*fiber_dim),
            FunctionSpec::Ensemble => None,
        }
    }

    pub fn sample(&self, ctx: &Context, fiber_dim: usize) -> CliResult<Vec<SampledFunction>> {
        let grid = ctx.grid;
        match self {
            FunctionSpec::Gaussian {
                center,
                width,
                amplitude,
                direction,
            } => {
                if !(width.is_finite() && *width > 0.0) {
                    return Err(CliError::Config(format!(
                        "at `params.function.width`: {width} must be positive"
                    )));
                }
                let v = direction.clone().unwrap_or_else(|| vec![1.0; fiber_dim]);
                let (c, w, a) = (*center, *width, *amplitude);
                let f = SampledFunction::from_fn(grid, Domain::Physical, Fiber::Vector(v.len()), |x, out| {
                    let r2: f64 = x.iter().map(|t| (t - c) * (t - c)).sum();
                    let g = a * (-r2 / (w * w)).exp();
                    for (o, vi) in out.iter_mut().zip(&v) {
                        *o = C64::new(g * vi, 0.0);
                    }
                })?;
                Ok(vec![f])
            }
            FunctionSpec::Zero { fiber_dim } => Ok(vec![SampledFunction::zeros(
                grid,
                Domain::Physical,
                Fiber::Vector(*fiber_dim),
            )]),
            FunctionSpec::Ensemble => ctx.members(fiber_dim),
        }
    }
}

/// Convolution kernel generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `amplitude exp(-|t - center|^2 / width^2) B`, `B` the 1x1 identity by
    /// default.
    Gaussian {
        #[serde(default)]
        center: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        matrix: Option<MatrixSpec>,
    },
    Zero {
        #[serde(default = "one_usize")]
        d: usize,
    },
    /// `count` kernels `exp(-|t - c|^2 / (2 sigma^2)) B` with `c` uniform in
    /// `[-center_range, center_range]`, `sigma` uniform in
    /// `[sigma_min, sigma_max]` and complex entries of `B` uniform in the
    /// unit square, drawn from the run's seeded stream.
    Random {
        count: usize,
        #[serde(default = "two_usize")]
        d: usize,
        #[serde(default = "two")]
        center_range: f64,
        #[serde(default = "sigma_min")]
        sigma_min: f64,
        #[serde(default = "sigma_max")]
        sigma_max: f64,
    },
}

fn two_usize() -> usize {
    2
}

fn two() -> f64 {
    2.0
}

fn sigma_min() -> f64 {
    0.3
}

fn sigma_max() -> f64 {
    1.5
}
