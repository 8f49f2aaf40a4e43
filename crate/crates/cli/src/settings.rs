//! Flag, environment and config-file merging.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use laser_core::{Family, ModelParams};
use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_P: f64 = 4.1479;
pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const DEFAULT_Q: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Model family: p, plambda or pq.
    #[arg(long, global = true)]
    pub family: Option<Family>,
    /// Sharpness of the cavity distribution.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub p: Option<f64>,
    /// Gain/loss split (plambda).
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Pump Mandel-Q (pq).
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub q: Option<f64>,
    /// Number of cavity levels.
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    /// Comma-separated list of cavity dimensions.
    #[arg(long, global = true, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; overrides the WORKERS variable and the config file.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// TOML file with defaults for any of these flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write a companion gnuplot script to `<out>.gp`.
    #[arg(long, global = true)]
    pub gnuplot: bool,
    /// Report wall times (adds a column to sweeps).
    #[arg(long, global = true)]
    pub timing: bool,
    /// Largest dimension used by verification runs.
    #[arg(long, global = true)]
    pub dmax: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub families: Option<Vec<Family>>,
    pub p_grid: Option<Vec<f64>>,
    pub lambda_grid: Option<Vec<f64>>,
    pub q_grid: Option<Vec<f64>>,
    pub outputs: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub family: Option<Family>,
    pub p: Option<f64>,
    pub lambda: Option<f64>,
    pub q: Option<f64>,
    pub dim: Option<usize>,
    pub dims: Option<Vec<usize>>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub gnuplot: Option<bool>,
    pub timing: Option<bool>,
    pub dmax: Option<usize>,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }
}

/// Effective settings after precedence: flag, then `WORKERS` (workers only),
/// then config file, then built-in default.
#[derive(Debug, Clone)]
pub struct Settings {
    pub family: Option<Family>,
    pub p: Option<f64>,
    pub lambda: Option<f64>,
    pub q: Option<f64>,
    pub dim: Option<usize>,
    pub dims: Option<Vec<usize>>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub seed: u64,
    pub workers: usize,
    pub gnuplot: bool,
    pub timing: bool,
    pub dmax: Option<usize>,
    pub sweep: SweepConfig,
}

impl Settings {
    pub fn resolve(args: &CommonArgs, env_workers: Option<&str>) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let workers = match (args.workers, env_workers.map(str::trim)) {
            (Some(w), _) => w,
            (None, Some(env)) if !env.is_empty() => env
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("WORKERS must be an integer, got '{env}'")))?,
            _ => file
                .workers
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
        };
        if workers == 0 {
            return Err(CliError::Usage("workers must be at least 1".into()));
        }
        Ok(Self {
            family: args.family.or(file.family),
            p: args.p.or(file.p),
            lambda: args.lambda.or(file.lambda),
            q: args.q.or(file.q),
            dim: args.dim.or(file.dim),
            dims: args.dims.clone().or(file.dims),
            out: args.out.clone().or(file.out),
            format: args.format.or(file.format).unwrap_or_default(),
            seed: args.seed.or(file.seed).unwrap_or(0),
            workers,
            gnuplot: args.gnuplot || file.gnuplot.unwrap_or(false),
            timing: args.timing || file.timing.unwrap_or(false),
            dmax: args.dmax.or(file.dmax),
            sweep: file.sweep,
        })
    }

    pub fn family(&self) -> Family {
        self.family.unwrap_or(Family::P)
    }

    pub fn model(&self, family: Family, p: f64, dim: usize) -> ModelParams {
        match family {
            Family::P => ModelParams::p_family(p, dim),
            Family::PLambda => ModelParams::p_lambda(p, self.lambda.unwrap_or(DEFAULT_LAMBDA), dim),
            Family::PQ => ModelParams::p_q(p, self.q.unwrap_or(DEFAULT_Q), dim),
        }
    }

    /// Single model from `--family/--p/--lambda/--q/--dim`.
    pub fn single_model(&self) -> Result<ModelParams, CliError> {
        let dim = self
            .dim
            .ok_or_else(|| CliError::Usage("--dim is required".into()))?;
        let params = self.model(self.family(), self.p.unwrap_or(DEFAULT_P), dim);
        params.validate()?;
        Ok(params)
    }

    pub fn dims_or(&self, default: &[usize]) -> Vec<usize> {
        self.dims
            .clone()
            .or(self.dim.map(|d| vec![d]))
            .unwrap_or_else(|| default.to_vec())
    }

    pub fn thread_pool(&self) -> Result<rayon::ThreadPool, CliError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))
    }
}
