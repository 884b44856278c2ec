//! Experiment runner behind the `pamlab` binary.

pub mod config;
pub mod error;
pub mod experiments;
pub mod record;

use config::{Experiment, RunConfig};
use error::{CliError, Result};
use record::{RunContext, RunRecord, Status};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Environment variable naming the output root when `--out` is absent.
pub const OUT_ROOT_VAR: &str = "PAMLAB_OUT_ROOT";
pub const DEFAULT_OUT_ROOT: &str = "runs";

#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: usize,
}

/// Load, override and resolve the config for `exp`.
pub fn prepare(exp: Experiment, ov: &Overrides) -> Result<RunConfig> {
    let mut cfg = match &ov.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if ov.seed.is_some() {
        cfg.seed = ov.seed;
    }
    cfg.resolve(exp)
}

/// Output root: `--out`, then the environment, then the config, then `runs`.
pub fn output_root(cfg: &RunConfig, ov: &Overrides) -> PathBuf {
    ov.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ROOT_VAR).map(PathBuf::from))
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT))
}

pub fn run_dir(root: &Path, cfg: &RunConfig) -> PathBuf {
    root.join(format!("{}-{}", cfg.experiment(), &cfg.hash()[..16]))
}

/// Run a resolved config into `dir`; the record is written whatever happens.
pub fn run(cfg: &RunConfig, dir: PathBuf, threads: usize) -> Result<RunRecord> {
    let start = Instant::now();
    let mut ctx = RunContext::create(dir.clone(), cfg.output.binary.unwrap_or(true), cfg.output.json.unwrap_or(true))?;
    let cfg_path = dir.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).map_err(|e| CliError::io(&cfg_path, e))?;
    let outcome = pamlab::parallel::with_threads(threads, || experiments::dispatch(cfg, &mut ctx));
    let (status, error) = match &outcome {
        Err(e) => (Status::Error, Some(e.to_string())),
        Ok(()) if ctx.checks.iter().all(|c| c.pass) => (Status::Ok, None),
        Ok(()) => (Status::InvariantFailure, None),
    };
    let record = RunRecord {
        experiment: cfg.experiment().to_string(),
        config_hash: cfg.hash(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        threads,
        status,
        error,
        tables: ctx.tables,
        checks: ctx.checks,
        run_dir: dir.clone(),
    };
    let rec_path = dir.join("run.json");
    std::fs::write(&rec_path, serde_json::to_string_pretty(&record)?).map_err(|e| CliError::io(&rec_path, e))?;
    if let Some(msg) = &record.error {
        let marker = dir.join("FAILED");
        std::fs::write(&marker, format!("{msg}\n")).map_err(|e| CliError::io(&marker, e))?;
    }
    Ok(record)
}
