//! Command-line front end: configured runs, seed sweeps, figure-data export
//! and memory reports.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

pub mod args;
pub mod commands;
mod failure;
pub mod manifest;

use std::path::Path;

use smpl_core::config::{load_with_overrides, preset_source, ExperimentConfig, PRESET_NAMES};

pub use args::{Cli, Command};
pub use failure::{CliError, Context, EXIT_RUNTIME, EXIT_USAGE};

/// Environment variable consulted when no `--seed` is given.
pub const SEED_ENV: &str = "SMPL_SEED";

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => commands::train::run(&a).map(|_| ()),
        Command::Compare(a) => commands::compare::run(&a).map(|_| ()),
        Command::ExportBoundary(a) => commands::boundary::run(&a),
        Command::ExportTrajectory(a) => commands::trajectory::run(&a),
        Command::MemoryReport(a) => commands::memory::run(&a),
    }
}

/// A loaded experiment and a short name for output paths and tables.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub name: String,
    /// `preset:<name>` or the file path.
    pub origin: String,
}

/// Loads a preset by name or a TOML file by path, then applies overrides.
pub fn load_named(name_or_path: &str, overrides: &[String]) -> Result<Loaded, CliError> {
    if let Some(src) = preset_source(name_or_path) {
        let config =
            load_with_overrides(src, overrides).context(format!("preset {name_or_path}"))?;
        return Ok(Loaded {
            config,
            name: name_or_path.to_string(),
            origin: format!("preset:{name_or_path}"),
        });
    }
    let path = Path::new(name_or_path);
    if path.extension().is_some_and(|e| e == "toml") || path.exists() {
        return load_file(path, overrides);
    }
    Err(CliError::usage(format!(
        "'{name_or_path}' is neither a preset ({}) nor a config file",
        PRESET_NAMES.join(", ")
    )))
}

pub fn load_file(path: &Path, overrides: &[String]) -> Result<Loaded, CliError> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config file {}: {e}", path.display())))?;
    let config =
        load_with_overrides(&src, overrides).context(format!("config file {}", path.display()))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "config".to_string());
    Ok(Loaded {
        config,
        name,
        origin: path.display().to_string(),
    })
}

/// `--config` or `--preset`; `default_preset` applies when neither is given.
pub fn load_source(
    src: &args::ConfigSource,
    default_preset: Option<&str>,
) -> Result<Loaded, CliError> {
    match (&src.config, &src.preset, default_preset) {
        (Some(path), _, _) => load_file(path, &src.overrides),
        (None, Some(name), _) => {
            if preset_source(name).is_none() {
                return Err(CliError::usage(format!(
                    "unknown preset '{name}'; available: {}",
                    PRESET_NAMES.join(", ")
                )));
            }
            load_named(name, &src.overrides)
        }
        (None, None, Some(name)) => load_named(name, &src.overrides),
        (None, None, None) => Err(CliError::usage("one of --config or --preset is required")),
    }
}

/// `flag`, else `SMPL_SEED`, else `fallback`.
pub fn resolve_seed(flag: Option<u64>, fallback: u64) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("{SEED_ENV}='{v}' is not an unsigned integer"))),
        Err(_) => Ok(fallback),
    }
}
