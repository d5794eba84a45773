//! Provenance record written next to every run's outputs.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use smpl_core::config::ExperimentConfig;

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Crate version plus the git revision the binary was built from.
pub fn build_id() -> String {
    format!("{} ({})", env!("CARGO_PKG_VERSION"), env!("SMPL_BUILD_REV"))
}

/// Seconds since the Unix epoch, pinned by `SOURCE_DATE_EPOCH` when set so
/// reruns reproduce their manifests byte for byte.
pub fn timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
    {
        return t;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub build: String,
    /// `preset:<name>` or the config path the run started from.
    pub origin: String,
    /// The merged configuration, overrides applied.
    pub config: ExperimentConfig,
    pub overrides: Vec<String>,
    pub seeds: Vec<u64>,
    pub output_dir: String,
    /// Output files relative to `output_dir`.
    pub files: Vec<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Free-form outcome fields such as accuracy and status.
    pub result: serde_json::Value,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }
}
