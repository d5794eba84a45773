use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;
use smpl_core::trainers::RunStatus;

use super::{run_experiment, write_metrics};
use crate::args::TrainArgs;
use crate::manifest::{build_id, timestamp, RunManifest};
use crate::{load_source, resolve_seed, CliError};

pub const TRAJECTORY_JSON: &str = "trajectory.json";
pub const TRAJECTORY_CSV: &str = "trajectory.csv";

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub out_dir: PathBuf,
    pub accuracy: f64,
    pub status: RunStatus,
}

pub fn run(args: &TrainArgs) -> Result<TrainReport, CliError> {
    let loaded = load_source(&args.source, None)?;
    let seed = resolve_seed(args.seed, loaded.config.seed)?;
    let config = loaded.config.clone().with_seed(seed);
    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(format!("{}-seed{seed}", loaded.name)));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", out_dir.display())))?;

    let started = timestamp();
    let (outcome, accuracy) = run_experiment(&config)?;
    let finished = timestamp();

    let mut files = write_metrics(&out_dir, &outcome)?;
    std::fs::write(out_dir.join("config.toml"), config.to_toml_string()?)?;
    files.push("config.toml".to_string());
    if outcome.trajectory.every > 0 {
        let mut text = serde_json::to_string(&outcome.trajectory)?;
        text.push('\n');
        std::fs::write(out_dir.join(TRAJECTORY_JSON), text)?;
        let mut csv = BufWriter::new(File::create(out_dir.join(TRAJECTORY_CSV))?);
        outcome.trajectory.write_csv(&mut csv)?;
        csv.flush()?;
        files.extend([TRAJECTORY_JSON.to_string(), TRAJECTORY_CSV.to_string()]);
    }
    files.push(crate::manifest::MANIFEST_FILE.to_string());

    let manifest = RunManifest {
        command: "train".to_string(),
        build: build_id(),
        origin: loaded.origin,
        config: config.clone(),
        overrides: args.source.overrides.clone(),
        seeds: vec![seed],
        output_dir: out_dir.display().to_string(),
        files,
        started_unix: started,
        finished_unix: finished,
        result: json!({
            "accuracy": accuracy,
            "steps_recorded": outcome.records.len(),
            "status": outcome.status,
            "memory": outcome.memory,
        }),
    };
    manifest.write(&out_dir)?;

    super::emit(&format!(
        "trainer   {}\nseed      {seed}\nsteps     {}\naccuracy  {accuracy:.4}\noutputs   {}\n",
        config.trainer,
        outcome.records.len(),
        out_dir.display()
    ))?;
    if let RunStatus::Aborted { step, reason } = &outcome.status {
        return Err(CliError::runtime(format!(
            "run aborted at step {step}: {reason} (partial outputs in {})",
            out_dir.display()
        )));
    }
    Ok(TrainReport {
        out_dir,
        accuracy,
        status: outcome.status,
    })
}
