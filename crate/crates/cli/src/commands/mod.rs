pub mod boundary;
pub mod compare;
pub mod memory;
pub mod train;
pub mod trajectory;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use smpl_core::config::ExperimentConfig;
use smpl_core::data::accuracy;
use smpl_core::trainers::{
    save_checkpoint, train as train_model, write_records_csv, write_records_jsonl, TrainOutcome,
};

use crate::CliError;

/// A file at `path`, or stdout.
pub(crate) fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            CliError::runtime(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Writes `text` to stdout.
pub(crate) fn emit(text: &str) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

/// Trains `cfg` and measures accuracy on every sample of its dataset.
pub(crate) fn run_experiment(cfg: &ExperimentConfig) -> Result<(TrainOutcome, f64), CliError> {
    let ds = cfg.dataset()?;
    let outcome = train_model(cfg.trainer, &ds, &cfg.train_config())?;
    let (x, y) = ds.evaluation_set();
    let acc = accuracy(&outcome.params, &x, &y)?;
    Ok((outcome, acc))
}

/// Writes metrics and checkpoints into `dir`; returns the file names.
pub(crate) fn write_metrics(dir: &Path, outcome: &TrainOutcome) -> Result<Vec<String>, CliError> {
    let mut files = Vec::new();
    let mut csv = BufWriter::new(File::create(dir.join("metrics.csv"))?);
    write_records_csv(&outcome.records, &mut csv)?;
    csv.flush()?;
    files.push("metrics.csv".to_string());
    let mut jsonl = BufWriter::new(File::create(dir.join("metrics.jsonl"))?);
    write_records_jsonl(&outcome.records, &mut jsonl)?;
    jsonl.flush()?;
    files.push("metrics.jsonl".to_string());
    save_checkpoint(&outcome.params, &dir.join("model.ckpt"))?;
    files.push("model.ckpt".to_string());
    if let Some(t) = &outcome.teacher {
        save_checkpoint(t, &dir.join("teacher.ckpt"))?;
        files.push("teacher.ckpt".to_string());
    }
    Ok(files)
}
