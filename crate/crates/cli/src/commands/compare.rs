use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::{run_experiment, write_metrics};
use crate::args::CompareArgs;
use crate::manifest::{build_id, timestamp, RunManifest};
use crate::{load_named, resolve_seed, CliError, Loaded};

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub preset: String,
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

/// Accuracy statistics of one preset over its successful runs.
#[derive(Debug, Clone, Serialize)]
pub struct PresetSummary {
    pub preset: String,
    pub runs: usize,
    pub failures: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation; `None` with fewer than two runs.
    pub std: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

/// Paired difference `minuend - subtrahend` over seeds where both succeeded.
#[derive(Debug, Clone, Serialize)]
pub struct PairedDelta {
    pub minuend: String,
    pub subtrahend: String,
    pub pairs: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub seeds: Vec<u64>,
    pub summaries: Vec<PresetSummary>,
    pub deltas: Vec<PairedDelta>,
    pub runs: Vec<RunResult>,
}

impl CompareReport {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.accuracy.is_none()).count()
    }
}

pub fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.len() >= 2)
        .then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

pub fn summarize(preset: &str, runs: &[RunResult]) -> PresetSummary {
    let mine: Vec<&RunResult> = runs.iter().filter(|r| r.preset == preset).collect();
    let acc: Vec<f64> = mine.iter().filter_map(|r| r.accuracy).collect();
    let (mean, std) = mean_std(&acc);
    PresetSummary {
        preset: preset.to_string(),
        runs: acc.len(),
        failures: mine.len() - acc.len(),
        mean,
        std,
        min: acc.iter().copied().reduce(f64::min),
        max: acc.iter().copied().reduce(f64::max),
    }
}

pub fn paired_delta(minuend: &str, subtrahend: &str, runs: &[RunResult]) -> PairedDelta {
    let acc = |name: &str, seed: u64| {
        runs.iter()
            .find(|r| r.preset == name && r.seed == seed)
            .and_then(|r| r.accuracy)
    };
    let mut seeds: Vec<u64> = runs.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let diffs: Vec<f64> = seeds
        .iter()
        .filter_map(|&s| Some(acc(minuend, s)? - acc(subtrahend, s)?))
        .collect();
    let (mean, std) = mean_std(&diffs);
    PairedDelta {
        minuend: minuend.to_string(),
        subtrahend: subtrahend.to_string(),
        pairs: diffs.len(),
        mean,
        std,
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{:.2}", 100.0 * x))
}

pub fn render_table(report: &CompareReport) -> String {
    let width = report
        .summaries
        .iter()
        .map(|s| s.preset.len())
        .max()
        .unwrap_or(6)
        .max(6);
    let mut out = format!(
        "{:<width$}  {:>4}  {:>6}  {:>7}  {:>6}  {:>7}  {:>7}\n",
        "preset", "runs", "failed", "mean%", "std", "min%", "max%"
    );
    for s in &report.summaries {
        out.push_str(&format!(
            "{:<width$}  {:>4}  {:>6}  {:>7}  {:>6}  {:>7}  {:>7}\n",
            s.preset,
            s.runs,
            s.failures,
            pct(s.mean),
            pct(s.std),
            pct(s.min),
            pct(s.max)
        ));
    }
    for d in &report.deltas {
        out.push_str(&format!(
            "delta {} - {}: {} points (paired over {} seeds, std {})\n",
            d.minuend,
            d.subtrahend,
            d.mean
                .map_or_else(|| "NA".to_string(), |m| format!("{:+.2}", 100.0 * m)),
            d.pairs,
            pct(d.std)
        ));
    }
    out
}

fn run_one(loaded: &Loaded, seed: u64, out: Option<&Path>) -> Result<f64, CliError> {
    let config = loaded.config.clone().with_seed(seed);
    let (outcome, acc) = run_experiment(&config)?;
    if let Some(root) = out {
        let dir = root.join(&loaded.name).join(format!("seed-{seed}"));
        std::fs::create_dir_all(&dir)?;
        write_metrics(&dir, &outcome)?;
    }
    match outcome.status {
        smpl_core::trainers::RunStatus::Completed => Ok(acc),
        smpl_core::trainers::RunStatus::Aborted { step, reason } => Err(CliError::runtime(
            format!("aborted at step {step}: {reason}"),
        )),
    }
}

/// Runs every preset over the seed range. Failed runs are recorded and left
/// out of the statistics.
pub fn compare(
    presets: &[Loaded],
    seeds: &[u64],
    jobs: Option<usize>,
    out: Option<&Path>,
) -> Result<CompareReport, CliError> {
    let work: Vec<(&Loaded, u64)> = presets
        .iter()
        .flat_map(|p| seeds.iter().map(move |&s| (p, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::runtime(format!("cannot start worker pool: {e}")))?;
    let runs: Vec<RunResult> = pool.install(|| {
        work.par_iter()
            .map(|&(p, seed)| {
                let r = run_one(p, seed, out);
                RunResult {
                    preset: p.name.clone(),
                    seed,
                    accuracy: r.as_ref().ok().copied(),
                    error: r.err().map(|e| format!("{e:#}")),
                }
            })
            .collect()
    });
    let summaries = presets.iter().map(|p| summarize(&p.name, &runs)).collect();
    let deltas = presets[1..]
        .iter()
        .map(|p| paired_delta(&presets[0].name, &p.name, &runs))
        .collect();
    Ok(CompareReport {
        seeds: seeds.to_vec(),
        summaries,
        deltas,
        runs,
    })
}

pub fn run(args: &CompareArgs) -> Result<CompareReport, CliError> {
    if args.presets.len() < 2 {
        return Err(CliError::usage("compare needs at least two presets"));
    }
    if args.seeds == 0 {
        return Err(CliError::usage("--seeds must be >= 1"));
    }
    if args.jobs == Some(0) {
        return Err(CliError::usage("--jobs must be >= 1"));
    }
    let presets = args
        .presets
        .iter()
        .map(|p| load_named(p, &args.overrides))
        .collect::<Result<Vec<_>, _>>()?;
    let mut names: Vec<&str> = presets.iter().map(|p| p.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::usage("compare presets must have distinct names"));
    }
    let first = resolve_seed(args.first_seed, 0)?;
    let seeds: Vec<u64> = (first..first + args.seeds as u64).collect();
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
    }

    let started = timestamp();
    let report = compare(&presets, &seeds, args.jobs, args.out.as_deref())?;
    let finished = timestamp();

    if args.json {
        super::emit(&(serde_json::to_string_pretty(&report)? + "\n"))?;
    } else {
        super::emit(&render_table(&report))?;
    }
    for r in report.runs.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "run {} seed {} failed: {}",
            r.preset,
            r.seed,
            r.error.as_deref().unwrap_or_default()
        );
    }
    if let Some(dir) = &args.out {
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        std::fs::write(dir.join("summary.json"), text)?;
        let mut files = vec!["summary.json".to_string()];
        for p in &presets {
            for s in &seeds {
                files.push(format!("{}/seed-{s}/metrics.csv", p.name));
            }
        }
        files.push(crate::manifest::MANIFEST_FILE.to_string());
        RunManifest {
            command: "compare".to_string(),
            build: build_id(),
            origin: presets
                .iter()
                .map(|p| p.origin.as_str())
                .collect::<Vec<_>>()
                .join(","),
            config: presets[0].config.clone(),
            overrides: args.overrides.clone(),
            seeds: seeds.clone(),
            output_dir: dir.display().to_string(),
            files,
            started_unix: started,
            finished_unix: finished,
            result: json!({
                "configs": presets.iter().map(|p| &p.config).collect::<Vec<_>>(),
                "failures": report.failures(),
            }),
        }
        .write(dir)?;
    }
    if report.failures() > 0 {
        return Err(CliError::runtime(format!(
            "{} of {} runs failed",
            report.failures(),
            report.runs.len()
        )));
    }
    Ok(report)
}
