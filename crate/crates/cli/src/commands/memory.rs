use serde::Serialize;
use smpl_core::trainers::{memory_report_with, MemoryReport, TrainerKind};

use crate::args::MemoryReportArgs;
use crate::{load_source, CliError};

#[derive(Debug, Clone, Serialize)]
pub struct MemoryComparison {
    pub smpl: MemoryReport,
    pub mpl: MemoryReport,
    /// Resident parameters of the two-model trainer over the single-model one.
    pub resident_ratio: f64,
}

/// Accounting for the configured network under both trainers.
pub fn memory_comparison(args: &MemoryReportArgs) -> Result<MemoryComparison, CliError> {
    let loaded = load_source(&args.source, Some("moons-smpl"))?;
    let cfg = loaded.config.train_config();
    let spec = cfg.spec_for(&loaded.config.dataset()?)?;
    let smpl = memory_report_with(TrainerKind::Smpl, &spec, &cfg.optim);
    let mpl = memory_report_with(TrainerKind::Mpl, &spec, &cfg.optim);
    Ok(MemoryComparison {
        smpl,
        mpl,
        resident_ratio: mpl.resident_param_count as f64 / smpl.resident_param_count as f64,
    })
}

type Row = (&'static str, fn(&MemoryReport) -> usize);

pub fn render(c: &MemoryComparison) -> String {
    let rows: [Row; 6] = [
        ("parameters per model", |r| r.param_count),
        ("resident model copies", |r| r.peak_live_model_copies),
        ("resident parameters", |r| r.resident_param_count),
        ("optimizer state values", |r| r.optimizer_state_count),
        ("gradient sets per step", |r| r.transient_gradient_sets),
        ("gradient values per step", |r| r.transient_gradient_count),
    ];
    let mut out = format!("{:<26}{:>10}{:>10}\n", "", "smpl", "mpl");
    for (label, f) in rows {
        out.push_str(&format!("{label:<26}{:>10}{:>10}\n", f(&c.smpl), f(&c.mpl)));
    }
    out.push_str(&format!(
        "resident ratio (mpl/smpl)  {:.2}\n",
        c.resident_ratio
    ));
    out
}

pub fn run(args: &MemoryReportArgs) -> Result<(), CliError> {
    let c = memory_comparison(args)?;
    if args.json {
        super::emit(&(serde_json::to_string_pretty(&c)? + "\n"))?;
    } else {
        super::emit(&render(&c))?;
    }
    Ok(())
}
