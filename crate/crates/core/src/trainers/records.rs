//! Per-step records and their CSV / JSON-lines encodings.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::losses::LossBundle;

/// Quantities of one training step.
///
/// For trainers without a second update, `loss.l2` is the loss that was
/// optimized and `grad_norm_2` is 0. `labeled_ce_before` and
/// `labeled_ce_after` bracket the update whose effect `loss.delta_ce`
/// measures.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: LossBundle,
    pub labeled_ce_before: f64,
    pub labeled_ce_after: f64,
    /// Gradient norms before clipping.
    pub grad_norm_1: f64,
    pub grad_norm_2: f64,
    /// Learning rate of the last update after scheduling.
    pub lr_effective: f64,
    /// `delta_ce - ema` used as the meta coefficient.
    pub signal: f64,
    /// Baseline after absorbing this step's `delta_ce`.
    pub ema: f64,
    /// Fraction of unlabelled rows passing the filter in the consistency term.
    pub uda_mask_fraction: f64,
}

impl StepRecord {
    /// A record for step `k` whose quantities were never computed; every
    /// float is NaN.
    pub fn unfinished(k: usize) -> Self {
        let nan = f64::NAN;
        Self {
            step: k,
            loss: LossBundle {
                l1: nan,
                l_uda: nan,
                l_mpl: nan,
                l2: nan,
                delta_ce: nan,
                beta_k: nan,
                mask_fraction: nan,
            },
            labeled_ce_before: nan,
            labeled_ce_after: nan,
            grad_norm_1: nan,
            grad_norm_2: nan,
            lr_effective: nan,
            signal: nan,
            ema: nan,
            uda_mask_fraction: nan,
        }
    }
}

#[derive(Serialize)]
struct CsvRow {
    step: usize,
    l1: f64,
    l_uda: f64,
    l_mpl: f64,
    l2: f64,
    delta_ce: f64,
    beta_k: f64,
    mask_fraction: f64,
    labeled_ce_before: f64,
    labeled_ce_after: f64,
    grad_norm_1: f64,
    grad_norm_2: f64,
    lr_effective: f64,
    signal: f64,
    ema: f64,
    uda_mask_fraction: f64,
}

impl From<&StepRecord> for CsvRow {
    fn from(r: &StepRecord) -> Self {
        Self {
            step: r.step,
            l1: r.loss.l1,
            l_uda: r.loss.l_uda,
            l_mpl: r.loss.l_mpl,
            l2: r.loss.l2,
            delta_ce: r.loss.delta_ce,
            beta_k: r.loss.beta_k,
            mask_fraction: r.loss.mask_fraction,
            labeled_ce_before: r.labeled_ce_before,
            labeled_ce_after: r.labeled_ce_after,
            grad_norm_1: r.grad_norm_1,
            grad_norm_2: r.grad_norm_2,
            lr_effective: r.lr_effective,
            signal: r.signal,
            ema: r.ema,
            uda_mask_fraction: r.uda_mask_fraction,
        }
    }
}

/// Column order of [`write_records_csv`].
pub const RECORD_CSV_HEADER: [&str; 16] = [
    "step",
    "l1",
    "l_uda",
    "l_mpl",
    "l2",
    "delta_ce",
    "beta_k",
    "mask_fraction",
    "labeled_ce_before",
    "labeled_ce_after",
    "grad_norm_1",
    "grad_norm_2",
    "lr_effective",
    "signal",
    "ema",
    "uda_mask_fraction",
];

/// Writes a header row and one row per record. Floats use the shortest
/// representation that round-trips.
pub fn write_records_csv<W: Write>(records: &[StepRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(RECORD_CSV_HEADER)?;
    for r in records {
        w.serialize(CsvRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_jsonl<W: Write>(records: &[StepRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records_jsonl<R: BufRead>(input: R) -> Result<Vec<StepRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
