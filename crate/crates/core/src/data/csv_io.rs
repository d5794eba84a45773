//! CSV export/import of a split dataset.
//!
//! Columns, in order: `x0 .. x{d-1}`, `label`, `labeled`. Rows follow the
//! original pool order; `labeled` is 1 for labelled examples, 0 otherwise.

use std::path::Path;

use super::SslDataset;
use crate::error::{Error, Result};
use crate::nn::Matrix;

pub const CSV_LABEL_COLUMN: &str = "label";
pub const CSV_MASK_COLUMN: &str = "labeled";

pub fn export_csv(ds: &SslDataset, path: &Path) -> Result<()> {
    let (x, y) = ds.evaluation_set();
    let mut is_labeled = vec![false; x.rows()];
    for &i in ds.labeled_index() {
        is_labeled[i] = true;
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..x.cols()).map(|j| format!("x{j}")).collect();
    header.push(CSV_LABEL_COLUMN.to_string());
    header.push(CSV_MASK_COLUMN.to_string());
    w.write_record(&header)?;
    for (i, &labeled) in is_labeled.iter().enumerate() {
        let mut rec: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(y.argmax_row(i).to_string());
        rec.push(u8::from(labeled).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn import_csv(path: &Path) -> Result<SslDataset> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let n = header.len();
    if n < 3 || &header[n - 2] != CSV_LABEL_COLUMN || &header[n - 1] != CSV_MASK_COLUMN {
        return Err(Error::Format(format!(
            "expected trailing columns `{CSV_LABEL_COLUMN},{CSV_MASK_COLUMN}`"
        )));
    }
    let d = n - 2;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut labeled = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Format(format!("row {}: bad {what}", row + 1));
        for j in 0..d {
            data.push(rec[j].parse::<f64>().map_err(|_| bad("feature"))?);
        }
        labels.push(rec[d].parse::<usize>().map_err(|_| bad(CSV_LABEL_COLUMN))?);
        match &rec[d + 1] {
            "1" => labeled.push(row),
            "0" => {}
            _ => return Err(bad(CSV_MASK_COLUMN)),
        }
    }
    let classes = labels.iter().max().map_or(2, |&m| (m + 1).max(2));
    let x = Matrix::from_vec(labels.len(), d, data)?;
    SslDataset::from_parts(&x, &labels, &labeled, classes)
}
