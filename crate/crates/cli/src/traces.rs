//! CSV traces of training and refinement.

use std::path::Path;

use vtpc_core::certified::TraceRow;
use vtpc_core::training::TrainRecord;

use crate::error::{CliError, CliResult};

pub const TRAIN_HEADER: [&str; 6] = ["epoch", "alpha", "train_nll", "val_ll_soft", "val_ll_hard_lo", "val_ll_hard_hi"];
pub const REFINE_HEADER: [&str; 6] = ["iter", "z_lo", "z_hi", "gap", "boxes_total", "boxes_boundary"];

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| CliError::io(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(path, e))?;
    crate::write_file(path, &bytes)
}

/// Hard-gated columns are empty on epochs without a snapshot.
pub fn write_train_trace(path: &Path, trace: &[TrainRecord]) -> CliResult<()> {
    write_rows(
        path,
        &TRAIN_HEADER,
        trace.iter().map(|r| {
            let (lo, hi) = r.val_ll_hard.map(|(a, b)| (a.to_string(), b.to_string())).unwrap_or_default();
            vec![r.epoch.to_string(), r.alpha.to_string(), r.train_nll.to_string(), r.val_ll_soft.to_string(), lo, hi]
        }),
    )
}

pub fn write_refine_trace(path: &Path, trace: &[TraceRow]) -> CliResult<()> {
    write_rows(
        path,
        &REFINE_HEADER,
        trace.iter().map(|r| {
            vec![
                r.iter.to_string(),
                r.z_lo.to_string(),
                r.z_hi.to_string(),
                r.gap.to_string(),
                r.boxes_total.to_string(),
                r.boxes_boundary.to_string(),
            ]
        }),
    )
}
