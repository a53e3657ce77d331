//! Running estimates at log-spaced sample sizes.

use std::io::Write;
use std::path::Path;

use avscv_core::scv::prefix::{log_checkpoints, PreparedRecords};
use avscv_core::{EstimateReport, Estimator, TestRecord};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::read_records;

pub const POINTS_PER_DECADE: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    /// Empty while the running mean is not positive.
    pub rhw: Option<f64>,
}

/// One row per checkpoint, estimated on the first `n` records. SCV rows come
/// from the streaming refit, which tracks a from-scratch fit to rounding.
pub fn convergence_rows(records: &[TestRecord], estimator: &Estimator, confidence: f64) -> Result<Vec<ConvergenceRow>> {
    if records.is_empty() {
        return Err(Error::Estimation(avscv_core::Error::NoSamples));
    }
    let checkpoints = log_checkpoints(records.len(), POINTS_PER_DECADE, 1);
    let row = |r: EstimateReport| ConvergenceRow { n: r.n, mean: r.mean, variance: r.asymptotic_variance, rhw: r.rhw };
    match estimator.contributions(records)? {
        Some(c) => checkpoints.iter().map(|&n| Ok(row(EstimateReport::from_contributions(&c[..n], confidence)?))).collect(),
        None => {
            let Estimator::Scv(opts) = estimator else { unreachable!("only SCV refits") };
            let order: Vec<usize> = (0..records.len()).collect();
            Ok(PreparedRecords::new(records, opts)?
                .curve(&order, &checkpoints)
                .into_iter()
                .map(|(n, mean, var)| row(EstimateReport::from_moments(mean, var, n, confidence)))
                .collect())
        }
    }
}

pub fn write_convergence_csv<W: Write>(rows: &[ConvergenceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Runtime(format!("writing convergence CSV: {e}")))?;
    }
    w.flush().map_err(|e| Error::Runtime(format!("writing convergence CSV: {e}")))
}

/// Reads `records_path` and writes the curve of `estimator` to `out_path`.
pub fn emit_convergence_csv(records_path: &Path, estimator: &Estimator, confidence: f64, out_path: &Path) -> Result<Vec<ConvergenceRow>> {
    let records = read_records(records_path)?;
    let rows = convergence_rows(&records, estimator, confidence)?;
    let file = std::fs::File::create(out_path).map_err(|e| Error::io(out_path, e))?;
    write_convergence_csv(&rows, file)?;
    Ok(rows)
}
