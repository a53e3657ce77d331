//! Sparse control variates.
//!
//! Records are stratified by their number of critical steps `l`. Inside
//! stratum `l` every record contributes one response `Y = P(A|X) prod p/q_alpha`
//! and one design row holding, for every index tuple `(j_1, .., j_l)` in
//! `{1..J-1}^l` (lexicographic order), the product of per-step ratios
//! `q_{j_k} / q_alpha`. The design is column-centred per stratum and regressed
//! on the response; each stratum contributes `n_l * intercept / n` to the
//! estimate and the centred fit adjusts every contribution.

pub mod prefix;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{EstimateReport, DEFAULT_CONFIDENCE};
use crate::record::TestRecord;
use crate::regression::{center_columns, fit_mlr_svd_with_floor, RegressionFit, CENTRING_NOISE, DEFAULT_REL_TOL};
use crate::stats::mean_and_variance;

pub const DEFAULT_L_MAX: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScvOptions {
    /// Records with more critical steps share the last stratum and use their first `l_max` steps.
    pub l_max: usize,
    /// Strata smaller than this keep zero coefficients.
    pub min_stratum_size: usize,
    /// Relative singular-value cutoff of the regression.
    pub rel_tol: f64,
    /// When false every coefficient is forced to zero.
    pub fit: bool,
}

impl Default for ScvOptions {
    fn default() -> Self {
        Self { l_max: DEFAULT_L_MAX, min_stratum_size: 3, rel_tol: DEFAULT_REL_TOL, fit: true }
    }
}

/// Records partitioned by `min(num_control_steps, l_max)`.
#[derive(Debug, Clone)]
pub struct StratifiedBatch<'a> {
    records: &'a [TestRecord],
    strata: Vec<Vec<usize>>,
    l_max: usize,
}

impl<'a> StratifiedBatch<'a> {
    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn records(&self) -> &'a [TestRecord] {
        self.records
    }

    /// Indices (into the original record slice) of stratum `l`.
    pub fn indices(&self, l: usize) -> &[usize] {
        &self.strata[l]
    }

    pub fn stratum(&self, l: usize) -> impl Iterator<Item = &'a TestRecord> + '_ {
        self.strata[l].iter().map(move |&i| &self.records[i])
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.strata.iter().map(Vec::len).collect()
    }
}

pub fn stratify(records: &[TestRecord], l_max: usize) -> StratifiedBatch<'_> {
    let l_max = l_max.max(1);
    let mut strata = vec![Vec::new(); l_max + 1];
    for (i, r) in records.iter().enumerate() {
        strata[r.num_control_steps().min(l_max)].push(i);
    }
    StratifiedBatch { records, strata, l_max }
}

/// Number of importance functions `J`, checked to be consistent over all steps.
/// Returns 1 when no record has a critical step.
pub fn infer_components(records: &[TestRecord]) -> Result<usize> {
    let mut j = None;
    for r in records {
        for (step, s) in r.steps().iter().enumerate() {
            match j {
                None => j = Some(s.q_individual.len()),
                Some(expected) if expected != s.q_individual.len() => {
                    return Err(Error::IncompleteRecord { test_id: r.test_id(), step, expected, got: s.q_individual.len() })
                }
                _ => {}
            }
        }
    }
    Ok(j.unwrap_or(1).max(1))
}

/// Number of design columns of stratum `l`: `(J - 1)^l`, zero for `l = 0`.
pub fn num_columns(l: usize, num_components: usize) -> usize {
    if l == 0 {
        0
    } else {
        (num_components - 1).pow(l as u32)
    }
}

/// Tensor-product design row over the first `l` critical steps.
pub fn scv_design_row(record: &TestRecord, l: usize, num_components: usize) -> Result<Vec<f64>> {
    if l == 0 {
        return Ok(Vec::new());
    }
    if record.num_control_steps() < l {
        return Err(Error::InvalidArgument(format!(
            "test {} has {} critical steps, stratum {l} requested",
            record.test_id(),
            record.num_control_steps()
        )));
    }
    let k = num_components - 1;
    let mut row = vec![1.0];
    for (step, s) in record.steps()[..l].iter().enumerate() {
        if s.q_individual.len() != num_components {
            return Err(Error::IncompleteRecord { test_id: record.test_id(), step, expected: num_components, got: s.q_individual.len() });
        }
        let ratios: Vec<f64> = s.q_individual[..k].iter().map(|q| q / s.q_alpha).collect();
        let mut next = Vec::with_capacity(row.len() * k);
        for a in &row {
            next.extend(ratios.iter().map(|r| a * r));
        }
        row = next;
    }
    Ok(row)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumFit {
    pub l: usize,
    pub n_l: usize,
    pub d_l: usize,
    /// `n_l * intercept / n`.
    pub mu_hat_l: f64,
    pub fit: RegressionFit,
    /// Whether a regression was run (false for `l = 0`, small or empty strata, or forced-zero fits).
    pub fitted: bool,
    /// Sample variance of the stratum's adjusted contributions.
    pub residual_variance: f64,
    /// Adjusted contributions `Y - H_c beta`, in stratum order.
    #[serde(skip)]
    pub adjusted: Vec<f64>,
}

/// Fits one stratum.
pub fn estimate_stratum(
    stratum_records: &[&TestRecord],
    l: usize,
    num_components: usize,
    n_total: usize,
    opts: &ScvOptions,
) -> Result<StratumFit> {
    let n_l = stratum_records.len();
    let d_l = num_columns(l, num_components);
    if n_l == 0 {
        return Ok(StratumFit {
            l,
            n_l,
            d_l,
            mu_hat_l: 0.0,
            fit: RegressionFit { intercept: 0.0, coefficients: vec![0.0; d_l], residuals: vec![], rank: 0 },
            fitted: false,
            residual_variance: 0.0,
            adjusted: vec![],
        });
    }
    let mut y = Vec::with_capacity(n_l);
    for r in stratum_records {
        r.check_support()?;
        y.push(r.weighted_outcome());
    }

    let do_fit = opts.fit && l > 0 && d_l > 0 && n_l >= opts.min_stratum_size;
    let (fit, adjusted) = if do_fit {
        let mut h = DMatrix::zeros(n_l, d_l);
        for (i, r) in stratum_records.iter().enumerate() {
            let row = scv_design_row(r, l, num_components)?;
            h.row_mut(i).copy_from_slice(&row);
        }
        let floor = CENTRING_NOISE * h.norm();
        center_columns(&mut h);
        let fit = fit_mlr_svd_with_floor(&y, &h, opts.rel_tol, floor)?;
        let beta = nalgebra::DVector::from_column_slice(&fit.coefficients);
        let shift = &h * beta;
        let adjusted: Vec<f64> = y.iter().zip(shift.iter()).map(|(y, s)| y - s).collect();
        (fit, adjusted)
    } else {
        (RegressionFit::intercept_only(&y, d_l), y.clone())
    };
    let residual_variance = mean_and_variance(&adjusted).1;
    Ok(StratumFit { l, n_l, d_l, mu_hat_l: n_l as f64 * fit.intercept / n_total as f64, fit, fitted: do_fit, residual_variance, adjusted })
}

/// Per-stratum row of the diagnostic table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumDiagnostic {
    pub l: usize,
    pub n_l: usize,
    pub d_l: usize,
    pub rank: usize,
    pub mu_hat_l: f64,
    pub residual_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScvReport {
    pub report: EstimateReport,
    pub strata: Vec<StratumFit>,
    /// Adjusted contribution of every record, in the original record order.
    #[serde(skip)]
    pub adjusted: Vec<f64>,
}

impl ScvReport {
    pub fn diagnostics(&self) -> Vec<StratumDiagnostic> {
        self.strata
            .iter()
            .map(|s| StratumDiagnostic {
                l: s.l,
                n_l: s.n_l,
                d_l: s.d_l,
                rank: s.fit.rank,
                mu_hat_l: s.mu_hat_l,
                residual_variance: s.residual_variance,
            })
            .collect()
    }

    pub fn stratum_sum(&self) -> f64 {
        self.strata.iter().map(|s| s.mu_hat_l).sum()
    }
}

/// Combined SCV estimate over all strata.
///
/// The mean and variance are taken over the adjusted contributions in the
/// original record order; their mean equals the sum of stratum estimates.
pub fn scv_estimate(batch: &StratifiedBatch<'_>, num_components: usize, opts: &ScvOptions) -> Result<ScvReport> {
    let n = batch.n();
    if n == 0 {
        return Err(Error::NoSamples);
    }
    let strata: Vec<StratumFit> = (0..=batch.l_max())
        .into_par_iter()
        .map(|l| {
            let recs: Vec<&TestRecord> = batch.stratum(l).collect();
            estimate_stratum(&recs, l, num_components, n, opts)
        })
        .collect::<Result<_>>()?;

    let mut adjusted = vec![0.0; n];
    for s in &strata {
        for (&i, &z) in batch.indices(s.l).iter().zip(&s.adjusted) {
            adjusted[i] = z;
        }
    }
    let report = EstimateReport::from_contributions(&adjusted, DEFAULT_CONFIDENCE)?;
    Ok(ScvReport { report, strata, adjusted })
}
