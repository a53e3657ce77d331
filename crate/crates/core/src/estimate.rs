//! Plain estimators, convergence metrics and bootstrap of the required number of tests.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::TestRecord;
use crate::scv::{self, ScvOptions};
use crate::stats::{mean_and_variance, two_sided_z, Running};

pub const DEFAULT_CONFIDENCE: f64 = 0.90;
pub const DEFAULT_RHW_THRESHOLD: f64 = 0.3;
pub const DEFAULT_NUM_SHUFFLES: usize = 200;

/// Point estimate with its asymptotic variance and confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub mean: f64,
    /// Variance of the per-test contributions (not divided by `n`).
    pub asymptotic_variance: f64,
    pub n: usize,
    pub half_width: f64,
    /// `half_width / mean`; `None` when the mean is not positive.
    pub rhw: Option<f64>,
    pub confidence: f64,
}

impl EstimateReport {
    pub fn from_moments(mean: f64, asymptotic_variance: f64, n: usize, confidence: f64) -> Self {
        let asymptotic_variance = asymptotic_variance.max(0.0);
        let half_width = if n == 0 { f64::INFINITY } else { two_sided_z(confidence) * (asymptotic_variance / n as f64).sqrt() };
        let rhw = (mean > 0.0).then(|| half_width / mean);
        Self { mean, asymptotic_variance, n, half_width, rhw, confidence }
    }

    /// Mean and sample variance of the per-test contributions.
    pub fn from_contributions(contributions: &[f64], confidence: f64) -> Result<Self> {
        if contributions.is_empty() {
            return Err(Error::NoSamples);
        }
        let (mean, var) = mean_and_variance(contributions);
        Ok(Self::from_moments(mean, var, contributions.len(), confidence))
    }

    pub fn with_confidence(&self, confidence: f64) -> Self {
        Self::from_moments(self.mean, self.asymptotic_variance, self.n, confidence)
    }

    /// The RHW is computed from a single sample and carries no information.
    pub fn rhw_unreliable(&self) -> bool {
        self.n < 2
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.mean - self.half_width, self.mean + self.half_width)
    }

    pub fn overlaps(&self, other: &EstimateReport) -> bool {
        let (a0, a1) = self.interval();
        let (b0, b1) = other.interval();
        a0 <= b1 && b0 <= a1
    }
}

/// Which estimator turns a record sequence into an estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    /// Average of crash probabilities (records drawn from the naturalistic distribution).
    Crude,
    /// Likelihood-ratio weighting over the critical steps.
    ImportanceSampling,
    /// Stratified sparse control variates.
    Scv(ScvOptions),
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Crude => "crude",
            Estimator::ImportanceSampling => "is",
            Estimator::Scv(_) => "scv",
        }
    }

    /// Per-test contributions for estimators that do not refit on the data.
    pub fn contributions(&self, records: &[TestRecord]) -> Result<Option<Vec<f64>>> {
        match self {
            Estimator::Crude => Ok(Some(records.iter().map(|r| r.crash_prob()).collect())),
            Estimator::ImportanceSampling => Ok(Some(is_contributions(records)?)),
            Estimator::Scv(_) => Ok(None),
        }
    }

    pub fn estimate(&self, records: &[TestRecord], confidence: f64) -> Result<EstimateReport> {
        match self {
            Estimator::Crude => crude_monte_carlo(records).map(|r| r.with_confidence(confidence)),
            Estimator::ImportanceSampling => importance_weighted_estimate(records).map(|r| r.with_confidence(confidence)),
            Estimator::Scv(opts) => {
                if records.is_empty() {
                    return Err(Error::NoSamples);
                }
                let batch = scv::stratify(records, opts.l_max);
                let j = scv::infer_components(records)?;
                scv::scv_estimate(&batch, j, opts).map(|r| r.report.with_confidence(confidence))
            }
        }
    }
}

pub fn crude_monte_carlo(records: &[TestRecord]) -> Result<EstimateReport> {
    let ys: Vec<f64> = records.iter().map(|r| r.crash_prob()).collect();
    EstimateReport::from_contributions(&ys, DEFAULT_CONFIDENCE)
}

fn is_contributions(records: &[TestRecord]) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| {
            r.check_support()?;
            Ok(r.weighted_outcome())
        })
        .collect()
}

/// Importance-weighted estimate: `Y_i = P(A|X_i) prod_l p_l / q_alpha_l`.
pub fn importance_weighted_estimate(records: &[TestRecord]) -> Result<EstimateReport> {
    if records.is_empty() {
        return Err(Error::NoSamples);
    }
    EstimateReport::from_contributions(&is_contributions(records)?, DEFAULT_CONFIDENCE)
}

/// Ordinary control variates `Z_ij = q_j/q_alpha - 1`, `j = 1..J-1`, with a fixed control vector.
pub fn ordinary_cv_estimate(records: &[TestRecord], beta: &[f64]) -> Result<EstimateReport> {
    if records.is_empty() {
        return Err(Error::NoSamples);
    }
    if let Some(j) = records.iter().find_map(|r| r.num_components()) {
        if beta.len() + 1 != j {
            return Err(Error::BetaLength { expected: j.saturating_sub(1), got: beta.len() });
        }
    }
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        r.check_support()?;
        let mut c = r.weighted_outcome();
        for (j, b) in beta.iter().enumerate() {
            c -= b * (r.component_ratio(j)? - 1.0);
        }
        out.push(c);
    }
    EstimateReport::from_contributions(&out, DEFAULT_CONFIDENCE)
}

/// `z(confidence) * sqrt(variance / n) / mean`.
pub fn relative_half_width(report: &EstimateReport) -> Result<f64> {
    if report.mean > 0.0 {
        Ok(report.half_width / report.mean)
    } else {
        Err(Error::RhwUndefined(report.mean))
    }
}

/// Result of scanning a running estimate for the RHW threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RnotScan {
    /// First `n` with positive mean and RHW at or below the threshold.
    pub first_crossing: Option<usize>,
    /// Smallest RHW seen (infinite if the mean never became positive).
    pub min_rhw: f64,
    /// `n` at which `min_rhw` was attained (0 if never defined).
    pub n_at_min_rhw: usize,
}

/// Smallest `n` whose running estimate has positive mean and RHW <= `rhw_threshold`.
pub fn required_num_tests(contributions: &[f64], rhw_threshold: f64, confidence: f64) -> Option<usize> {
    scan_rnot(contributions, rhw_threshold, confidence, 1).first_crossing
}

/// Prefix scan of the running RHW, ignoring prefixes shorter than `min_tests`.
pub fn scan_rnot(contributions: &[f64], rhw_threshold: f64, confidence: f64, min_tests: usize) -> RnotScan {
    let z = two_sided_z(confidence);
    let mut run = Running::new();
    let mut scan = RnotScan { first_crossing: None, min_rhw: f64::INFINITY, n_at_min_rhw: 0 };
    for &c in contributions {
        run.push(c);
        let n = run.count();
        if n < min_tests.max(1) || run.mean() <= 0.0 {
            continue;
        }
        let rhw = z * (run.variance() / n as f64).sqrt() / run.mean();
        if rhw < scan.min_rhw {
            scan.min_rhw = rhw;
            scan.n_at_min_rhw = n;
        }
        if rhw <= rhw_threshold {
            scan.first_crossing = Some(n);
            break;
        }
    }
    scan
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub num_shuffles: usize,
    pub rhw_threshold: f64,
    pub confidence: f64,
    pub seed: u64,
    /// Prefixes shorter than this never count as a crossing.
    pub min_tests: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            num_shuffles: DEFAULT_NUM_SHUFFLES,
            rhw_threshold: DEFAULT_RHW_THRESHOLD,
            confidence: DEFAULT_CONFIDENCE,
            seed: 0,
            min_tests: 1,
        }
    }
}

/// Distribution of the required number of tests over seeded shuffles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub estimator: String,
    /// Per-shuffle scan, in shuffle-index order.
    pub scans: Vec<RnotScan>,
    /// Mean RNoT over shuffles that reached the threshold.
    pub mean_rnot: Option<f64>,
    pub reached: usize,
    pub unreached: usize,
    /// Mean over all shuffles, using the `n` of the smallest RHW for shuffles that never crossed.
    pub mean_rnot_with_fallback: Option<f64>,
}

impl BootstrapReport {
    pub fn rnots(&self) -> Vec<Option<usize>> {
        self.scans.iter().map(|s| s.first_crossing).collect()
    }

    fn from_scans(estimator: &str, scans: Vec<RnotScan>) -> Self {
        let reached: Vec<f64> = scans.iter().filter_map(|s| s.first_crossing.map(|n| n as f64)).collect();
        let mean_rnot = (!reached.is_empty()).then(|| reached.iter().sum::<f64>() / reached.len() as f64);
        let fallback: Vec<f64> = scans
            .iter()
            .filter_map(|s| match s.first_crossing {
                Some(n) => Some(n as f64),
                None => (s.n_at_min_rhw > 0).then_some(s.n_at_min_rhw as f64),
            })
            .collect();
        let mean_rnot_with_fallback =
            (fallback.len() == scans.len() && !scans.is_empty()).then(|| fallback.iter().sum::<f64>() / fallback.len() as f64);
        Self {
            estimator: estimator.to_string(),
            reached: reached.len(),
            unreached: scans.len() - reached.len(),
            scans,
            mean_rnot,
            mean_rnot_with_fallback,
        }
    }
}

/// Uniform random permutation of `0..n` for one shuffle; depends only on `(seed, shuffle_index)`.
pub fn shuffle_order(n: usize, seed: u64, shuffle_index: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shuffle_index);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// RNoT scan of the records taken in the given order.
pub fn rnot_for_order(records: &[TestRecord], order: &[usize], estimator: &Estimator, cfg: &BootstrapConfig) -> Result<RnotScan> {
    match estimator {
        Estimator::Scv(opts) => scv::prefix::scan_rnot_scv(records, order, opts, cfg),
        _ => {
            let base = estimator.contributions(records)?.expect("non-refitting estimator");
            let stream: Vec<f64> = order.iter().map(|&i| base[i]).collect();
            Ok(scan_rnot(&stream, cfg.rhw_threshold, cfg.confidence, cfg.min_tests))
        }
    }
}

/// Bootstraps the required number of tests by re-ordering the records.
pub fn bootstrap_rnot(records: &[TestRecord], estimator: &Estimator, cfg: &BootstrapConfig) -> Result<BootstrapReport> {
    if records.is_empty() {
        return Err(Error::NoSamples);
    }
    if cfg.num_shuffles == 0 {
        return Err(Error::InvalidArgument("num_shuffles must be at least 1".into()));
    }
    let scans = match estimator {
        Estimator::Scv(opts) => {
            let prepared = scv::prefix::PreparedRecords::new(records, opts)?;
            (0..cfg.num_shuffles as u64)
                .into_par_iter()
                .map(|k| {
                    let order = shuffle_order(records.len(), cfg.seed, k);
                    prepared.scan(&order, cfg)
                })
                .collect::<Vec<_>>()
        }
        _ => {
            let base = estimator.contributions(records)?.expect("non-refitting estimator");
            (0..cfg.num_shuffles as u64)
                .into_par_iter()
                .map(|k| {
                    let order = shuffle_order(records.len(), cfg.seed, k);
                    let stream: Vec<f64> = order.iter().map(|&i| base[i]).collect();
                    scan_rnot(&stream, cfg.rhw_threshold, cfg.confidence, cfg.min_tests)
                })
                .collect()
        }
    };
    Ok(BootstrapReport::from_scans(estimator.name(), scans))
}
