//! Bootstrap comparison of estimators across record sets.

use std::fmt::Write as _;

use avscv_core::estimate::BootstrapConfig;
use avscv_core::scv::ScvOptions;
use avscv_core::{bootstrap_rnot, Estimator, TestRecord};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub struct RecordSet {
    pub label: String,
    pub records: Vec<TestRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareOptions {
    pub bootstrap: BootstrapConfig,
    pub scv: ScvOptions,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self { bootstrap: BootstrapConfig::default(), scv: ScvOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    /// `set:estimator`.
    pub label: String,
    pub set: String,
    pub estimator: String,
    pub mean: f64,
    pub half_width: f64,
    pub mean_rnot: Option<f64>,
    pub reached: usize,
    /// RNoT of every shuffle, `None` where the threshold was never reached.
    pub rnots: Vec<Option<usize>>,
}

/// `AAR(a over b) = mean RNoT(b) / mean RNoT(a)` over shuffles where both reached the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AarEntry {
    pub a: String,
    pub b: String,
    pub aar: Option<f64>,
    pub paired_shuffles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub entries: Vec<ComparisonEntry>,
    pub aar: Vec<AarEntry>,
}

/// Plain estimators for a record set: crude when no test was controlled,
/// importance weighting and SCV otherwise.
pub fn default_estimators(records: &[TestRecord], scv: ScvOptions) -> Vec<Estimator> {
    if records.iter().all(|r| r.num_control_steps() == 0) {
        vec![Estimator::Crude]
    } else {
        vec![Estimator::ImportanceSampling, Estimator::Scv(scv)]
    }
}

pub fn aar(a: &[Option<usize>], b: &[Option<usize>]) -> (Option<f64>, usize) {
    let pairs: Vec<(f64, f64)> = a.iter().zip(b).filter_map(|(x, y)| Some(((*x)? as f64, (*y)? as f64))).collect();
    if pairs.is_empty() {
        return (None, 0);
    }
    let sa: f64 = pairs.iter().map(|p| p.0).sum();
    let sb: f64 = pairs.iter().map(|p| p.1).sum();
    (Some(sb / sa), pairs.len())
}

/// Bootstraps each `(set, estimator)` pair and forms every AAR. `estimators`
/// overrides the per-set defaults when given.
pub fn compare(sets: &[RecordSet], estimators: Option<&[Estimator]>, opts: &CompareOptions) -> Result<ComparisonReport> {
    let mut entries = Vec::new();
    for set in sets {
        let ests = match estimators {
            Some(e) => e.to_vec(),
            None => default_estimators(&set.records, opts.scv),
        };
        for est in ests {
            let report = est.estimate(&set.records, opts.bootstrap.confidence)?;
            let b = bootstrap_rnot(&set.records, &est, &opts.bootstrap)?;
            entries.push(ComparisonEntry {
                label: format!("{}:{}", set.label, est.name()),
                set: set.label.clone(),
                estimator: est.name().to_string(),
                mean: report.mean,
                half_width: report.half_width,
                mean_rnot: b.mean_rnot,
                reached: b.reached,
                rnots: b.rnots(),
            });
        }
    }
    if entries.len() < 2 {
        return Err(Error::config("comparison needs at least two (record set, estimator) pairs"));
    }
    let mut table = Vec::new();
    for a in &entries {
        for b in &entries {
            if a.label == b.label {
                continue;
            }
            let (v, paired) = aar(&a.rnots, &b.rnots);
            table.push(AarEntry { a: a.label.clone(), b: b.label.clone(), aar: v, paired_shuffles: paired });
        }
    }
    Ok(ComparisonReport { entries, aar: table })
}

impl ComparisonReport {
    pub fn aar_of(&self, a: &str, b: &str) -> Option<&AarEntry> {
        self.aar.iter().find(|e| e.a == a && e.b == b)
    }

    /// Text table: estimates and bootstrap RNoT, then AAR of each row over each column.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let w = self.entries.iter().map(|e| e.label.len()).max().unwrap_or(0).max(8);
        let _ = writeln!(s, "{:<w$}  {:>12}  {:>12}  {:>12}  {:>8}", "", "mean", "half-width", "mean RNoT", "reached");
        let shuffles = self.entries.first().map_or(0, |e| e.rnots.len());
        for e in &self.entries {
            let rnot = e.mean_rnot.map_or("none".to_string(), |v| format!("{v:.1}"));
            let _ =
                writeln!(s, "{:<w$}  {:>12.4e}  {:>12.4e}  {:>12}  {:>4}/{:<3}", e.label, e.mean, e.half_width, rnot, e.reached, shuffles);
        }
        let _ = writeln!(s, "\nAAR (row over column)");
        let _ = write!(s, "{:<w$}", "");
        for e in &self.entries {
            let _ = write!(s, "  {:>w$}", e.label);
        }
        let _ = writeln!(s);
        for a in &self.entries {
            let _ = write!(s, "{:<w$}", a.label);
            for b in &self.entries {
                let cell = if a.label == b.label {
                    "-".to_string()
                } else {
                    self.aar_of(&a.label, &b.label).and_then(|e| e.aar).map_or("none".to_string(), |v| format!("{v:.3}"))
                };
                let _ = write!(s, "  {cell:>w$}");
            }
            let _ = writeln!(s);
        }
        s
    }
}
