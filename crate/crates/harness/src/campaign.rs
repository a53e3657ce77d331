//! Seeded parallel test campaigns and their persisted artifacts.
//!
//! Episode `i` always draws from stream `i` of the campaign seed and every
//! worker keeps its own challenge cache (a pure memo), so the records do not
//! depend on the worker count. Output files:
//!
//! * `records.jsonl`: one record per test, ordered by `test_id`;
//! * `summary.json`: the resolved configuration and all estimates;
//! * `strata.csv`: per-stratum sizes, widths and ranks (NADE only);
//! * `convergence_<estimator>.csv`: running estimates;
//! * `traces/test_<id>.csv` when tracing.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use avscv_core::estimate::{scan_rnot, BootstrapConfig};
use avscv_core::scv::prefix::PreparedRecords;
use avscv_core::scv::{infer_components, scv_estimate, stratify, StratumDiagnostic};
use avscv_core::{bootstrap_rnot, EstimateReport, Estimator, TestRecord};
use avscv_sim::nade::full_cv_column_count_log10;
use avscv_sim::{episode_rng, run_nade_episode, run_nde_episode, write_trajectory_csv, ChallengeCache, EpisodeResult};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CampaignConfig, Mode};
use crate::convergence::{convergence_rows, write_convergence_csv};
use crate::error::{Error, Result};
use crate::records::write_records;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub shuffles: usize,
    pub mean_rnot: Option<f64>,
    pub reached: usize,
    pub unreached: usize,
    pub mean_rnot_with_fallback: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub estimator: String,
    pub mean: f64,
    pub variance: f64,
    pub half_width: f64,
    pub rhw: Option<f64>,
    pub lower: f64,
    pub upper: f64,
    /// First `n` in record order with RHW at or below the threshold.
    pub rnot: Option<usize>,
    pub bootstrap: Option<BootstrapSummary>,
}

impl EstimateSummary {
    fn new(name: &str, r: &EstimateReport, rnot: Option<usize>, bootstrap: Option<BootstrapSummary>) -> Self {
        let (lower, upper) = r.interval();
        Self {
            estimator: name.to_string(),
            mean: r.mean,
            variance: r.asymptotic_variance,
            half_width: r.half_width,
            rhw: r.rhw,
            lower,
            upper,
            rnot,
            bootstrap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub config: CampaignConfig,
    pub n: usize,
    pub crashes: usize,
    /// Raw share of crashed tests (an estimate of the crash rate only in NDE).
    pub crash_fraction: f64,
    /// Number of tests per control step count.
    pub control_steps: Vec<usize>,
    /// `log10 J^(T+2)`: control variates an unstratified design would need.
    pub full_cv_columns_log10: f64,
    pub estimates: Vec<EstimateSummary>,
    pub strata: Vec<StratumDiagnostic>,
}

impl CampaignSummary {
    pub fn estimate(&self, name: &str) -> Option<&EstimateSummary> {
        self.estimates.iter().find(|e| e.estimator == name)
    }
}

#[derive(Debug)]
pub struct CampaignOutput {
    pub records: Vec<TestRecord>,
    pub summary: CampaignSummary,
    pub dir: PathBuf,
}

impl CampaignOutput {
    pub fn records_path(&self) -> PathBuf {
        self.dir.join("records.jsonl")
    }
}

/// Runs the episodes only, in `test_id` order.
pub fn simulate_records(cfg: &CampaignConfig, trace_dir: Option<&Path>) -> Result<Vec<TestRecord>> {
    cfg.validate()?;
    let ndd = cfg.load_ndd()?;
    let episode = cfg.episode_config();
    let nade = cfg.nade_config();
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(cfg.worker_count()).build().map_err(|e| Error::Runtime(format!("thread pool: {e}")))?;
    let trace = trace_dir.is_some();
    pool.install(|| {
        (0..cfg.n)
            .into_par_iter()
            .map_init(ChallengeCache::new, |cache, i| -> Result<TestRecord> {
                let mut rng = episode_rng(cfg.seed, i);
                let r: EpisodeResult = match cfg.mode {
                    Mode::Nde => run_nde_episode(&mut rng, &ndd, &episode, i, trace)?,
                    Mode::Nade => run_nade_episode(&mut rng, &ndd, &nade, &episode, cache, i, trace)?,
                };
                if let (Some(dir), Some(rows)) = (trace_dir, r.trajectory.as_ref()) {
                    let path = dir.join(format!("test_{i:08}.csv"));
                    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
                    write_trajectory_csv(rows, file)?;
                }
                Ok(r.record)
            })
            .collect()
    })
}

/// Estimators that apply to records of the given mode.
pub fn estimators_for(mode: Mode, cfg: &CampaignConfig) -> Vec<Estimator> {
    match mode {
        Mode::Nde => vec![Estimator::Crude],
        Mode::Nade => vec![Estimator::ImportanceSampling, Estimator::Scv(cfg.scv_options())],
    }
}

fn bootstrap_cfg(cfg: &CampaignConfig) -> BootstrapConfig {
    BootstrapConfig {
        num_shuffles: cfg.num_shuffles,
        rhw_threshold: cfg.rhw_threshold,
        confidence: cfg.confidence,
        seed: cfg.bootstrap_seed,
        min_tests: 1,
    }
}

/// RNoT of the records in their stored order.
pub fn rnot_in_order(records: &[TestRecord], estimator: &Estimator, cfg: &BootstrapConfig) -> Result<Option<usize>> {
    let order: Vec<usize> = (0..records.len()).collect();
    Ok(match estimator {
        Estimator::Scv(opts) => PreparedRecords::new(records, opts)?.scan(&order, cfg).first_crossing,
        _ => {
            let c = estimator.contributions(records)?.expect("non-refitting estimator");
            scan_rnot(&c, cfg.rhw_threshold, cfg.confidence, cfg.min_tests).first_crossing
        }
    })
}

/// Estimates, strata and counts of a record set.
pub fn summarize(cfg: &CampaignConfig, records: &[TestRecord]) -> Result<CampaignSummary> {
    let boot = bootstrap_cfg(cfg);
    let mut estimates = Vec::new();
    let mut strata = Vec::new();
    for est in estimators_for(cfg.mode, cfg) {
        let report = match est {
            Estimator::Scv(opts) => {
                let j = infer_components(records)?;
                let scv = scv_estimate(&stratify(records, opts.l_max), j, &opts)?;
                strata = scv.diagnostics();
                scv.report.with_confidence(cfg.confidence)
            }
            _ => est.estimate(records, cfg.confidence)?,
        };
        let rnot = rnot_in_order(records, &est, &boot)?;
        let bootstrap = if cfg.num_shuffles > 0 {
            let b = bootstrap_rnot(records, &est, &boot)?;
            Some(BootstrapSummary {
                shuffles: cfg.num_shuffles,
                mean_rnot: b.mean_rnot,
                reached: b.reached,
                unreached: b.unreached,
                mean_rnot_with_fallback: b.mean_rnot_with_fallback,
            })
        } else {
            None
        };
        estimates.push(EstimateSummary::new(est.name(), &report, rnot, bootstrap));
    }
    let crashes = records.iter().filter(|r| r.crash_prob() > 0.0).count();
    let max_l = records.iter().map(|r| r.num_control_steps()).max().unwrap_or(0);
    let mut control_steps = vec![0; max_l + 1];
    for r in records {
        control_steps[r.num_control_steps()] += 1;
    }
    Ok(CampaignSummary {
        config: cfg.clone(),
        n: records.len(),
        crashes,
        crash_fraction: crashes as f64 / records.len().max(1) as f64,
        control_steps,
        full_cv_columns_log10: full_cv_column_count_log10(cfg.surrogates.len(), cfg.horizon),
        estimates,
        strata,
    })
}

pub fn write_strata_csv(path: &Path, strata: &[StratumDiagnostic]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e))?;
    for s in strata {
        w.serialize(s).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs the campaign and writes every artifact to `cfg.output_dir`.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignOutput> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let trace_dir = cfg.trace.then(|| dir.join("traces"));
    if let Some(t) = &trace_dir {
        std::fs::create_dir_all(t).map_err(|e| Error::io(t, e))?;
    }

    let start = Instant::now();
    let records = simulate_records(cfg, trace_dir.as_deref())?;
    eprintln!("simulated {} {:?} episodes in {:.1?}", records.len(), cfg.mode, start.elapsed());
    write_records(&dir.join("records.jsonl"), &records)?;

    let summary = summarize(cfg, &records)?;
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Runtime(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    if cfg.mode == Mode::Nade {
        write_strata_csv(&dir.join("strata.csv"), &summary.strata)?;
    }
    for est in estimators_for(cfg.mode, cfg) {
        let rows = convergence_rows(&records, &est, cfg.confidence)?;
        let path = dir.join(format!("convergence_{}.csv", est.name()));
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_convergence_csv(&rows, file)?;
    }
    Ok(CampaignOutput { records, summary, dir })
}
