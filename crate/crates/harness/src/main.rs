use std::path::PathBuf;
use std::process::ExitCode;

use avscv_core::estimate::{BootstrapConfig, DEFAULT_CONFIDENCE, DEFAULT_NUM_SHUFFLES, DEFAULT_RHW_THRESHOLD};
use avscv_core::scv::{infer_components, scv_estimate, stratify, ScvOptions, DEFAULT_L_MAX};
use avscv_core::{bootstrap_rnot, Estimator};
use avscv_harness::campaign::{write_strata_csv, CampaignSummary};
use avscv_harness::compare::CompareOptions;
use avscv_harness::convergence::emit_convergence_csv;
use avscv_harness::{compare, parse_estimator, read_records, run_campaign, toy_verify, CampaignConfig, Error, Mode, RecordSet, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "avscv", version, about = "Crash-rate evaluation of an automated vehicle with sparse control variates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a test campaign from a configuration file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Estimate the crash rate from a record file.
    Estimate {
        #[command(flatten)]
        input: Input,
        /// Write the per-stratum table (SCV only).
        #[arg(long)]
        strata_csv: Option<PathBuf>,
    },
    /// Running estimate at log-spaced sample sizes.
    Convergence {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bootstrap RNoT and acceleration ratios across record sets and estimators.
    Compare {
        #[arg(long = "records", required = true)]
        records: Vec<PathBuf>,
        /// One label per record file (defaults to the file stem).
        #[arg(long, value_delimiter = ',')]
        labels: Vec<String>,
        /// Estimators for every set (defaults depend on the records).
        #[arg(long, value_delimiter = ',')]
        estimators: Vec<String>,
        #[command(flatten)]
        boot: Boot,
        #[arg(long, default_value_t = DEFAULT_CONFIDENCE)]
        confidence: f64,
        #[arg(long, default_value_t = DEFAULT_L_MAX)]
        l_max: usize,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run the toy-world verification suite.
    ToyVerify {
        /// Additional toy worlds (JSON) to validate and check.
        #[arg(long = "world")]
        worlds: Vec<PathBuf>,
    },
    /// Bootstrap distribution of the required number of tests.
    Bootstrap {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        boot: Boot,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Input {
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    estimator: String,
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE)]
    confidence: f64,
    #[arg(long, default_value_t = DEFAULT_L_MAX)]
    l_max: usize,
}

#[derive(Args)]
struct Boot {
    #[arg(long, default_value_t = DEFAULT_NUM_SHUFFLES)]
    shuffles: usize,
    #[arg(long, default_value_t = DEFAULT_RHW_THRESHOLD)]
    threshold: f64,
    #[arg(long = "boot-seed", default_value_t = 0)]
    boot_seed: u64,
}

impl Boot {
    fn config(&self, confidence: f64) -> Result<BootstrapConfig> {
        let mut problems = Vec::new();
        if self.shuffles == 0 {
            problems.push("shuffles must be at least 1".to_string());
        }
        if !(self.threshold > 0.0) {
            problems.push("threshold must be positive".to_string());
        }
        if !(confidence > 0.0 && confidence < 1.0) {
            problems.push("confidence must lie in (0, 1)".to_string());
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        Ok(BootstrapConfig { num_shuffles: self.shuffles, rhw_threshold: self.threshold, confidence, seed: self.boot_seed, min_tests: 1 })
    }
}

fn write_json<T: serde::Serialize>(value: &T, path: Option<&PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Runtime(e.to_string()))?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| Error::io(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn print_summary(s: &CampaignSummary) {
    println!("{} tests, {} crashes ({:.3e})", s.n, s.crashes, s.crash_fraction);
    for e in &s.estimates {
        let rhw = e.rhw.map_or("-".to_string(), |v| format!("{v:.3}"));
        let boot = e.bootstrap.as_ref().and_then(|b| b.mean_rnot).map_or("-".to_string(), |v| format!("{v:.1}"));
        println!(
            "{:<6} mean {:.4e}  [{:.4e}, {:.4e}]  rhw {}  rnot {}  bootstrap rnot {}",
            e.estimator,
            e.mean,
            e.lower,
            e.upper,
            rhw,
            e.rnot.map_or("-".to_string(), |v| v.to_string()),
            boot
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, mode, n, seed, workers } => {
            let mut cfg = CampaignConfig::load(&config)?;
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if let Some(n) = n {
                cfg.n = n;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            cfg.validate()?;
            let out = run_campaign(&cfg)?;
            print_summary(&out.summary);
            println!("artifacts in {}", out.dir.display());
        }
        Command::Estimate { input, strata_csv } => {
            let est = parse_estimator(&input.estimator, input.l_max)?;
            let records = read_records(&input.records)?;
            match est {
                Estimator::Scv(opts) => {
                    let scv = scv_estimate(&stratify(&records, opts.l_max), infer_components(&records)?, &opts)?;
                    if let Some(p) = &strata_csv {
                        write_strata_csv(p, &scv.diagnostics())?;
                    }
                    let report = scv.report.with_confidence(input.confidence);
                    write_json(&serde_json::json!({ "estimator": "scv", "report": report, "strata": scv.diagnostics() }), None)?;
                }
                _ => {
                    let report = est.estimate(&records, input.confidence)?;
                    write_json(&serde_json::json!({ "estimator": est.name(), "report": report }), None)?;
                }
            }
        }
        Command::Convergence { input, out } => {
            let est = parse_estimator(&input.estimator, input.l_max)?;
            let rows = emit_convergence_csv(&input.records, &est, input.confidence, &out)?;
            eprintln!("{} rows written to {}", rows.len(), out.display());
        }
        Command::Compare { records, labels, estimators, boot, confidence, l_max, json } => {
            if !labels.is_empty() && labels.len() != records.len() {
                return Err(Error::config(format!("{} labels for {} record files", labels.len(), records.len())));
            }
            let mut sets = Vec::new();
            for (i, path) in records.iter().enumerate() {
                let label = labels
                    .get(i)
                    .cloned()
                    .unwrap_or_else(|| path.file_stem().map_or(format!("set{i}"), |s| s.to_string_lossy().into_owned()));
                sets.push(RecordSet { label, records: read_records(path)? });
            }
            let ests = estimators.iter().map(|e| parse_estimator(e, l_max)).collect::<Result<Vec<_>>>()?;
            let opts = CompareOptions { bootstrap: boot.config(confidence)?, scv: ScvOptions { l_max, ..ScvOptions::default() } };
            let report = compare(&sets, (!ests.is_empty()).then_some(&ests[..]), &opts)?;
            print!("{}", report.render());
            if let Some(p) = &json {
                write_json(&report, Some(p))?;
            }
        }
        Command::ToyVerify { worlds } => {
            let report = toy_verify(&worlds)?;
            print!("{}", report.render());
            if !report.passed() {
                let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                return Err(Error::Verification(failed.join(", ")));
            }
        }
        Command::Bootstrap { input, boot, out } => {
            let est = parse_estimator(&input.estimator, input.l_max)?;
            let records = read_records(&input.records)?;
            let cfg = boot.config(input.confidence)?;
            let report = bootstrap_rnot(&records, &est, &cfg)?;
            eprintln!(
                "{}: mean RNoT {} ({} of {} shuffles reached RHW {})",
                est.name(),
                report.mean_rnot.map_or("none".to_string(), |v| format!("{v:.1}")),
                report.reached,
                cfg.num_shuffles,
                cfg.rhw_threshold
            );
            write_json(&report, out.as_ref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
