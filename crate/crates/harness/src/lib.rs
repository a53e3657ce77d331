//! Campaign orchestration for crash-rate evaluation: configuration, seeded
//! parallel execution, record persistence, convergence curves, bootstrap
//! comparisons and the toy-world verification suite. The `avscv` binary
//! exposes each step as a subcommand.

pub mod campaign;
pub mod compare;
pub mod config;
pub mod convergence;
pub mod error;
pub mod records;
pub mod verify;

use avscv_core::scv::ScvOptions;
use avscv_core::Estimator;

pub use campaign::{run_campaign, CampaignOutput, CampaignSummary};
pub use compare::{compare, ComparisonReport, RecordSet};
pub use config::{CampaignConfig, Mode};
pub use error::{Error, Result};
pub use records::{read_records, write_records};
pub use verify::toy_verify;

/// `crude`, `is` or `scv`.
pub fn parse_estimator(name: &str, l_max: usize) -> Result<Estimator> {
    match name {
        "crude" => Ok(Estimator::Crude),
        "is" => Ok(Estimator::ImportanceSampling),
        "scv" => Ok(Estimator::Scv(ScvOptions { l_max, ..ScvOptions::default() })),
        _ => Err(Error::config(format!("unknown estimator `{name}` (expected crude, is or scv)"))),
    }
}
