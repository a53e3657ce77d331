//! Campaign configuration, read from JSON or TOML.

use std::path::{Path, PathBuf};

use avscv_core::estimate::{DEFAULT_CONFIDENCE, DEFAULT_NUM_SHUFFLES, DEFAULT_RHW_THRESHOLD};
use avscv_core::scv::{ScvOptions, DEFAULT_L_MAX};
use avscv_sim::nade::{DEFAULT_BUCKET, DEFAULT_EPSILON};
use avscv_sim::state::{DEFAULT_DT, DEFAULT_HORIZON};
use avscv_sim::{default_surrogates, DriverParams, EpisodeConfig, LvPolicy, NadeConfig, NddModel, SurrogateSpec, SyntheticNdd};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Overrides `output_dir` of any loaded configuration.
pub const OUTPUT_DIR_ENV: &str = "AVSCV_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Nde,
    Nade,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "nde" => Ok(Mode::Nde),
            "nade" => Ok(Mode::Nade),
            _ => Err(format!("unknown mode `{s}` (expected nde or nade)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub mode: Mode,
    pub n: u64,
    #[serde(default)]
    pub seed: u64,
    /// Mixture weights; empty means uniform over the surrogates.
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// `"inf"` disables adversarial control.
    #[serde(default, with = "threshold")]
    pub criticality_threshold: f64,
    #[serde(default = "default_l_max")]
    pub l_max: usize,
    #[serde(default = "default_rhw")]
    pub rhw_threshold: f64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default = "default_av")]
    pub av_model: DriverParams,
    #[serde(default = "default_surrogates")]
    pub surrogates: Vec<SurrogateSpec>,
    /// Behavior tables; the synthetic model is used when absent.
    #[serde(default)]
    pub ndd: Option<PathBuf>,
    #[serde(default)]
    pub synthetic_ndd: SyntheticNdd,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub trace: bool,
    /// 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_lv")]
    pub lv_policy: LvPolicy,
    /// Challenge cache resolution; `null` evaluates every state exactly.
    #[serde(default = "default_bucket")]
    pub bucket: Option<f64>,
    /// Bootstrap shuffles for the summary RNoT; 0 skips the bootstrap.
    #[serde(default = "default_shuffles")]
    pub num_shuffles: usize,
    #[serde(default)]
    pub bootstrap_seed: u64,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_l_max() -> usize {
    DEFAULT_L_MAX
}
fn default_rhw() -> f64 {
    DEFAULT_RHW_THRESHOLD
}
fn default_confidence() -> f64 {
    DEFAULT_CONFIDENCE
}
fn default_av() -> DriverParams {
    DriverParams::idm(2.0)
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_horizon() -> usize {
    DEFAULT_HORIZON
}
fn default_dt() -> f64 {
    DEFAULT_DT
}
fn default_lv() -> LvPolicy {
    LvPolicy::ConstantSpeed
}
fn default_bucket() -> Option<f64> {
    Some(DEFAULT_BUCKET)
}
fn default_shuffles() -> usize {
    DEFAULT_NUM_SHUFFLES
}

impl CampaignConfig {
    /// Defaults for everything but the mode and size.
    pub fn new(mode: Mode, n: u64) -> Self {
        let mut c: Self = serde_json::from_value(serde_json::json!({ "mode": mode, "n": n })).expect("defaults deserialize");
        c.resolve();
        c
    }

    /// Reads a `.json` or `.toml` file, resolves defaults and applies the
    /// output-directory override from the environment. A relative `ndd` path
    /// is taken relative to the configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?,
            _ => serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?,
        };
        if let (Some(ndd), Some(dir)) = (cfg.ndd.as_mut(), path.parent()) {
            if ndd.is_relative() {
                *ndd = dir.join(&*ndd);
            }
        }
        cfg.resolve();
        cfg.apply_env();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            if !dir.is_empty() {
                self.output_dir = PathBuf::from(dir);
            }
        }
    }

    /// Fills in values that default to something derived from other fields.
    pub fn resolve(&mut self) {
        if self.alpha.is_empty() && !self.surrogates.is_empty() {
            let j = self.surrogates.len();
            self.alpha = vec![1.0 / j as f64; j];
        }
    }

    /// All problems with the configuration at once.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n < 1 {
            out.push("n must be at least 1".to_string());
        }
        if !(self.rhw_threshold > 0.0) {
            out.push(format!("rhw_threshold must be positive (got {})", self.rhw_threshold));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            out.push(format!("confidence must lie in (0, 1) (got {})", self.confidence));
        }
        if self.l_max < 1 {
            out.push("l_max must be at least 1".to_string());
        }
        if !(self.dt > 0.0) {
            out.push(format!("dt must be positive (got {})", self.dt));
        }
        if let Err(e) = self.av_model.validate() {
            out.push(format!("av_model: {e}"));
        }
        if let LvPolicy::Free { driver } = &self.lv_policy {
            if let Err(e) = driver.validate() {
                out.push(format!("lv_policy: {e}"));
            }
        }
        if self.alpha.iter().any(|a| !(*a >= 0.0)) {
            out.push("alpha weights must be nonnegative".to_string());
        } else if (self.alpha.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            out.push(format!("alpha must sum to 1 (sums to {})", self.alpha.iter().sum::<f64>()));
        }
        if self.surrogates.is_empty() {
            out.push("at least one surrogate model is required".to_string());
        }
        if self.surrogates.iter().enumerate().any(|(i, s)| s.id != i + 1) {
            out.push("surrogate ids must be 1..J in order".to_string());
        }
        for s in &self.surrogates {
            if let Err(e) = s.driver.validate() {
                out.push(format!("surrogate {}: {e}", s.id));
            }
        }
        if self.alpha.len() != self.surrogates.len() {
            out.push(format!("alpha has {} weights for {} surrogates", self.alpha.len(), self.surrogates.len()));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            out.push(format!("epsilon must lie in [0, 1) (got {})", self.epsilon));
        }
        if self.criticality_threshold.is_nan() {
            out.push("criticality_threshold is NaN".to_string());
        }
        if let Some(b) = self.bucket {
            if !(b > 0.0) {
                out.push(format!("bucket must be positive (got {b})"));
            }
        }
        if let Some(p) = &self.ndd {
            if !p.exists() {
                out.push(format!("ndd file {} does not exist", p.display()));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    pub fn nade_config(&self) -> NadeConfig {
        NadeConfig {
            surrogates: self.surrogates.clone(),
            alpha: self.alpha.clone(),
            epsilon: self.epsilon,
            criticality_threshold: self.criticality_threshold,
            bucket: self.bucket,
        }
    }

    pub fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig { horizon: self.horizon, dt: self.dt, av: self.av_model, lv: self.lv_policy }
    }

    pub fn scv_options(&self) -> ScvOptions {
        ScvOptions { l_max: self.l_max, ..ScvOptions::default() }
    }

    pub fn load_ndd(&self) -> Result<NddModel> {
        match &self.ndd {
            Some(p) => Ok(NddModel::load(p)?),
            None => Ok(self.synthetic_ndd.build()),
        }
    }

    pub fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        }
    }
}

/// A threshold that may be infinite, written as `"inf"` where the format has no infinity.
mod threshold {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) => match t.to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "+inf" => Ok(f64::INFINITY),
                _ => t.parse().map_err(|_| serde::de::Error::custom(format!("invalid threshold `{t}`"))),
            },
        }
    }
}
