//! Per-test likelihood bookkeeping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities of the action chosen at one critical step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalStepRecord {
    /// Naturalistic probability of the chosen action.
    pub p: f64,
    /// Mixture importance probability of the chosen action.
    pub q_alpha: f64,
    /// Probability of the chosen action under each individual importance function.
    #[serde(rename = "q")]
    pub q_individual: Vec<f64>,
}

impl CriticalStepRecord {
    pub fn new(p: f64, q_alpha: f64, q_individual: Vec<f64>) -> Self {
        Self { p, q_alpha, q_individual }
    }

    /// Checks `q_alpha == sum_j alpha_j q_j` within `tol`.
    pub fn mixture_consistent(&self, alpha: &[f64], tol: f64) -> bool {
        if alpha.len() != self.q_individual.len() {
            return false;
        }
        let mix: f64 = alpha.iter().zip(&self.q_individual).map(|(a, q)| a * q).sum();
        (mix - self.q_alpha).abs() <= tol
    }
}

/// Outcome of one tested scenario.
///
/// The likelihood ratio over the critical steps is cached at construction; the
/// record is immutable afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRecord", into = "RawRecord")]
pub struct TestRecord {
    test_id: u64,
    crash_prob: f64,
    steps: Vec<CriticalStepRecord>,
    weight: f64,
}

impl TestRecord {
    pub fn new(test_id: u64, crash_prob: f64, steps: Vec<CriticalStepRecord>) -> Result<Self> {
        if !(0.0..=1.0).contains(&crash_prob) {
            return Err(Error::InvalidRecord(format!("test {test_id}: crash probability {crash_prob} outside [0, 1]")));
        }
        for (i, s) in steps.iter().enumerate() {
            if !(s.p >= 0.0 && s.p.is_finite() && s.q_alpha.is_finite() && s.q_alpha >= 0.0) {
                return Err(Error::InvalidRecord(format!(
                    "test {test_id} step {i}: invalid probabilities p = {}, q_alpha = {}",
                    s.p, s.q_alpha
                )));
            }
        }
        let weight = steps.iter().map(|s| s.p / s.q_alpha).product();
        Ok(Self { test_id, crash_prob, steps, weight })
    }

    /// A record sampled from the naturalistic distribution (no critical steps).
    pub fn naturalistic(test_id: u64, crash_prob: f64) -> Result<Self> {
        Self::new(test_id, crash_prob, Vec::new())
    }

    pub fn test_id(&self) -> u64 {
        self.test_id
    }

    pub fn crash_prob(&self) -> f64 {
        self.crash_prob
    }

    pub fn steps(&self) -> &[CriticalStepRecord] {
        &self.steps
    }

    pub fn num_control_steps(&self) -> usize {
        self.steps.len()
    }

    /// Cached `prod_l p_l / q_alpha_l` (1 when there are no critical steps).
    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Importance-weighted contribution `P(A|X) * prod p / q_alpha`.
    pub fn weighted_outcome(&self) -> f64 {
        if self.crash_prob == 0.0 {
            0.0
        } else {
            self.crash_prob * self.weight
        }
    }

    /// Fails when any critical step has zero mixture probability.
    pub fn check_support(&self) -> Result<()> {
        for (i, s) in self.steps.iter().enumerate() {
            if s.q_alpha <= 0.0 {
                return Err(Error::SupportViolation { test_id: self.test_id, step: i, q_alpha: s.q_alpha });
            }
        }
        Ok(())
    }

    /// Number of importance functions recorded, if any step is present.
    pub fn num_components(&self) -> Option<usize> {
        self.steps.first().map(|s| s.q_individual.len())
    }

    /// `q_j(X_c) / q_alpha(X_c)` for component `j` (0-based), as a product over steps.
    pub fn component_ratio(&self, j: usize) -> Result<f64> {
        let mut r = 1.0;
        for (i, s) in self.steps.iter().enumerate() {
            let q = s.q_individual.get(j).ok_or(Error::IncompleteRecord {
                test_id: self.test_id,
                step: i,
                expected: j + 1,
                got: s.q_individual.len(),
            })?;
            r *= q / s.q_alpha;
        }
        Ok(r)
    }

    /// Same record with only the first `l` critical steps kept.
    pub fn truncated(&self, l: usize) -> TestRecord {
        if l >= self.steps.len() {
            return self.clone();
        }
        let steps = self.steps[..l].to_vec();
        let weight = steps.iter().map(|s| s.p / s.q_alpha).product();
        TestRecord { test_id: self.test_id, crash_prob: self.crash_prob, steps, weight }
    }
}

/// Wire form of a [`TestRecord`] (one JSON object per line).
#[derive(Serialize, Deserialize)]
struct RawRecord {
    test_id: u64,
    num_control_steps: usize,
    crash: f64,
    steps: Vec<CriticalStepRecord>,
}

impl TryFrom<RawRecord> for TestRecord {
    type Error = Error;

    fn try_from(raw: RawRecord) -> Result<Self> {
        if raw.num_control_steps != raw.steps.len() {
            return Err(Error::InvalidRecord(format!(
                "test {}: num_control_steps = {} but {} steps recorded",
                raw.test_id,
                raw.num_control_steps,
                raw.steps.len()
            )));
        }
        TestRecord::new(raw.test_id, raw.crash, raw.steps)
    }
}

impl From<TestRecord> for RawRecord {
    fn from(r: TestRecord) -> Self {
        RawRecord { test_id: r.test_id, num_control_steps: r.steps.len(), crash: r.crash_prob, steps: r.steps }
    }
}
