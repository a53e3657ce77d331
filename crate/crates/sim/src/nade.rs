//! Adversarial background-vehicle control at critical moments.
//!
//! Each surrogate model (SM) stands in for the AV in a short deterministic
//! rollout: the BV applies a candidate action for one step and then holds its
//! speed, and the action is challenging if the rollout ends in a crash. A step
//! is critical when `sum_a p(a|s) max_j challenge_j(s, a)` exceeds the
//! threshold; there every SM turns its challenges into an importance
//! distribution with a defensive share of `p`, and the BV samples from their
//! mixture.

use std::collections::HashMap;

use avscv_core::CriticalStepRecord;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::driver::DriverParams;
use crate::episode::{follower_acceleration, simulate, Choice, EpisodeConfig, EpisodeResult};
use crate::error::{Error, Result};
use crate::ndd::{sample_index, AccelGrid, ActionDistribution, NddModel};
use crate::state::{step_dynamics, BvAction, Lane, OvertakingState};

pub const DEFAULT_CHALLENGE_HORIZON: usize = 30;
pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_BUCKET: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    pub id: usize,
    pub driver: DriverParams,
    #[serde(default = "default_challenge_horizon")]
    pub challenge_horizon: usize,
}

fn default_challenge_horizon() -> usize {
    DEFAULT_CHALLENGE_HORIZON
}

/// IDM with alpha = 2, FVDM floored at -1 m/s^2 and FVDM floored at -6 m/s^2.
pub fn default_surrogates() -> Vec<SurrogateSpec> {
    [DriverParams::idm(2.0), DriverParams::fvdm(-1.0), DriverParams::fvdm(-6.0)]
        .into_iter()
        .enumerate()
        .map(|(i, driver)| SurrogateSpec { id: i + 1, driver, challenge_horizon: DEFAULT_CHALLENGE_HORIZON })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NadeConfig {
    pub surrogates: Vec<SurrogateSpec>,
    pub alpha: Vec<f64>,
    pub epsilon: f64,
    pub criticality_threshold: f64,
    /// Resolution of the challenge cache buckets (m and m/s); `None` evaluates every state exactly.
    pub bucket: Option<f64>,
}

impl Default for NadeConfig {
    fn default() -> Self {
        let surrogates = default_surrogates();
        let j = surrogates.len();
        Self {
            surrogates,
            alpha: vec![1.0 / j as f64; j],
            epsilon: DEFAULT_EPSILON,
            criticality_threshold: 0.0,
            bucket: Some(DEFAULT_BUCKET),
        }
    }
}

impl NadeConfig {
    pub fn num_components(&self) -> usize {
        self.surrogates.len()
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.surrogates.len();
        if j == 0 {
            return Err(Error::InvalidModel("at least one surrogate model is required".into()));
        }
        if self.surrogates.iter().enumerate().any(|(i, s)| s.id != i + 1) {
            return Err(Error::InvalidModel("surrogate ids must be 1..J in order".into()));
        }
        for s in &self.surrogates {
            s.driver.validate()?;
        }
        if self.alpha.len() != j {
            return Err(Error::InvalidModel(format!("alpha has {} weights for {j} surrogates", self.alpha.len())));
        }
        if self.alpha.iter().any(|a| !(*a >= 0.0)) || (self.alpha.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel("alpha must be nonnegative and sum to 1".into()));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidModel("epsilon must lie in [0, 1)".into()));
        }
        if self.criticality_threshold.is_nan() {
            return Err(Error::InvalidModel("criticality threshold is NaN".into()));
        }
        if let Some(b) = self.bucket {
            if !(b > 0.0) {
                return Err(Error::InvalidModel("bucket resolution must be positive".into()));
            }
        }
        Ok(())
    }
}

/// `log10` of the number of individual control variates `J^(T+2)` that an
/// unstratified control variate over a `horizon`-step episode would need.
pub fn full_cv_column_count_log10(num_components: usize, horizon: usize) -> f64 {
    (horizon as f64 + 2.0) * (num_components as f64).log10()
}

/// Rolls the surrogate forward after `action`; true if it ends in a crash.
fn rollout_crashes(sm: &SurrogateSpec, state: &OvertakingState, action: BvAction, dt: f64) -> bool {
    let mut s = step_dynamics(state, 0.0, action, follower_acceleration(&sm.driver, state), dt);
    if s.is_crash() {
        return true;
    }
    for _ in 0..sm.challenge_horizon {
        s = step_dynamics(&s, 0.0, BvAction::Accelerate(0.0), follower_acceleration(&sm.driver, &s), dt);
        if s.is_crash() {
            return true;
        }
    }
    false
}

/// Binary maneuver challenge of one action for one surrogate, evaluated at the exact state.
pub fn maneuver_challenge(sm: &SurrogateSpec, state: &OvertakingState, action: BvAction, dt: f64) -> f64 {
    if let BvAction::CutIn = action {
        if !state.cut_in_feasible() {
            return 0.0;
        }
    }
    if state.bv_lane == Lane::Left && matches!(action, BvAction::Accelerate(_)) {
        // The BV stays out of the AV's lane for the whole rollout.
        return 0.0;
    }
    if rollout_crashes(sm, state, action, dt) {
        1.0
    } else {
        0.0
    }
}

/// Challenges of every action as a bit set (bit `i` for grid index `i`, the last bit for cut-in).
fn challenge_mask(sm: &SurrogateSpec, state: &OvertakingState, grid: &AccelGrid, dt: f64) -> u64 {
    let mut mask = 0u64;
    match state.bv_lane {
        Lane::Left => {
            if maneuver_challenge(sm, state, BvAction::CutIn, dt) > 0.0 {
                mask |= 1 << grid.n;
            }
        }
        Lane::Right => {
            for i in 0..grid.n {
                if rollout_crashes(sm, state, BvAction::Accelerate(grid.value(i)), dt) {
                    mask |= 1 << i;
                }
            }
        }
    }
    mask
}

type BucketKey = (Lane, i64, i64, i64);

/// Memo of challenge masks per state bucket. Masks are computed at the bucket
/// centre, so the cache content never depends on which state filled it.
#[derive(Debug, Default)]
pub struct ChallengeCache {
    map: HashMap<BucketKey, Box<[u64]>>,
    pub hits: u64,
    pub misses: u64,
}

impl ChallengeCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn bucket_of(x: f64, res: f64) -> i64 {
    (x / res).floor() as i64
}

fn bucket_center(k: i64, res: f64) -> f64 {
    (k as f64 + 0.5) * res
}

/// The state at which a bucketed challenge is evaluated. Only the quantities
/// that affect the AV and BV are kept.
pub fn bucket_representative(state: &OvertakingState, res: f64) -> OvertakingState {
    OvertakingState {
        v_bv: bucket_center(bucket_of(state.v_bv, res), res),
        r1: 0.0,
        r1_dot: 0.0,
        r2: bucket_center(bucket_of(state.r2, res), res),
        r2_dot: bucket_center(bucket_of(state.r2_dot, res), res),
        bv_lane: state.bv_lane,
        t: 0,
    }
}

/// Challenge masks of all surrogates at `state`.
pub fn challenge_masks(cfg: &NadeConfig, grid: &AccelGrid, state: &OvertakingState, dt: f64, cache: &mut ChallengeCache) -> Box<[u64]> {
    assert!(grid.n < 64, "acceleration grid too large for the challenge bit set");
    let compute = |s: &OvertakingState| -> Box<[u64]> { cfg.surrogates.iter().map(|sm| challenge_mask(sm, s, grid, dt)).collect() };
    match cfg.bucket {
        None => compute(state),
        Some(res) => {
            let key = (state.bv_lane, bucket_of(state.r2, res), bucket_of(state.r2_dot, res), bucket_of(state.v_bv, res));
            if let Some(m) = cache.map.get(&key) {
                cache.hits += 1;
                return m.clone();
            }
            cache.misses += 1;
            let m = compute(&bucket_representative(state, res));
            cache.map.insert(key, m.clone());
            m
        }
    }
}

/// `sum_a p(a|s) max_j challenge_j(s, a)` together with every SM's challenges.
pub fn criticality(ndd: &NddModel, sms: &[SurrogateSpec], state: &OvertakingState, dt: f64) -> (f64, Vec<Vec<f64>>) {
    let dist = ndd.action_distribution(state);
    let challenges: Vec<Vec<f64>> = sms
        .iter()
        .map(|sm| (0..dist.num_actions()).map(|i| maneuver_challenge(sm, state, dist.action(i, &ndd.accel_grid), dt)).collect())
        .collect();
    (criticality_value(&dist.probs, &challenges), challenges)
}

pub fn criticality_value(p: &[f64], challenges: &[Vec<f64>]) -> f64 {
    p.iter()
        .enumerate()
        .map(|(a, pa)| {
            let c = challenges.iter().map(|c| c[a]).fold(0.0, f64::max);
            if c > 0.0 {
                pa * c
            } else {
                0.0
            }
        })
        .sum()
}

fn mask_to_challenges(masks: &[u64], n: usize) -> Vec<Vec<f64>> {
    masks.iter().map(|m| (0..n).map(|a| if m >> a & 1 == 1 { 1.0 } else { 0.0 }).collect()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceDistribution {
    pub mixture: Vec<f64>,
    pub per_sm: Vec<Vec<f64>>,
    pub is_critical: bool,
    pub criticality: f64,
}

/// Importance distributions from `p(a|s)` and each SM's challenges.
pub fn importance_distribution(p: &[f64], challenges: &[Vec<f64>], alpha: &[f64], epsilon: f64, threshold: f64) -> ImportanceDistribution {
    let criticality = criticality_value(p, challenges);
    let is_critical = criticality > threshold;
    if !is_critical {
        return ImportanceDistribution { mixture: p.to_vec(), per_sm: vec![p.to_vec(); challenges.len()], is_critical, criticality };
    }
    let per_sm: Vec<Vec<f64>> = challenges
        .iter()
        .map(|c| {
            let z: f64 = p.iter().zip(c).map(|(pa, ca)| pa * ca).sum();
            if z > 0.0 {
                p.iter().zip(c).map(|(pa, ca)| (1.0 - epsilon) * pa * ca / z + epsilon * pa).collect()
            } else {
                p.to_vec()
            }
        })
        .collect();
    let mixture = (0..p.len()).map(|a| per_sm.iter().zip(alpha).map(|(q, w)| w * q[a]).sum()).collect();
    ImportanceDistribution { mixture, per_sm, is_critical, criticality }
}

/// Importance distribution at `state` with challenges from the (possibly cached) surrogate rollouts.
pub fn importance_at(
    ndd: &NddModel,
    cfg: &NadeConfig,
    dist: &ActionDistribution,
    state: &OvertakingState,
    dt: f64,
    cache: &mut ChallengeCache,
) -> ImportanceDistribution {
    let masks = challenge_masks(cfg, &ndd.accel_grid, state, dt, cache);
    let challenges = mask_to_challenges(&masks, dist.num_actions());
    importance_distribution(&dist.probs, &challenges, &cfg.alpha, cfg.epsilon, cfg.criticality_threshold)
}

/// Episode in the adversarial environment. Non-critical steps are drawn from
/// `p(a|s)` exactly as in [`crate::run_nde_episode`]; critical steps are drawn
/// from the mixture and recorded.
pub fn run_nade_episode<R: Rng + ?Sized>(
    rng: &mut R,
    ndd: &NddModel,
    nade: &NadeConfig,
    cfg: &EpisodeConfig,
    cache: &mut ChallengeCache,
    test_id: u64,
    trace: bool,
) -> Result<EpisodeResult> {
    let never_critical = nade.criticality_threshold == f64::INFINITY;
    simulate(rng, ndd, cfg, test_id, trace, |s, dist, u| {
        // Before the lane change only the cut-in can be challenging, so its
        // probability bounds the criticality.
        if never_critical || (s.bv_lane == Lane::Left && dist.cut_in_prob() <= nade.criticality_threshold) {
            return Choice { index: sample_index(&dist.probs, u), step: None };
        }
        let imp = importance_at(ndd, nade, dist, s, cfg.dt, cache);
        if !imp.is_critical {
            return Choice { index: sample_index(&dist.probs, u), step: None };
        }
        let index = sample_index(&imp.mixture, u);
        let q_alpha = imp.mixture[index];
        assert!(q_alpha > 0.0, "sampled an action outside the mixture support");
        let q = imp.per_sm.iter().map(|q| q[index]).collect();
        Choice { index, step: Some(CriticalStepRecord::new(dist.probs[index], q_alpha, q)) }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_challenging_action() {
        let p = vec![0.1, 0.5, 0.4];
        let c = vec![vec![1.0, 0.0, 0.0]];
        let d = importance_distribution(&p, &c, &[1.0], 0.1, 0.0);
        assert!(d.is_critical);
        assert!((d.criticality - 0.1).abs() < 1e-15);
        assert!((d.per_sm[0][0] - 0.91).abs() < 1e-12);
        assert!((d.per_sm[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_critical_is_naturalistic() {
        let p = vec![0.1, 0.5, 0.4];
        let c = vec![vec![0.0; 3], vec![0.0; 3]];
        let d = importance_distribution(&p, &c, &[0.5, 0.5], 0.1, 0.0);
        assert!(!d.is_critical);
        assert_eq!(d.criticality, 0.0);
        assert_eq!(d.mixture, p);
    }

    #[test]
    fn full_defensive_mixing_and_fallback() {
        let p = vec![0.2, 0.3, 0.5];
        let c = vec![vec![1.0, 0.0, 1.0], vec![0.0, 0.0, 0.0]];
        let d = importance_distribution(&p, &c, &[0.5, 0.5], 0.0, 0.0);
        assert_eq!(d.per_sm[1], p);
        let d = importance_distribution(&p, &c, &[0.5, 0.5], 1.0 - 1e-300, 0.0);
        for (a, b) in d.per_sm[0].iter().zip(&p) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn column_count() {
        assert!((full_cv_column_count_log10(3, 201) - 203.0 * 3f64.log10()).abs() < 1e-12);
    }
}
