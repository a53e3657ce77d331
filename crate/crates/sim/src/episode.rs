//! Episode loop shared by naturalistic and adversarial testing.

use std::io::Write;

use avscv_core::{CriticalStepRecord, TestRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::driver::DriverParams;
use crate::error::Result;
use crate::ndd::{sample_index, ActionDistribution, NddModel};
use crate::state::{step_dynamics, BvAction, Lane, OvertakingState, DEFAULT_DT, DEFAULT_HORIZON, GLOBAL_ACCEL_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum LvPolicy {
    ConstantSpeed,
    /// Free-road driving with the given model (the LV has nothing ahead).
    Free {
        driver: DriverParams,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub horizon: usize,
    pub dt: f64,
    pub av: DriverParams,
    pub lv: LvPolicy,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self { horizon: DEFAULT_HORIZON, dt: DEFAULT_DT, av: DriverParams::idm(2.0), lv: LvPolicy::ConstantSpeed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub v_bv: f64,
    pub r1: f64,
    pub r1_dot: f64,
    pub r2: f64,
    pub r2_dot: f64,
    pub bv_lane: Lane,
    /// BV acceleration, empty for a cut-in and on the final row.
    pub bv_accel: Option<f64>,
    pub cut_in: bool,
    pub av_accel: Option<f64>,
    pub lv_accel: Option<f64>,
    pub critical: bool,
}

impl TraceRow {
    fn new(s: &OvertakingState) -> Self {
        Self {
            t: s.t,
            v_bv: s.v_bv,
            r1: s.r1,
            r1_dot: s.r1_dot,
            r2: s.r2,
            r2_dot: s.r2_dot,
            bv_lane: s.bv_lane,
            bv_accel: None,
            cut_in: false,
            av_accel: None,
            lv_accel: None,
            critical: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub crash: bool,
    pub duration_steps: usize,
    pub final_state: OvertakingState,
    pub record: TestRecord,
    pub trajectory: Option<Vec<TraceRow>>,
}

/// Per-episode generator: the stream is selected by the episode index so
/// results do not depend on how episodes are scheduled across workers.
pub fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

/// AV (or surrogate) acceleration: free driving while the BV is in the other
/// lane, car following once it has cut in.
pub fn follower_acceleration(driver: &DriverParams, s: &OvertakingState) -> f64 {
    let v = s.v_av();
    match s.bv_lane {
        Lane::Left => driver.free(v),
        Lane::Right => driver.following(v, s.av_gap(), -s.r2_dot).unwrap_or(GLOBAL_ACCEL_MIN),
    }
}

fn lv_acceleration(policy: &LvPolicy, s: &OvertakingState) -> f64 {
    match policy {
        LvPolicy::ConstantSpeed => 0.0,
        LvPolicy::Free { driver } => driver.free(s.v_lv()),
    }
}

/// Decision of the BV at one step: the action index and, at critical steps,
/// the likelihood entries of the chosen action.
pub(crate) struct Choice {
    pub index: usize,
    pub step: Option<CriticalStepRecord>,
}

/// Runs one episode. `choose` receives the state, `p(a|s)` and one uniform
/// draw; every caller consumes the generator identically.
pub(crate) fn simulate<R, F>(
    rng: &mut R,
    ndd: &NddModel,
    cfg: &EpisodeConfig,
    test_id: u64,
    trace: bool,
    mut choose: F,
) -> Result<EpisodeResult>
where
    R: Rng + ?Sized,
    F: FnMut(&OvertakingState, &ActionDistribution, f64) -> Choice,
{
    let mut s = ndd.sample_initial_state(rng);
    let mut rows = trace.then(Vec::new);
    let mut steps = Vec::new();
    let mut crash = false;
    let mut duration = 0;
    for _ in 0..cfg.horizon {
        let dist = ndd.action_distribution(&s);
        let u = rng.random::<f64>();
        let choice = choose(&s, &dist, u);
        let action = dist.action(choice.index, &ndd.accel_grid);
        let a_av = follower_acceleration(&cfg.av, &s);
        let a_lv = lv_acceleration(&cfg.lv, &s);
        if let Some(rows) = rows.as_mut() {
            let mut row = TraceRow::new(&s);
            match action {
                BvAction::Accelerate(a) => row.bv_accel = Some(a),
                BvAction::CutIn => row.cut_in = true,
            }
            row.av_accel = Some(a_av);
            row.lv_accel = Some(a_lv);
            row.critical = choice.step.is_some();
            rows.push(row);
        }
        if let Some(step) = choice.step {
            steps.push(step);
        }
        s = step_dynamics(&s, a_lv, action, a_av, cfg.dt);
        duration += 1;
        if s.is_crash() {
            crash = true;
            break;
        }
    }
    if let Some(rows) = rows.as_mut() {
        rows.push(TraceRow::new(&s));
    }
    let record = TestRecord::new(test_id, if crash { 1.0 } else { 0.0 }, steps)?;
    Ok(EpisodeResult { crash, duration_steps: duration, final_state: s, record, trajectory: rows })
}

/// Episode in the naturalistic environment: every BV action is drawn from `p(a|s)`.
pub fn run_nde_episode<R: Rng + ?Sized>(
    rng: &mut R,
    ndd: &NddModel,
    cfg: &EpisodeConfig,
    test_id: u64,
    trace: bool,
) -> Result<EpisodeResult> {
    simulate(rng, ndd, cfg, test_id, trace, |_, dist, u| Choice { index: sample_index(&dist.probs, u), step: None })
}

pub fn write_trajectory_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| crate::error::Error::Io { path: "trajectory".into(), source })?;
    Ok(())
}
