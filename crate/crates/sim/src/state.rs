//! Three-vehicle overtaking state and its kinematics.
//!
//! The leading vehicle (LV) and the background vehicle (BV) start in the left
//! lane, the automated vehicle (AV) in the right lane behind the BV. The state
//! is kept relative to the BV: `r1 = x_LV - x_BV`, `r2 = x_BV - x_AV`, with
//! range rates `r1_dot = v_LV - v_BV` and `r2_dot = v_BV - v_AV`.

use serde::{Deserialize, Serialize};

pub const VEHICLE_LENGTH: f64 = 5.0;
pub const DEFAULT_DT: f64 = 0.1;
pub const DEFAULT_HORIZON: usize = 201;
/// Physical plausibility bounds applied to every driver-model output.
pub const GLOBAL_ACCEL_MIN: f64 = -8.0;
pub const GLOBAL_ACCEL_MAX: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lane {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OvertakingState {
    pub v_bv: f64,
    pub r1: f64,
    pub r1_dot: f64,
    pub r2: f64,
    pub r2_dot: f64,
    pub bv_lane: Lane,
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BvAction {
    Accelerate(f64),
    CutIn,
}

impl OvertakingState {
    pub fn v_lv(&self) -> f64 {
        (self.v_bv + self.r1_dot).max(0.0)
    }

    pub fn v_av(&self) -> f64 {
        (self.v_bv - self.r2_dot).max(0.0)
    }

    /// Bumper gap between the AV and the BV ahead of it.
    pub fn av_gap(&self) -> f64 {
        self.r2 - VEHICLE_LENGTH
    }

    pub fn cut_in_feasible(&self) -> bool {
        self.bv_lane == Lane::Left && self.r2 > 0.0
    }

    /// The AV has rear-ended the BV: same lane and bumpers overlapping.
    pub fn is_crash(&self) -> bool {
        self.bv_lane == Lane::Right && self.r2 <= VEHICLE_LENGTH
    }
}

/// Speed and distance travelled over `dt` under constant acceleration, with
/// the vehicle stopping (and staying stopped) if its speed would turn negative.
pub fn advance(v: f64, a: f64, dt: f64) -> (f64, f64) {
    let v_end = v + a * dt;
    if v_end >= 0.0 {
        (v_end, v * dt + 0.5 * a * dt * dt)
    } else {
        // a < 0 here; stop after v / -a seconds.
        (0.0, -v * v / (2.0 * a))
    }
}

/// One simulation step. A cut-in moves the BV to the right lane within the
/// step and holds its speed; otherwise the BV applies the given acceleration.
pub fn step_dynamics(state: &OvertakingState, a_lv: f64, action: BvAction, a_av: f64, dt: f64) -> OvertakingState {
    debug_assert!(dt > 0.0);
    let (a_bv, lane) = match action {
        BvAction::Accelerate(a) => (a, state.bv_lane),
        BvAction::CutIn => (0.0, Lane::Right),
    };
    let (v_lv, dx_lv) = advance(state.v_lv(), a_lv, dt);
    let (v_bv, dx_bv) = advance(state.v_bv.max(0.0), a_bv, dt);
    let (v_av, dx_av) = advance(state.v_av(), a_av, dt);
    OvertakingState {
        v_bv,
        r1: state.r1 + dx_lv - dx_bv,
        r1_dot: v_lv - v_bv,
        r2: state.r2 + dx_bv - dx_av,
        r2_dot: v_bv - v_av,
        bv_lane: lane,
        t: state.t + 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> OvertakingState {
        OvertakingState { v_bv: 30.0, r1: 40.0, r1_dot: 1.0, r2: 50.0, r2_dot: -5.0, bv_lane: Lane::Left, t: 0 }
    }

    #[test]
    fn constant_acceleration() {
        let (v, dx) = advance(10.0, 1.0, 0.1);
        assert!((v - 10.1).abs() < 1e-12);
        assert!((dx - 1.005).abs() < 1e-12);
    }

    #[test]
    fn stops_at_zero() {
        let (v, dx) = advance(0.05, -2.0, 0.1);
        assert_eq!(v, 0.0);
        // Stop time 0.025 s, distance v^2 / 2|a|.
        assert!((dx - 0.000625).abs() < 1e-15);
    }

    #[test]
    fn zero_accelerations_move_ranges_linearly() {
        let s = state();
        let n = step_dynamics(&s, 0.0, BvAction::Accelerate(0.0), 0.0, 0.1);
        assert!((n.r1 - (s.r1 + s.r1_dot * 0.1)).abs() < 1e-12);
        assert!((n.r2 - (s.r2 + s.r2_dot * 0.1)).abs() < 1e-12);
        assert_eq!(n.v_bv, s.v_bv);
        assert_eq!(n.t, 1);
    }

    #[test]
    fn cut_in_flips_lane_in_one_step() {
        let n = step_dynamics(&state(), 0.0, BvAction::CutIn, 0.0, 0.1);
        assert_eq!(n.bv_lane, Lane::Right);
        assert!(!n.cut_in_feasible());
    }

    #[test]
    fn crash_predicate() {
        let mut s = state();
        s.r2 = 4.0;
        assert!(!s.is_crash());
        s.bv_lane = Lane::Right;
        assert!(s.is_crash());
        s.r2 = 5.0;
        assert!(s.is_crash());
        s.r2 = 5.01;
        assert!(!s.is_crash());
    }
}
