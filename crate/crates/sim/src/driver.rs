//! Car-following models: IDM and the full velocity difference model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{GLOBAL_ACCEL_MAX, GLOBAL_ACCEL_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdmParams {
    /// Maximum acceleration, m/s^2.
    pub alpha: f64,
    /// Desired speed, m/s.
    #[serde(default = "IdmParams::default_v0")]
    pub v0: f64,
    /// Time headway, s.
    #[serde(default = "IdmParams::default_t")]
    pub t_headway: f64,
    /// Jam distance, m.
    #[serde(default = "IdmParams::default_s0")]
    pub s0: f64,
    /// Comfortable deceleration, m/s^2.
    #[serde(default = "IdmParams::default_b")]
    pub b: f64,
    #[serde(default = "IdmParams::default_delta")]
    pub delta: f64,
}

impl IdmParams {
    fn default_v0() -> f64 {
        33.3
    }
    fn default_t() -> f64 {
        1.5
    }
    fn default_s0() -> f64 {
        2.0
    }
    fn default_b() -> f64 {
        3.0
    }
    fn default_delta() -> f64 {
        4.0
    }

    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            v0: Self::default_v0(),
            t_headway: Self::default_t(),
            s0: Self::default_s0(),
            b: Self::default_b(),
            delta: Self::default_delta(),
        }
    }

    fn speed_term(&self, v: f64) -> f64 {
        let r = v / self.v0;
        if self.delta == 4.0 {
            let r2 = r * r;
            r2 * r2
        } else {
            r.powf(self.delta)
        }
    }
}

impl Default for IdmParams {
    fn default() -> Self {
        Self::with_alpha(2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FvdmParams {
    #[serde(default = "FvdmParams::default_kappa")]
    pub kappa: f64,
    #[serde(default = "FvdmParams::default_lambda")]
    pub lambda: f64,
    pub a_min: f64,
    #[serde(default = "FvdmParams::default_v_max")]
    pub v_max: f64,
    /// Gap at the inflection of the optimal-velocity curve, m.
    #[serde(default = "FvdmParams::default_s_c")]
    pub s_c: f64,
    /// Width of the optimal-velocity transition, m.
    #[serde(default = "FvdmParams::default_w")]
    pub w: f64,
}

impl FvdmParams {
    fn default_kappa() -> f64 {
        0.41
    }
    fn default_lambda() -> f64 {
        0.5
    }
    fn default_v_max() -> f64 {
        33.3
    }
    fn default_s_c() -> f64 {
        15.0
    }
    fn default_w() -> f64 {
        8.0
    }

    pub fn with_floor(a_min: f64) -> Self {
        Self {
            kappa: Self::default_kappa(),
            lambda: Self::default_lambda(),
            a_min,
            v_max: Self::default_v_max(),
            s_c: Self::default_s_c(),
            w: Self::default_w(),
        }
    }

    pub fn optimal_velocity(&self, gap: f64) -> f64 {
        0.5 * self.v_max * (((gap - self.s_c) / self.w).tanh() + (self.s_c / self.w).tanh())
    }

    fn free_velocity(&self) -> f64 {
        0.5 * self.v_max * (1.0 + (self.s_c / self.w).tanh())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum DriverParams {
    Idm(IdmParams),
    Fvdm(FvdmParams),
}

fn clamp_global(a: f64) -> f64 {
    a.clamp(GLOBAL_ACCEL_MIN, GLOBAL_ACCEL_MAX)
}

pub fn idm_acceleration(p: &IdmParams, v: f64, gap: f64, approach_rate: f64) -> Result<f64> {
    if gap <= 0.0 {
        return Err(Error::Overlap { gap });
    }
    let s_star = p.s0 + v * p.t_headway + v * approach_rate / (2.0 * (p.alpha * p.b).sqrt());
    let ratio = s_star / gap;
    Ok(clamp_global(p.alpha * (1.0 - p.speed_term(v) - ratio * ratio)))
}

pub fn fvdm_acceleration(p: &FvdmParams, v: f64, gap: f64, approach_rate: f64) -> Result<f64> {
    if gap <= 0.0 {
        return Err(Error::Overlap { gap });
    }
    let a = p.kappa * (p.optimal_velocity(gap) - v) - p.lambda * approach_rate;
    Ok(clamp_global(a.max(p.a_min)))
}

impl DriverParams {
    pub fn idm(alpha: f64) -> Self {
        DriverParams::Idm(IdmParams::with_alpha(alpha))
    }

    pub fn fvdm(a_min: f64) -> Self {
        DriverParams::Fvdm(FvdmParams::with_floor(a_min))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidModel(what.to_string()));
        match self {
            DriverParams::Idm(p) => {
                if !(p.alpha > 0.0) {
                    return bad("IDM alpha must be positive");
                }
                if !(p.v0 > 0.0) {
                    return bad("IDM v0 must be positive");
                }
                if !(p.t_headway >= 0.0) || !(p.s0 >= 0.0) {
                    return bad("IDM headway and jam distance must be nonnegative");
                }
                if !(p.b > 0.0) || !(p.delta > 0.0) {
                    return bad("IDM b and delta must be positive");
                }
            }
            DriverParams::Fvdm(p) => {
                if !(p.a_min < 0.0) {
                    return bad("FVDM a_min must be negative");
                }
                if !(p.w > 0.0) || !(p.v_max > 0.0) || !(p.kappa >= 0.0) || !(p.lambda >= 0.0) {
                    return bad("FVDM gains, v_max and width must be nonnegative (v_max, width positive)");
                }
            }
        }
        Ok(())
    }

    /// Acceleration when following a vehicle `gap` metres ahead, closing at `approach_rate`.
    pub fn following(&self, v: f64, gap: f64, approach_rate: f64) -> Result<f64> {
        match self {
            DriverParams::Idm(p) => idm_acceleration(p, v, gap, approach_rate),
            DriverParams::Fvdm(p) => fvdm_acceleration(p, v, gap, approach_rate),
        }
    }

    /// Acceleration with no vehicle ahead.
    pub fn free(&self, v: f64) -> f64 {
        match self {
            DriverParams::Idm(p) => clamp_global(p.alpha * (1.0 - p.speed_term(v))),
            DriverParams::Fvdm(p) => clamp_global((p.kappa * (p.free_velocity() - v)).max(p.a_min)),
        }
    }
}
