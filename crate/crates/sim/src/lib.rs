//! Overtaking-scenario simulator for rare-event testing of an automated vehicle.
//!
//! A background vehicle (BV) drives in the left lane behind a leading vehicle
//! and may cut in front of the AV in the right lane. In the naturalistic
//! environment the BV follows table-driven human behavior; in the adversarial
//! environment its actions are importance-sampled at critical moments and the
//! likelihood entries of those moments are recorded for the estimators in
//! `avscv-core`.

pub mod driver;
pub mod episode;
pub mod error;
pub mod nade;
pub mod ndd;
pub mod state;

pub use driver::{fvdm_acceleration, idm_acceleration, DriverParams, FvdmParams, IdmParams};
pub use episode::{episode_rng, run_nde_episode, write_trajectory_csv, EpisodeConfig, EpisodeResult, LvPolicy, TraceRow};
pub use error::{Error, Result};
pub use nade::{
    criticality, default_surrogates, importance_distribution, maneuver_challenge, run_nade_episode, ChallengeCache, ImportanceDistribution,
    NadeConfig, SurrogateSpec,
};
pub use ndd::{ActionDistribution, NddModel, SyntheticNdd};
pub use state::{step_dynamics, BvAction, Lane, OvertakingState};
