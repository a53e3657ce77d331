//! Variance-reduced estimation of rare-event rates from scenario-based tests.
//!
//! The crate is organised around [`TestRecord`], the minimal per-test
//! bookkeeping needed by every estimator: the crash probability observed for
//! the test and, for every critical (importance-sampled) step, the
//! naturalistic probability, the mixture probability and each individual
//! importance-function probability of the chosen action.
//!
//! * [`estimate`] holds the plain estimators (crude Monte Carlo, importance
//!   weighting, ordinary control variates), relative half-width and the
//!   required-number-of-tests / bootstrap machinery.
//! * [`regression`] fits multiple linear regressions through an SVD with a
//!   minimum-norm solution for rank-deficient designs.
//! * [`scv`] implements the stratified sparse-control-variates estimator.
//! * [`toy`] provides fully enumerable worlds used as exact oracles.

pub mod error;
pub mod estimate;
pub mod record;
pub mod regression;
pub mod scv;
pub mod stats;
pub mod toy;

pub use error::{Error, Result};
pub use estimate::{
    bootstrap_rnot, crude_monte_carlo, importance_weighted_estimate, ordinary_cv_estimate, relative_half_width, required_num_tests,
    BootstrapConfig, BootstrapReport, EstimateReport, Estimator,
};
pub use record::{CriticalStepRecord, TestRecord};
pub use regression::{fit_mlr_svd, RegressionFit};
pub use scv::{estimate_stratum, scv_design_row, scv_estimate, stratify, ScvReport, StratifiedBatch, StratumFit};
