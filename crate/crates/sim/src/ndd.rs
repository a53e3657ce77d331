//! Naturalistic behavior model of the background vehicle.
//!
//! All distributions are stored as tables so that a model fitted to real
//! driving data can be dropped in through [`NddModel::load`]. Conditional
//! tables are indexed by binned state variables: an axis lists its interior
//! cut points, so `k` cuts give `k + 1` bins and values beyond the outer cuts
//! fall into the end bins.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{BvAction, Lane, OvertakingState};

const SUM_TOL: f64 = 1e-9;

/// Initial range to the AV, m.
pub const INITIAL_R2: (f64, f64) = (20.0, 100.0);
/// Initial range rate to the AV, m/s.
pub const INITIAL_R2_DOT: (f64, f64) = (-10.0, -5.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelGrid {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Default for AccelGrid {
    fn default() -> Self {
        Self { min: -4.0, max: 2.0, n: 31 }
    }
}

impl AccelGrid {
    pub fn value(&self, i: usize) -> f64 {
        if self.n == 1 {
            self.min
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.n - 1) as f64
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i)).collect()
    }
}

/// Histogram over `[edges[0], edges[n]]` with `n` bins; sampling is uniform within a bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Histogram {
    fn validate(&self, name: &str) -> Result<()> {
        if self.edges.len() != self.probs.len() + 1 || self.probs.is_empty() {
            return Err(Error::InvalidModel(format!("{name}: need one more edge than bins")));
        }
        if self.edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidModel(format!("{name}: edges must increase")));
        }
        check_distribution(&self.probs, name)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let i = sample_index(&self.probs, rng.random::<f64>());
        let (lo, hi) = (self.edges[i], self.edges[i + 1]);
        lo + (hi - lo) * rng.random::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(i, p)| p * 0.5 * (self.edges[i] + self.edges[i + 1])).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub cuts: Vec<f64>,
}

impl Axis {
    pub fn num_bins(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn bin(&self, x: f64) -> usize {
        self.cuts.partition_point(|&c| c <= x)
    }

    /// Representative value of a bin: the midpoint, or the outer cut for end bins.
    pub fn center(&self, i: usize) -> f64 {
        let c = &self.cuts;
        match (i, c.len()) {
            (_, 0) => 0.0,
            (0, _) => c[0],
            (i, n) if i == n => c[n - 1],
            (i, _) => 0.5 * (c[i - 1] + c[i]),
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.cuts.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidModel(format!("{name}: cuts must increase")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialTable {
    pub v_bv: Histogram,
    pub r1: Histogram,
    pub r1_dot: Histogram,
}

/// Acceleration distribution of the BV following the LV, by `(r1, r1_dot)` bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarFollowingTable {
    pub r1: Axis,
    pub r1_dot: Axis,
    /// `[r1 bin][r1_dot bin][grid index]`.
    pub probs: Vec<Vec<Vec<f64>>>,
}

/// Acceleration distribution of the BV with no vehicle ahead, by speed bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeDrivingTable {
    pub v_bv: Axis,
    /// `[v bin][grid index]`.
    pub probs: Vec<Vec<f64>>,
}

/// Per-step cut-in probability by `(r2, r2_dot)` bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutInTable {
    pub r2: Axis,
    pub r2_dot: Axis,
    /// `[r2 bin][r2_dot bin]`.
    pub probs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NddModel {
    pub accel_grid: AccelGrid,
    pub initial: InitialTable,
    pub car_following: CarFollowingTable,
    pub free_driving: FreeDrivingTable,
    pub cut_in: CutInTable,
}

/// `p(a|s)` over the acceleration grid followed by the cut-in action.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub probs: Vec<f64>,
}

impl ActionDistribution {
    pub fn num_actions(&self) -> usize {
        self.probs.len()
    }

    pub fn cut_in_index(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn cut_in_prob(&self) -> f64 {
        self.probs[self.cut_in_index()]
    }

    pub fn action(&self, i: usize, grid: &AccelGrid) -> BvAction {
        if i == self.cut_in_index() {
            BvAction::CutIn
        } else {
            BvAction::Accelerate(grid.value(i))
        }
    }
}

/// Inverse-CDF draw: the first index whose cumulative probability exceeds `u * total`.
pub fn sample_index(probs: &[f64], u: f64) -> usize {
    let total: f64 = probs.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if target < acc {
                return i;
            }
        }
    }
    last_positive
}

fn check_distribution(p: &[f64], name: &str) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidModel(format!("{name}: negative or non-finite probability")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidModel(format!("{name}: probabilities sum to {s}, not 1")));
    }
    Ok(())
}

impl NddModel {
    pub fn validate(&self) -> Result<()> {
        let n = self.accel_grid.n;
        if n == 0 || !(self.accel_grid.min <= self.accel_grid.max) {
            return Err(Error::InvalidModel("acceleration grid is empty".into()));
        }
        self.initial.v_bv.validate("initial.v_bv")?;
        self.initial.r1.validate("initial.r1")?;
        self.initial.r1_dot.validate("initial.r1_dot")?;

        let cf = &self.car_following;
        cf.r1.validate("car_following.r1")?;
        cf.r1_dot.validate("car_following.r1_dot")?;
        if cf.probs.len() != cf.r1.num_bins() || cf.probs.iter().any(|row| row.len() != cf.r1_dot.num_bins()) {
            return Err(Error::InvalidModel("car_following: table shape does not match its axes".into()));
        }
        for (i, row) in cf.probs.iter().enumerate() {
            for (k, p) in row.iter().enumerate() {
                if p.len() != n {
                    return Err(Error::InvalidModel(format!("car_following[{i}][{k}]: expected {n} probabilities")));
                }
                check_distribution(p, &format!("car_following[{i}][{k}]"))?;
            }
        }

        let fd = &self.free_driving;
        fd.v_bv.validate("free_driving.v_bv")?;
        if fd.probs.len() != fd.v_bv.num_bins() {
            return Err(Error::InvalidModel("free_driving: table shape does not match its axis".into()));
        }
        for (i, p) in fd.probs.iter().enumerate() {
            if p.len() != n {
                return Err(Error::InvalidModel(format!("free_driving[{i}]: expected {n} probabilities")));
            }
            check_distribution(p, &format!("free_driving[{i}]"))?;
        }

        let ci = &self.cut_in;
        ci.r2.validate("cut_in.r2")?;
        ci.r2_dot.validate("cut_in.r2_dot")?;
        if ci.probs.len() != ci.r2.num_bins() || ci.probs.iter().any(|row| row.len() != ci.r2_dot.num_bins()) {
            return Err(Error::InvalidModel("cut_in: table shape does not match its axes".into()));
        }
        if ci.probs.iter().flatten().any(|p| !(0.0..1.0).contains(p)) {
            return Err(Error::InvalidModel("cut_in: probabilities must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        let m: Self = serde_json::from_str(&text).map_err(|source| Error::Parse { path: path.display().to_string(), source })?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("model serializes");
        std::fs::write(path, text).map_err(|source| Error::Io { path: path.display().to_string(), source })
    }

    pub fn num_actions(&self) -> usize {
        self.accel_grid.n + 1
    }

    pub fn sample_initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> OvertakingState {
        let v_bv = self.initial.v_bv.sample(rng);
        let r1 = self.initial.r1.sample(rng);
        let r1_dot = self.initial.r1_dot.sample(rng);
        let r2 = rng.random_range(INITIAL_R2.0..INITIAL_R2.1);
        let r2_dot = rng.random_range(INITIAL_R2_DOT.0..INITIAL_R2_DOT.1);
        OvertakingState { v_bv, r1, r1_dot, r2, r2_dot, bv_lane: Lane::Left, t: 0 }
    }

    pub fn cut_in_probability(&self, s: &OvertakingState) -> f64 {
        if !s.cut_in_feasible() {
            return 0.0;
        }
        let t = &self.cut_in;
        t.probs[t.r2.bin(s.r2)][t.r2_dot.bin(s.r2_dot)]
    }

    /// `p(a|s)`: car-following accelerations (scaled by the probability of
    /// staying in lane) and cut-in before the lane change, free driving after.
    pub fn action_distribution(&self, s: &OvertakingState) -> ActionDistribution {
        let mut probs = Vec::with_capacity(self.num_actions());
        match s.bv_lane {
            Lane::Left => {
                let cf = &self.car_following;
                let accel = &cf.probs[cf.r1.bin(s.r1)][cf.r1_dot.bin(s.r1_dot)];
                let p_cut = self.cut_in_probability(s);
                let stay = 1.0 - p_cut;
                probs.extend(accel.iter().map(|p| p * stay));
                probs.push(p_cut);
            }
            Lane::Right => {
                let fd = &self.free_driving;
                probs.extend_from_slice(&fd.probs[fd.v_bv.bin(s.v_bv)]);
                probs.push(0.0);
            }
        }
        ActionDistribution { probs }
    }

    pub fn synthetic(params: &SyntheticNdd) -> Self {
        params.build()
    }
}

/// Parameters of the synthetic behavior model used when no fitted tables are available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticNdd {
    pub accel_grid: AccelGrid,
    /// Spread of the discretized acceleration distributions, m/s^2.
    pub accel_sd: f64,
    /// Cut-in probability per step when the AV is not closing in.
    pub cut_in_base: f64,
    /// Growth of the cut-in probability with urgency (inverse time-to-collision, 1/s).
    pub cut_in_urgency_gain: f64,
    pub cut_in_max: f64,
    /// Urgency saturates below this range (m).
    pub cut_in_min_range: f64,
}

impl Default for SyntheticNdd {
    fn default() -> Self {
        Self {
            accel_grid: AccelGrid::default(),
            accel_sd: 0.6,
            cut_in_base: 2.0e-6,
            cut_in_urgency_gain: 20.0,
            cut_in_max: 0.05,
            cut_in_min_range: 5.0,
        }
    }
}

fn gaussian_histogram(lo: f64, hi: f64, width: f64, mean: f64, sd: f64) -> Histogram {
    let n = ((hi - lo) / width).round() as usize;
    let edges: Vec<f64> = (0..=n).map(|i| lo + width * i as f64).collect();
    let w: Vec<f64> = (0..n)
        .map(|i| {
            let c = 0.5 * (edges[i] + edges[i + 1]);
            (-0.5 * ((c - mean) / sd).powi(2)).exp()
        })
        .collect();
    Histogram { edges, probs: normalize(w) }
}

fn normalize(w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn discretized_gaussian(grid: &[f64], mean: f64, sd: f64) -> Vec<f64> {
    // Floor keeps every action possible, as in smoothed empirical tables.
    normalize(grid.iter().map(|a| (-0.5 * ((a - mean) / sd).powi(2)).exp() + 1e-6).collect())
}

fn range(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

impl SyntheticNdd {
    pub fn build(&self) -> NddModel {
        let grid = self.accel_grid.values();
        let initial = InitialTable {
            v_bv: gaussian_histogram(10.0, 40.0, 1.0, 30.0, 4.0),
            r1: gaussian_histogram(5.0, 100.0, 2.5, 30.0, 15.0),
            r1_dot: gaussian_histogram(-6.0, 6.0, 0.5, 0.0, 2.0),
        };

        // Following the LV: close the gap towards ~30 m and match its speed.
        let r1 = Axis { cuts: range(5.0, 100.0, 5.0) };
        let r1_dot = Axis { cuts: range(-5.0, 5.0, 1.0) };
        let car_following = CarFollowingTable {
            probs: (0..r1.num_bins())
                .map(|i| {
                    (0..r1_dot.num_bins())
                        .map(|k| {
                            let mean = (0.04 * (r1.center(i) - 30.0) + 0.35 * r1_dot.center(k)).clamp(-3.0, 1.5);
                            discretized_gaussian(&grid, mean, self.accel_sd)
                        })
                        .collect()
                })
                .collect(),
            r1,
            r1_dot,
        };

        let v_bv = Axis { cuts: range(10.0, 40.0, 2.0) };
        let free_driving = FreeDrivingTable {
            probs: (0..v_bv.num_bins())
                .map(|i| discretized_gaussian(&grid, (0.15 * (30.0 - v_bv.center(i))).clamp(-2.0, 1.5), self.accel_sd))
                .collect(),
            v_bv,
        };

        // Cut-ins become more likely the sooner the AV would reach the BV.
        let r2 = Axis { cuts: range(0.0, 100.0, 2.5) };
        let r2_dot = Axis { cuts: range(-15.0, 5.0, 1.0) };
        let cut_in = CutInTable {
            probs: (0..r2.num_bins())
                .map(|i| {
                    (0..r2_dot.num_bins())
                        .map(|k| {
                            let range = r2.center(i);
                            let closing = (-r2_dot.center(k)).max(0.0);
                            let urgency = closing / range.max(self.cut_in_min_range);
                            (self.cut_in_base * (1.0 + self.cut_in_urgency_gain * urgency)).min(self.cut_in_max)
                        })
                        .collect()
                })
                .collect(),
            r2,
            r2_dot,
        };

        NddModel { accel_grid: self.accel_grid.clone(), initial, car_following, free_driving, cut_in }
    }
}
