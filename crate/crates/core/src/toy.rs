//! Enumerable toy worlds with exact oracles.
//!
//! A world is a finite list of outcomes. Each outcome carries a probability
//! factor shared by every sampler (`rest`, the product over its non-critical
//! variables), a crash probability, and its critical steps. A step holds the
//! naturalistic probability of the chosen value and the probability of the
//! same value under each importance component. So for outcome `x`
//!
//! ```text
//! p(x)   = rest * prod_l p_l
//! q_j(x) = rest * prod_l q_{j,l}
//! q_a(x) = rest * prod_l sum_j alpha_j q_{j,l}
//! ```
//!
//! and `l(x)` is simply the number of steps. Every quantity below (crash
//! rate, estimator variance, optimal control vector, the variance bounds) is
//! computed by summing over all outcomes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{CriticalStepRecord, TestRecord};
use crate::regression::{min_norm_solve, DEFAULT_REL_TOL};

/// Normalization tolerance for `p` and each `q_j`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyStep {
    pub p: f64,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyOutcome {
    #[serde(default = "one")]
    pub rest: f64,
    pub crash_prob: f64,
    #[serde(default)]
    pub steps: Vec<ToyStep>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyWorld {
    pub alpha: Vec<f64>,
    pub outcomes: Vec<ToyOutcome>,
}

/// Which tuples of component indices form the stratified control columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnSet {
    /// Tuples over the first `J - 1` components, `(J-1)^l` columns per stratum.
    Reduced,
    /// Tuples over all `J` components, `J^l` columns per stratum.
    Full,
}

/// Estimator whose single-draw contribution is evaluated exactly.
#[derive(Debug, Clone, PartialEq)]
pub enum ToyEstimator {
    PlainIs,
    /// Control vector over `q_j/q_a - 1`, `j < J - 1`.
    OrdinaryCv(Vec<f64>),
    /// One control vector per stratum `l = 1..=L` (entry 0 is unused).
    Scv {
        columns: ColumnSet,
        beta: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaKind {
    Ordinary,
    Stratified(ColumnSet),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalBeta {
    pub estimator: ToyEstimator,
    /// Set when every control column is constant, in which case beta is zero.
    pub degenerate: bool,
}

impl ToyOutcome {
    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn p(&self) -> f64 {
        self.rest * self.steps.iter().map(|s| s.p).product::<f64>()
    }

    pub fn q(&self, j: usize) -> f64 {
        self.rest * self.steps.iter().map(|s| s.q[j]).product::<f64>()
    }

    pub fn q_tuple(&self, tuple: &[usize]) -> f64 {
        self.rest * self.steps.iter().zip(tuple).map(|(s, &j)| s.q[j]).product::<f64>()
    }

    fn step_mixture(step: &ToyStep, alpha: &[f64]) -> f64 {
        step.q.iter().zip(alpha).map(|(q, a)| q * a).sum()
    }

    pub fn q_alpha(&self, alpha: &[f64]) -> f64 {
        self.rest * self.steps.iter().map(|s| Self::step_mixture(s, alpha)).product::<f64>()
    }

    /// `P(A|x) p(x)`.
    pub fn crash_mass(&self) -> f64 {
        if self.crash_prob == 0.0 {
            0.0
        } else {
            self.crash_prob * self.p()
        }
    }

    /// `P(A|x) p(x) / q_a(x)`; the shared `rest` factor cancels.
    fn weighted_outcome(&self, alpha: &[f64]) -> f64 {
        if self.crash_prob == 0.0 {
            return 0.0;
        }
        self.crash_prob * self.steps.iter().map(|s| s.p / Self::step_mixture(s, alpha)).product::<f64>()
    }

    /// `q_t(x) / q_a(x)` for a tuple of the outcome's own length.
    fn tuple_ratio(&self, tuple: &[usize], alpha: &[f64]) -> f64 {
        self.steps.iter().zip(tuple).map(|(s, &j)| s.q[j] / Self::step_mixture(s, alpha)).product()
    }

    fn component_ratio(&self, j: usize, alpha: &[f64]) -> f64 {
        self.steps.iter().map(|s| s.q[j] / Self::step_mixture(s, alpha)).product()
    }
}

/// All tuples of length `l` over `0..k`, first position varying slowest.
pub fn tuples(l: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..l {
        let mut next = Vec::with_capacity(out.len() * k);
        for t in &out {
            for j in 0..k {
                let mut u = t.clone();
                u.push(j);
                next.push(u);
            }
        }
        out = next;
    }
    out
}

impl ToyWorld {
    pub fn num_components(&self) -> usize {
        self.alpha.len()
    }

    pub fn max_steps(&self) -> usize {
        self.outcomes.iter().map(|o| o.num_steps()).max().unwrap_or(0)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let w: Self = serde_json::from_str(text).map_err(|e| Error::InvalidWorld(e.to_string()))?;
        w.validate()?;
        Ok(w)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("toy world serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.num_components();
        if j == 0 {
            return Err(Error::InvalidWorld("alpha is empty".into()));
        }
        if self.alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::InvalidWorld("alpha has a negative or non-finite entry".into()));
        }
        if (self.alpha.iter().sum::<f64>() - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidWorld("alpha does not sum to 1".into()));
        }
        if self.outcomes.is_empty() {
            return Err(Error::InvalidWorld("no outcomes".into()));
        }
        for (i, o) in self.outcomes.iter().enumerate() {
            if !(0.0..=1.0).contains(&o.crash_prob) {
                return Err(Error::InvalidWorld(format!("outcome {i}: crash probability {} outside [0, 1]", o.crash_prob)));
            }
            if !(o.rest.is_finite() && o.rest >= 0.0) {
                return Err(Error::InvalidWorld(format!("outcome {i}: invalid probability factor {}", o.rest)));
            }
            for (s, step) in o.steps.iter().enumerate() {
                if step.q.len() != j {
                    return Err(Error::InvalidWorld(format!(
                        "outcome {i} step {s}: {} component probabilities, expected {j}",
                        step.q.len()
                    )));
                }
                let bad = |v: f64| !(0.0..=1.0).contains(&v);
                if bad(step.p) || step.q.iter().any(|&v| bad(v)) {
                    return Err(Error::InvalidWorld(format!("outcome {i} step {s}: probability outside [0, 1]")));
                }
            }
        }
        let sum_p: f64 = self.outcomes.iter().map(|o| o.p()).sum();
        if (sum_p - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidWorld(format!("p does not sum to 1 (sum = {sum_p})")));
        }
        for c in 0..j {
            let s: f64 = self.outcomes.iter().map(|o| o.q(c)).sum();
            if (s - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::InvalidWorld(format!("q_{} does not sum to 1 (sum = {s})", c + 1)));
            }
        }
        self.check_support()
    }

    /// `q_a(x) > 0` wherever `P(A|x) p(x) > 0`.
    pub fn check_support(&self) -> Result<()> {
        for (i, o) in self.outcomes.iter().enumerate() {
            if o.crash_mass() > 0.0 && o.q_alpha(&self.alpha) <= 0.0 {
                return Err(Error::InvalidWorld(format!("support violation at outcome {i}: q_alpha = 0 where P(A|x)p(x) > 0")));
            }
        }
        Ok(())
    }

    /// Control rows for every outcome: one entry per column, mean zero under `q_a`.
    fn control_matrix(&self, kind: BetaKind) -> DMatrix<f64> {
        let alpha = &self.alpha;
        let j = self.num_components();
        match kind {
            BetaKind::Ordinary => {
                let d = j - 1;
                DMatrix::from_fn(self.outcomes.len(), d, |i, c| self.outcomes[i].component_ratio(c, alpha) - 1.0)
            }
            BetaKind::Stratified(cols) => {
                let k = match cols {
                    ColumnSet::Reduced => j - 1,
                    ColumnSet::Full => j,
                };
                let big_l = self.max_steps();
                let mut blocks: Vec<(usize, Vec<usize>, f64)> = Vec::new();
                for l in 1..=big_l {
                    for t in tuples(l, k) {
                        let theta: f64 = self.outcomes.iter().filter(|o| o.num_steps() == l).map(|o| o.q_tuple(&t)).sum();
                        blocks.push((l, t, theta));
                    }
                }
                DMatrix::from_fn(self.outcomes.len(), blocks.len(), |i, c| {
                    let (l, t, theta) = &blocks[c];
                    let o = &self.outcomes[i];
                    let r = if o.num_steps() == *l { o.tuple_ratio(t, alpha) } else { 0.0 };
                    r - theta
                })
            }
        }
    }

    fn columns_per_stratum(&self, cols: ColumnSet) -> Vec<usize> {
        let j = self.num_components();
        let k = match cols {
            ColumnSet::Reduced => j - 1,
            ColumnSet::Full => j,
        };
        (0..=self.max_steps()).map(|l| if l == 0 { 0 } else { k.pow(l as u32) }).collect()
    }

    fn flat_beta(&self, est: &ToyEstimator) -> Result<(Option<BetaKind>, Vec<f64>)> {
        match est {
            ToyEstimator::PlainIs => Ok((None, vec![])),
            ToyEstimator::OrdinaryCv(b) => {
                let d = self.num_components() - 1;
                if b.len() != d {
                    return Err(Error::BetaLength { expected: d, got: b.len() });
                }
                Ok((Some(BetaKind::Ordinary), b.clone()))
            }
            ToyEstimator::Scv { columns, beta } => {
                let dims = self.columns_per_stratum(*columns);
                let mut flat = Vec::new();
                for (l, &d) in dims.iter().enumerate().skip(1) {
                    match beta.get(l) {
                        Some(b) if b.len() == d => flat.extend_from_slice(b),
                        Some(b) => return Err(Error::BetaLength { expected: d, got: b.len() }),
                        None => flat.extend(std::iter::repeat(0.0).take(d)),
                    }
                }
                Ok((Some(BetaKind::Stratified(*columns)), flat))
            }
        }
    }

    /// Single-draw contribution of every outcome together with its `q_a` mass.
    pub fn contributions(&self, est: &ToyEstimator) -> Result<Vec<(f64, f64)>> {
        self.check_support()?;
        let (kind, beta) = self.flat_beta(est)?;
        let g = kind.map(|k| self.control_matrix(k));
        Ok(self
            .outcomes
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let w = o.q_alpha(&self.alpha);
                if w <= 0.0 {
                    return (w, 0.0);
                }
                let mut c = o.weighted_outcome(&self.alpha);
                if let Some(g) = &g {
                    c -= g.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
                }
                (w, c)
            })
            .collect())
    }

    /// Exact expectation of the single-draw contribution under `q_a`.
    pub fn expected_contribution(&self, est: &ToyEstimator) -> Result<f64> {
        Ok(self.contributions(est)?.iter().map(|(w, c)| w * c).sum())
    }

    /// `mu_l`, the crash mass of each stratum.
    pub fn stratum_rates(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.max_steps() + 1];
        for o in &self.outcomes {
            mu[o.num_steps()] += o.crash_mass();
        }
        mu
    }
}

pub fn exact_crash_rate(world: &ToyWorld) -> f64 {
    world.outcomes.iter().map(|o| o.crash_mass()).sum()
}

/// `sum_x q_a(x) (c(x) - mu)^2` over the outcomes sampled by `q_a`.
pub fn exact_estimator_variance(world: &ToyWorld, est: &ToyEstimator) -> Result<f64> {
    let mu = exact_crash_rate(world);
    Ok(world.contributions(est)?.iter().filter(|(w, _)| *w > 0.0).map(|(w, c)| w * (c - mu) * (c - mu)).sum())
}

/// Exact weighted least squares of the weighted outcome on the control columns.
pub fn optimal_beta_exact(world: &ToyWorld, kind: BetaKind) -> Result<OptimalBeta> {
    world.check_support()?;
    let g = world.control_matrix(kind);
    let mu = exact_crash_rate(world);
    let alpha = &world.alpha;
    let rows: Vec<usize> = (0..world.outcomes.len()).filter(|&i| world.outcomes[i].q_alpha(alpha) > 0.0).collect();
    let d = g.ncols();
    let a = DMatrix::from_fn(rows.len(), d, |r, c| world.outcomes[rows[r]].q_alpha(alpha).sqrt() * g[(rows[r], c)]);
    let b = DVector::from_iterator(
        rows.len(),
        rows.iter().map(|&i| {
            let o = &world.outcomes[i];
            o.q_alpha(alpha).sqrt() * (o.weighted_outcome(alpha) - mu)
        }),
    );
    let (flat, rank) = if d == 0 { (DVector::zeros(0), 0) } else { min_norm_solve(a, &b, DEFAULT_REL_TOL, 0.0)? };
    let flat = flat.as_slice().to_vec();
    let estimator = match kind {
        BetaKind::Ordinary => ToyEstimator::OrdinaryCv(flat),
        BetaKind::Stratified(columns) => {
            let dims = world.columns_per_stratum(columns);
            let mut beta = vec![Vec::new()];
            let mut at = 0;
            for &dl in &dims[1..] {
                beta.push(flat[at..at + dl].to_vec());
                at += dl;
            }
            ToyEstimator::Scv { columns, beta }
        }
    };
    Ok(OptimalBeta { estimator, degenerate: rank == 0 })
}

/// `sum_{x in S} q(x) (P(A|x)p(x)/q(x) - m)^2`; infinite when `q` misses crash mass in `S`.
fn restricted_variance<'a>(outcomes: impl Iterator<Item = &'a ToyOutcome>, q: impl Fn(&ToyOutcome) -> f64, m: f64) -> f64 {
    let mut v = 0.0;
    for o in outcomes {
        let qx = q(o);
        let f = o.crash_mass();
        if qx <= 0.0 {
            if f > 0.0 {
                return f64::INFINITY;
            }
            continue;
        }
        let d = f / qx - m;
        v += qx * d * d;
    }
    v
}

/// Variance of plain importance sampling from component `j` alone.
pub fn component_variance(world: &ToyWorld, j: usize) -> f64 {
    restricted_variance(world.outcomes.iter(), |o| o.q(j), exact_crash_rate(world))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl BoundCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, holds: lhs <= rhs + 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub mu: f64,
    /// Largest `|E[c] - mu|` over plain IS, the optimal ordinary CV and the optimal stratified CV.
    pub unbiasedness_error: f64,
    /// Only for worlds with at most one critical step per outcome.
    pub lemma1: Option<BoundCheck>,
    pub theorem2: BoundCheck,
    /// Variance at the optimal stratified beta with `(J-1)^l` columns, for comparison.
    pub reduced_stratified_variance: f64,
}

impl BoundsReport {
    pub fn holds(&self) -> bool {
        self.unbiasedness_error <= 1e-12 && self.lemma1.map_or(true, |b| b.holds) && self.theorem2.holds
    }
}

/// Variance of the optimal ordinary CV estimator against `min_j var(q_j)/alpha_j`.
pub fn lemma1_check(world: &ToyWorld) -> Result<BoundCheck> {
    let opt = optimal_beta_exact(world, BetaKind::Ordinary)?;
    let lhs = exact_estimator_variance(world, &opt.estimator)?;
    let rhs = (0..world.num_components())
        .filter(|&j| world.alpha[j] > 0.0)
        .map(|j| component_variance(world, j) / world.alpha[j])
        .fold(f64::INFINITY, f64::min);
    Ok(BoundCheck::new(lhs, rhs))
}

/// Variance of the optimal stratified CV estimator (all `J^l` tuple columns)
/// against `L' var(Z_0) + L' sum_l min_t { var_l(q_t)/prod alpha_t + 3 (mu_l / prod alpha_t)^2 }`.
pub fn theorem2_check(world: &ToyWorld) -> Result<BoundCheck> {
    let opt = optimal_beta_exact(world, BetaKind::Stratified(ColumnSet::Full))?;
    let lhs = exact_estimator_variance(world, &opt.estimator)?;
    let alpha = &world.alpha;
    let big_l = world.max_steps();
    let l_prime = (big_l + 1) as f64;
    let mu_l = world.stratum_rates();

    // Var_{q_a}(P(A|x) 1{l(x) = 0}); q_a = p on the zero-step stratum.
    let var0: f64 = world
        .outcomes
        .iter()
        .map(|o| {
            let z = if o.num_steps() == 0 { o.crash_prob } else { 0.0 };
            o.q_alpha(alpha) * (z - mu_l[0]).powi(2)
        })
        .sum();

    let mut rhs = l_prime * var0;
    for l in 1..=big_l {
        let mut best = f64::INFINITY;
        for t in tuples(l, world.num_components()) {
            let prod_alpha: f64 = t.iter().map(|&j| alpha[j]).product();
            if prod_alpha <= 0.0 {
                continue;
            }
            let v = restricted_variance(world.outcomes.iter().filter(|o| o.num_steps() == l), |o| o.q_tuple(&t), mu_l[l]);
            let term = v / prod_alpha + 3.0 * (mu_l[l] / prod_alpha).powi(2);
            best = best.min(term);
        }
        rhs += l_prime * best;
    }
    Ok(BoundCheck::new(lhs, rhs))
}

pub fn verify_bounds(world: &ToyWorld) -> Result<BoundsReport> {
    world.validate()?;
    let mu = exact_crash_rate(world);
    let ordinary = optimal_beta_exact(world, BetaKind::Ordinary)?;
    let full = optimal_beta_exact(world, BetaKind::Stratified(ColumnSet::Full))?;
    let reduced = optimal_beta_exact(world, BetaKind::Stratified(ColumnSet::Reduced))?;
    let mut err: f64 = 0.0;
    for est in [&ToyEstimator::PlainIs, &ordinary.estimator, &full.estimator, &reduced.estimator] {
        err = err.max((world.expected_contribution(est)? - mu).abs());
    }
    let lemma1 = if world.max_steps() <= 1 { Some(lemma1_check(world)?) } else { None };
    Ok(BoundsReport {
        mu,
        unbiasedness_error: err,
        lemma1,
        theorem2: theorem2_check(world)?,
        reduced_stratified_variance: exact_estimator_variance(world, &reduced.estimator)?,
    })
}

/// Four outcomes with `p = (0.01, 0.09, 0.40, 0.50)`, a sure crash on the
/// first and none elsewhere; `q_1` is the zero-variance importance function
/// and `q_2 = p`, mixed half and half.
pub fn canonical_world() -> ToyWorld {
    let p = [0.01, 0.09, 0.40, 0.50];
    let q1 = [1.0, 0.0, 0.0, 0.0];
    ToyWorld {
        alpha: vec![0.5, 0.5],
        outcomes: (0..4)
            .map(|i| ToyOutcome {
                rest: 1.0,
                crash_prob: if i == 0 { 1.0 } else { 0.0 },
                steps: vec![ToyStep { p: p[i], q: vec![q1[i], p[i]] }],
            })
            .collect(),
    }
}

fn random_distribution<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    // Exponential spacings give a flat Dirichlet draw.
    let w: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-3).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

/// Shape of a random tree world.
#[derive(Debug, Clone, Copy)]
pub struct TreeShape {
    pub components: usize,
    pub depth: usize,
    pub branching: usize,
    /// Probability that an inner node is a critical variable.
    pub critical_prob: f64,
    /// Upper bound on critical variables along any path.
    pub max_critical: usize,
    /// Probability that a leaf can crash at all.
    pub crash_leaf_prob: f64,
}

/// World generated as a random probability tree, which makes `p` and every
/// `q_j` normalize by construction. Non-critical nodes multiply into `rest`;
/// critical nodes add a step with independent random component distributions.
pub fn random_tree_world<R: Rng + ?Sized>(shape: TreeShape, rng: &mut R) -> ToyWorld {
    assert!(shape.components >= 2 && shape.branching >= 2);
    let alpha = random_distribution(shape.components, rng);
    let mut outcomes = Vec::new();
    grow(&shape, 0, 1.0, Vec::new(), rng, &mut outcomes);
    ToyWorld { alpha, outcomes }
}

fn grow<R: Rng + ?Sized>(shape: &TreeShape, depth: usize, rest: f64, steps: Vec<ToyStep>, rng: &mut R, out: &mut Vec<ToyOutcome>) {
    if depth == shape.depth {
        let crash_prob = if rng.random::<f64>() < shape.crash_leaf_prob { rng.random_range(0.05..1.0) } else { 0.0 };
        out.push(ToyOutcome { rest, crash_prob, steps });
        return;
    }
    let k = shape.branching;
    let p = random_distribution(k, rng);
    let critical = steps.len() < shape.max_critical && rng.random::<f64>() < shape.critical_prob;
    if critical {
        let qs: Vec<Vec<f64>> = (0..shape.components).map(|_| random_distribution(k, rng)).collect();
        for c in 0..k {
            let mut s = steps.clone();
            s.push(ToyStep { p: p[c], q: qs.iter().map(|q| q[c]).collect() });
            grow(shape, depth + 1, rest, s, rng, out);
        }
    } else {
        for c in 0..k {
            grow(shape, depth + 1, rest * p[c], steps.clone(), rng, out);
        }
    }
}

/// World with at most one critical step per outcome, as used for the
/// ordinary control-variate bound.
pub fn random_mixture_world<R: Rng + ?Sized>(components: usize, rng: &mut R) -> ToyWorld {
    random_tree_world(TreeShape { components, depth: 3, branching: 3, critical_prob: 0.6, max_critical: 1, crash_leaf_prob: 0.3 }, rng)
}

/// World with up to `max_steps` critical steps per outcome.
pub fn random_stratified_world<R: Rng + ?Sized>(components: usize, max_steps: usize, rng: &mut R) -> ToyWorld {
    random_tree_world(
        TreeShape { components, depth: max_steps + 1, branching: 3, critical_prob: 0.6, max_critical: max_steps, crash_leaf_prob: 0.3 },
        rng,
    )
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroVarianceSizes {
    pub crash_outcomes: usize,
    pub safe_outcomes: usize,
}

impl Default for ZeroVarianceSizes {
    fn default() -> Self {
        Self { crash_outcomes: 8, safe_outcomes: 4 }
    }
}

/// World in which one importance component is the zero-variance sampler of
/// the crash event and stratified control variates recover it exactly.
///
/// Every outcome is decided by its single critical variable, safe outcomes get
/// no mass from any component, and `q_1 = P(A|x) p(x) / mu`. The remaining
/// components are random distributions over the crash outcomes.
pub fn make_zero_variance_world<R: Rng + ?Sized>(components: usize, sizes: ZeroVarianceSizes, rng: &mut R) -> ToyWorld {
    assert!(components >= 2, "need at least two components");
    assert!(sizes.crash_outcomes >= 1);
    let nc = sizes.crash_outcomes;
    let n = nc + sizes.safe_outcomes;
    let p = random_distribution(n, rng);
    let crash: Vec<f64> = (0..n).map(|i| if i < nc { rng.random_range(0.3..1.0) } else { 0.0 }).collect();
    let mu: f64 = (0..n).map(|i| crash[i] * p[i]).sum();
    let mut qs = vec![(0..n).map(|i| crash[i] * p[i] / mu).collect::<Vec<f64>>()];
    for _ in 1..components {
        let mut q = random_distribution(nc, rng);
        q.resize(n, 0.0);
        qs.push(q);
    }
    let mut alpha = random_distribution(components, rng);
    alpha = normalized(&alpha.iter().map(|a| a + 0.1).collect::<Vec<_>>());
    ToyWorld {
        alpha,
        outcomes: (0..n)
            .map(|i| ToyOutcome { rest: 1.0, crash_prob: crash[i], steps: vec![ToyStep { p: p[i], q: qs.iter().map(|q| q[i]).collect() }] })
            .collect(),
    }
}

/// Scales component `j` at `outcome` by `factor` and renormalizes it. Only
/// valid for worlds where each outcome has a single step and `rest = 1`.
pub fn perturb_component(world: &ToyWorld, j: usize, outcome: usize, factor: f64) -> ToyWorld {
    let mut w = world.clone();
    w.outcomes[outcome].steps[0].q[j] *= factor;
    let s: f64 = w.outcomes.iter().map(|o| o.steps[0].q[j]).sum();
    for o in &mut w.outcomes {
        o.steps[0].q[j] /= s;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Outcomes without crash risk carry no `q_a` mass.
    pub safe_outcomes_unsampled: bool,
    /// Every `q_a`-supported outcome has exactly one critical step.
    pub single_critical_step: bool,
    /// The critical step alone determines the outcome, hence its crash probability.
    pub crash_determined_by_critical: bool,
    /// Some component equals `P(A|x) p(x) / mu`.
    pub optimal_component: bool,
}

impl AssumptionReport {
    pub fn all(&self) -> bool {
        self.safe_outcomes_unsampled && self.single_critical_step && self.crash_determined_by_critical && self.optimal_component
    }
}

pub fn check_zero_variance_assumptions(world: &ToyWorld, tol: f64) -> AssumptionReport {
    let alpha = &world.alpha;
    let mu = exact_crash_rate(world);
    let supported = || world.outcomes.iter().filter(|o| o.q_alpha(alpha) > 0.0);
    AssumptionReport {
        safe_outcomes_unsampled: world.outcomes.iter().all(|o| o.crash_prob > 0.0 || o.q_alpha(alpha) == 0.0),
        single_critical_step: supported().all(|o| o.num_steps() == 1),
        crash_determined_by_critical: supported().all(|o| o.rest == 1.0),
        optimal_component: mu > 0.0
            && (0..world.num_components()).any(|j| world.outcomes.iter().all(|o| (o.q(j) * mu - o.crash_mass()).abs() <= tol)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToySampler {
    Naturalistic,
    Mixture,
}

/// Draws outcome indices by inverse CDF over the given masses.
fn draw(cdf: &[f64], u: f64) -> usize {
    let total = *cdf.last().unwrap();
    let target = u * total;
    cdf.partition_point(|&c| c <= target).min(cdf.len() - 1)
}

/// Test records for `n` draws; naturalistic draws carry no critical steps.
pub fn sample_records<R: Rng + ?Sized>(world: &ToyWorld, n: usize, sampler: ToySampler, rng: &mut R) -> Result<Vec<TestRecord>> {
    let alpha = &world.alpha;
    let mut acc = 0.0;
    let cdf: Vec<f64> = world
        .outcomes
        .iter()
        .map(|o| {
            acc += match sampler {
                ToySampler::Naturalistic => o.p(),
                ToySampler::Mixture => o.q_alpha(alpha),
            };
            acc
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let o = &world.outcomes[draw(&cdf, rng.random::<f64>())];
        let steps = match sampler {
            ToySampler::Naturalistic => vec![],
            ToySampler::Mixture => o
                .steps
                .iter()
                .map(|s| CriticalStepRecord { p: s.p, q_alpha: ToyOutcome::step_mixture(s, alpha), q_individual: s.q.clone() })
                .collect(),
        };
        out.push(TestRecord::new(i as u64, o.crash_prob, steps)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn canonical_crash_rate() {
        let w = canonical_world();
        w.validate().unwrap();
        assert_eq!(exact_crash_rate(&w), 0.01);
    }

    #[test]
    fn trivial_crash_rates() {
        let mut w = canonical_world();
        for o in &mut w.outcomes {
            o.crash_prob = 0.0;
        }
        assert_eq!(exact_crash_rate(&w), 0.0);
        for o in &mut w.outcomes {
            o.crash_prob = 1.0;
        }
        assert!((exact_crash_rate(&w) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn optimal_sole_component_has_zero_variance() {
        let mut w = canonical_world();
        w.alpha = vec![1.0, 0.0];
        assert_eq!(exact_estimator_variance(&w, &ToyEstimator::PlainIs).unwrap(), 0.0);
    }

    #[test]
    fn naturalistic_sampler_gives_bernoulli_variance() {
        let mut w = canonical_world();
        w.alpha = vec![0.0, 1.0];
        let v = exact_estimator_variance(&w, &ToyEstimator::PlainIs).unwrap();
        assert!((v - 0.01 * 0.99).abs() < 1e-15);
    }

    #[test]
    fn canonical_lemma_bound_is_zero() {
        let w = canonical_world();
        let b = lemma1_check(&w).unwrap();
        assert_eq!(b.rhs, 0.0);
        assert!(b.lhs <= 1e-12, "{}", b.lhs);
        assert!(verify_bounds(&w).unwrap().holds());
    }

    #[test]
    fn identical_components_are_degenerate() {
        let mut w = canonical_world();
        for o in &mut w.outcomes {
            let p = o.steps[0].p;
            o.steps[0].q = vec![p, p];
        }
        let opt = optimal_beta_exact(&w, BetaKind::Ordinary).unwrap();
        assert!(opt.degenerate);
        assert_eq!(opt.estimator, ToyEstimator::OrdinaryCv(vec![0.0]));
    }

    #[test]
    fn rejects_unnormalized_world() {
        let mut w = canonical_world();
        w.outcomes[3].steps[0].p = 0.4;
        let e = w.validate().unwrap_err();
        assert!(e.to_string().contains("p does not sum to 1"), "{e}");
    }

    #[test]
    fn rejects_support_violation() {
        let mut w = canonical_world();
        w.alpha = vec![0.0, 1.0];
        w.outcomes[0].steps[0].q = vec![1.0, 0.0];
        w.outcomes[0].steps[0].p = 0.01;
        w.outcomes[1].steps[0].q = vec![0.0, 0.1];
        w.outcomes[3].steps[0].q = vec![0.0, 0.5];
        w.outcomes[2].steps[0].q = vec![0.0, 0.4];
        assert!(w.check_support().is_err());
        assert!(exact_estimator_variance(&w, &ToyEstimator::PlainIs).is_err());
    }

    #[test]
    fn tuples_are_lexicographic() {
        assert_eq!(tuples(2, 2), vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(tuples(0, 3), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn tree_worlds_normalize() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            random_stratified_world(3, 3, &mut rng).validate().unwrap();
            random_mixture_world(2, &mut rng).validate().unwrap();
        }
    }

    #[test]
    fn json_round_trip() {
        let w = canonical_world();
        assert_eq!(ToyWorld::from_json(&w.to_json()).unwrap(), w);
    }

    #[test]
    fn zero_variance_world() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = make_zero_variance_world(3, ZeroVarianceSizes::default(), &mut rng);
        w.validate().unwrap();
        assert!(check_zero_variance_assumptions(&w, 1e-12).all());
        let opt = optimal_beta_exact(&w, BetaKind::Stratified(ColumnSet::Reduced)).unwrap();
        assert!(exact_estimator_variance(&w, &opt.estimator).unwrap() <= 1e-12);
        let lemma = lemma1_check(&w).unwrap();
        assert!(lemma.rhs <= 1e-24 && lemma.lhs <= 1e-12);

        let bent = perturb_component(&w, 0, 0, 1.1);
        assert!(!check_zero_variance_assumptions(&bent, 1e-12).optimal_component);
        let opt = optimal_beta_exact(&bent, BetaKind::Stratified(ColumnSet::Reduced)).unwrap();
        assert!(exact_estimator_variance(&bent, &opt.estimator).unwrap() > 1e-6);
    }
}
