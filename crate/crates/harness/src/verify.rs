//! Enumeration checks of the estimator theory on toy worlds.

use std::path::PathBuf;

use avscv_core::toy::{
    canonical_world, exact_crash_rate, exact_estimator_variance, lemma1_check, make_zero_variance_world, optimal_beta_exact,
    perturb_component, random_mixture_world, random_stratified_world, theorem2_check, verify_bounds, BetaKind, ColumnSet, ToyEstimator,
    ToyWorld, ZeroVarianceSizes,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        self.checks.iter().map(|c| format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)).collect()
    }
}

fn check(name: impl Into<String>, passed: bool, detail: String) -> CheckResult {
    CheckResult { name: name.into(), passed, detail }
}

fn random_scv_beta(world: &ToyWorld, cols: ColumnSet, rng: &mut ChaCha8Rng) -> ToyEstimator {
    let j = world.num_components();
    let k = match cols {
        ColumnSet::Reduced => j - 1,
        ColumnSet::Full => j,
    };
    let beta = (0..=world.max_steps())
        .map(|l| if l == 0 { Vec::new() } else { (0..k.pow(l as u32)).map(|_| rng.random_range(-5.0..5.0)).collect() })
        .collect();
    ToyEstimator::Scv { columns: cols, beta }
}

/// Largest `|E[SCV contribution] - mu|` over `betas` random control vectors per world.
pub fn unbiasedness_check(worlds: usize, betas: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for w in 0..worlds {
        let world = random_stratified_world(2 + w % 3, 3, &mut rng);
        let mu = exact_crash_rate(&world);
        for b in 0..betas {
            let cols = if b % 2 == 0 { ColumnSet::Reduced } else { ColumnSet::Full };
            let est = random_scv_beta(&world, cols, &mut rng);
            worst = worst.max((world.expected_contribution(&est)? - mu).abs());
        }
    }
    Ok(check("unbiasedness", worst <= TOL, format!("max |E[c] - mu| = {worst:.3e} over {worlds} worlds x {betas} control vectors")))
}

/// Optimal ordinary CV variance against `min_j var(q_j)/alpha_j` on mixture worlds.
pub fn mixture_bound_check(worlds: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for w in 0..worlds {
        let b = lemma1_check(&random_mixture_world(2 + w % 3, &mut rng))?;
        worst = worst.max(b.lhs - b.rhs);
    }
    Ok(check("mixture bound", worst <= TOL, format!("max (variance - bound) = {worst:.3e} over {worlds} worlds")))
}

/// Optimal stratified CV variance against the stratified bound.
pub fn stratified_bound_check(worlds: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for w in 0..worlds {
        let b = theorem2_check(&random_stratified_world(2 + w % 2, 3, &mut rng))?;
        worst = worst.max(b.lhs - b.rhs);
    }
    Ok(check("stratified bound", worst <= TOL, format!("max (variance - bound) = {worst:.3e} over {worlds} worlds")))
}

/// Zero variance at the optimum, and a clearly positive variance once the
/// optimal component is bent by 10%.
pub fn zero_variance_check(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let world = make_zero_variance_world(3, ZeroVarianceSizes::default(), &mut rng);
    let opt = optimal_beta_exact(&world, BetaKind::Stratified(ColumnSet::Reduced))?;
    let v = exact_estimator_variance(&world, &opt.estimator)?;
    let bent = perturb_component(&world, 0, 0, 1.1);
    let opt = optimal_beta_exact(&bent, BetaKind::Stratified(ColumnSet::Reduced))?;
    let vb = exact_estimator_variance(&bent, &opt.estimator)?;
    Ok(check("zero variance", v <= 1e-10 && vb > 1e-6, format!("variance {v:.3e} at the optimum, {vb:.3e} after a 10% perturbation")))
}

fn world_check(name: &str, world: &ToyWorld) -> CheckResult {
    match verify_bounds(world) {
        Ok(r) => check(
            name,
            r.holds(),
            format!(
                "mu = {:.6e}, bias {:.1e}, stratified variance {:.3e} <= {:.3e}",
                r.mu, r.unbiasedness_error, r.theorem2.lhs, r.theorem2.rhs
            ),
        ),
        Err(e) => check(name, false, e.to_string()),
    }
}

/// Runs the whole suite, plus every world file given.
pub fn toy_verify(world_files: &[PathBuf]) -> Result<VerifyReport> {
    let mut checks = vec![world_check("canonical world", &canonical_world())];
    checks.push(unbiasedness_check(5, 10, 11)?);
    checks.push(mixture_bound_check(5, 12)?);
    checks.push(stratified_bound_check(5, 13)?);
    checks.push(zero_variance_check(14)?);
    for path in world_files {
        let name = path.display().to_string();
        let c = match std::fs::read_to_string(path) {
            Ok(text) => match ToyWorld::from_json(&text) {
                Ok(w) => world_check(&name, &w),
                Err(e) => check(&name, false, e.to_string()),
            },
            Err(e) => check(&name, false, e.to_string()),
        };
        checks.push(c);
    }
    Ok(VerifyReport { checks })
}
