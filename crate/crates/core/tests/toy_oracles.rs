use avscv_core::estimate::{crude_monte_carlo, importance_weighted_estimate, ordinary_cv_estimate, required_num_tests};
use avscv_core::scv::{infer_components, scv_estimate, stratify, ScvOptions};
use avscv_core::stats::two_sided_z;
use avscv_core::toy::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_beta(world: &ToyWorld, cols: ColumnSet, rng: &mut ChaCha8Rng) -> ToyEstimator {
    let j = world.num_components();
    let k = match cols {
        ColumnSet::Reduced => j - 1,
        ColumnSet::Full => j,
    };
    let beta = (0..=world.max_steps())
        .map(|l| if l == 0 { vec![] } else { (0..k.pow(l as u32)).map(|_| rng.random_range(-3.0..3.0)).collect() })
        .collect();
    ToyEstimator::Scv { columns: cols, beta }
}

#[test]
fn scv_contribution_is_unbiased_for_any_beta() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for w in 0..6 {
        let world = random_stratified_world(2 + w % 2, 3, &mut rng);
        world.validate().unwrap();
        let mu = exact_crash_rate(&world);
        for b in 0..10 {
            let cols = if b % 2 == 0 { ColumnSet::Reduced } else { ColumnSet::Full };
            let est = random_beta(&world, cols, &mut rng);
            let e = world.expected_contribution(&est).unwrap();
            assert!((e - mu).abs() <= 1e-12, "world {w} beta {b}: {e} vs {mu}");
        }
    }
}

#[test]
fn ordinary_cv_bound_on_mixture_worlds() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..8 {
        let world = random_mixture_world(3, &mut rng);
        let b = lemma1_check(&world).unwrap();
        assert!(b.holds, "{b:?}");
    }
}

#[test]
fn stratified_bound_on_stratified_worlds() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for s in 0..6 {
        let world = random_stratified_world(2 + s % 2, 3, &mut rng);
        let r = verify_bounds(&world).unwrap();
        assert!(r.holds(), "{r:?}");
        assert!(r.lemma1.is_none() || world.max_steps() <= 1);
    }
}

#[test]
fn canonical_beta_beats_random_probes() {
    let world = canonical_world();
    let opt = optimal_beta_exact(&world, BetaKind::Ordinary).unwrap();
    let best = exact_estimator_variance(&world, &opt.estimator).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let probe = ToyEstimator::OrdinaryCv(vec![rng.random_range(-1.0..1.0)]);
        assert!(best <= exact_estimator_variance(&world, &probe).unwrap() + 1e-15);
    }
}

#[test]
fn infinite_variance_component_is_skipped() {
    // The second component misses the crash outcome, so its own variance is infinite.
    let world = ToyWorld {
        alpha: vec![0.5, 0.5],
        outcomes: [(0.02, 1.0, [0.3, 0.0]), (0.18, 0.2, [0.3, 0.3]), (0.8, 0.0, [0.4, 0.7])]
            .iter()
            .map(|&(p, c, q)| ToyOutcome { rest: 1.0, crash_prob: c, steps: vec![ToyStep { p, q: q.to_vec() }] })
            .collect(),
    };
    world.validate().unwrap();
    assert!(component_variance(&world, 1).is_infinite());
    assert!(component_variance(&world, 0).is_finite());
    let r = verify_bounds(&world).unwrap();
    assert!(r.holds(), "{r:?}");
    assert!(r.lemma1.unwrap().rhs.is_finite());
}

#[test]
fn zero_variance_construction() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for j in 2..=4 {
        let world = make_zero_variance_world(j, ZeroVarianceSizes::default(), &mut rng);
        world.validate().unwrap();
        assert!(check_zero_variance_assumptions(&world, 1e-12).all());
        for cols in [ColumnSet::Reduced, ColumnSet::Full] {
            let opt = optimal_beta_exact(&world, BetaKind::Stratified(cols)).unwrap();
            assert!(exact_estimator_variance(&world, &opt.estimator).unwrap() <= 1e-10);
        }
        let r = verify_bounds(&world).unwrap();
        assert!(r.holds());
        let bent = perturb_component(&world, 0, 0, 1.1);
        let opt = optimal_beta_exact(&bent, BetaKind::Stratified(ColumnSet::Reduced)).unwrap();
        assert!(exact_estimator_variance(&bent, &opt.estimator).unwrap() > 1e-6);
    }
}

fn within(empirical: f64, exact: f64, se: f64, what: &str) {
    assert!((empirical - exact).abs() <= 4.0 * se + 1e-12 * exact.abs().max(1e-3), "{what}: {empirical} vs {exact} (se {se})");
}

#[test]
fn sampled_estimates_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 100_000;
    let mut worlds = vec![canonical_world()];
    for _ in 0..3 {
        worlds.push(random_mixture_world(2, &mut rng));
    }
    for world in &worlds {
        let mu = exact_crash_rate(world);

        let nat = sample_records(world, n, ToySampler::Naturalistic, &mut rng).unwrap();
        let crude = crude_monte_carlo(&nat).unwrap();
        let crude_var: f64 = world.outcomes.iter().map(|o| o.p() * (o.crash_prob - mu).powi(2)).sum();
        within(crude.mean, mu, (crude_var / n as f64).sqrt(), "crude");

        let mix = sample_records(world, n, ToySampler::Mixture, &mut rng).unwrap();
        let is_var = exact_estimator_variance(world, &ToyEstimator::PlainIs).unwrap();
        let is = importance_weighted_estimate(&mix).unwrap();
        within(is.mean, mu, (is_var / n as f64).sqrt().max(1e-15), "is");

        let opt = optimal_beta_exact(world, BetaKind::Ordinary).unwrap();
        let ToyEstimator::OrdinaryCv(beta) = &opt.estimator else { unreachable!() };
        let cv_var = exact_estimator_variance(world, &opt.estimator).unwrap();
        let cv = ordinary_cv_estimate(&mix, beta).unwrap();
        within(cv.mean, mu, (cv_var / n as f64).sqrt().max(1e-15), "cv");
    }
}

#[test]
fn fitted_scv_variance_approaches_exact_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let world = random_stratified_world(3, 2, &mut rng);
    let opt = optimal_beta_exact(&world, BetaKind::Stratified(ColumnSet::Reduced)).unwrap();
    let exact = exact_estimator_variance(&world, &opt.estimator).unwrap();
    let plain = exact_estimator_variance(&world, &ToyEstimator::PlainIs).unwrap();
    let recs = sample_records(&world, 200_000, ToySampler::Mixture, &mut rng).unwrap();
    let batch = stratify(&recs, 9);
    let rep = scv_estimate(&batch, infer_components(&recs).unwrap(), &ScvOptions::default()).unwrap();
    let v = rep.report.asymptotic_variance;
    assert!((v - exact).abs() <= 0.05 * plain, "fitted {v}, exact optimum {exact}, plain {plain}");
}

/// Independent re-evaluation: recompute mean and variance from scratch at every prefix.
fn rnot_by_rescan(ys: &[f64], threshold: f64, confidence: f64) -> Option<usize> {
    let z = two_sided_z(confidence);
    let (mut s, mut s2) = (0.0_f64, 0.0_f64);
    for (k, y) in ys.iter().enumerate() {
        s += y;
        s2 += y * y;
        let n = (k + 1) as f64;
        let mean = s / n;
        if mean <= 0.0 {
            continue;
        }
        let var = if k == 0 { 0.0 } else { ((s2 - n * mean * mean) / (n - 1.0)).max(0.0) };
        if z * (var / n).sqrt() / mean <= threshold {
            return Some(k + 1);
        }
    }
    None
}

#[test]
fn rnot_matches_prefix_rescan_on_toy_stream() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let world = random_mixture_world(2, &mut rng);
    let recs = sample_records(&world, 100_000, ToySampler::Mixture, &mut rng).unwrap();
    let ys: Vec<f64> = recs.iter().map(|r| r.weighted_outcome()).collect();
    // Start the stream after the first positive contribution so n = 1 is not a trivial crossing.
    let first = ys.iter().position(|&y| y > 0.0).unwrap();
    let mut stream = vec![0.0; 3];
    stream.extend_from_slice(&ys[first..]);
    let got = required_num_tests(&stream, 0.3, 0.9);
    let want = rnot_by_rescan(&stream, 0.3, 0.9);
    assert_eq!(got, want);
    assert!(got.is_some());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn widening_mixture_support_keeps_support(seed in 0u64..1000, extra in 0.01f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut world = random_stratified_world(3, 2, &mut rng);
        world.alpha = vec![1.0, 0.0, 0.0];
        if world.check_support().is_ok() {
            world.alpha = vec![1.0 - extra, extra, 0.0];
            prop_assert!(world.check_support().is_ok());
        }
    }

    #[test]
    fn plain_is_is_unbiased(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let world = random_stratified_world(2, 2, &mut rng);
        let e = world.expected_contribution(&ToyEstimator::PlainIs).unwrap();
        prop_assert!((e - exact_crash_rate(&world)).abs() <= 1e-12);
    }
}
