use avscv_core::estimate::{bootstrap_rnot, importance_weighted_estimate, BootstrapConfig, Estimator};
use avscv_core::record::{CriticalStepRecord, TestRecord};
use avscv_core::scv::prefix::{log_checkpoints, PreparedRecords};
use avscv_core::scv::{infer_components, scv_design_row, scv_estimate, stratify, ScvOptions};
use avscv_core::stats::mean_and_variance;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const J: usize = 3;

/// Records with random step counts and consistent mixture probabilities.
fn random_records(n: usize, seed: u64, max_l: usize) -> Vec<TestRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = [0.5, 0.3, 0.2];
    (0..n)
        .map(|i| {
            let l = rng.random_range(0..=max_l);
            let steps = (0..l)
                .map(|_| {
                    let q: Vec<f64> = (0..J).map(|_| rng.random_range(0.02..0.9)).collect();
                    let qa: f64 = q.iter().zip(alpha).map(|(a, b)| a * b).sum();
                    CriticalStepRecord::new(rng.random_range(0.001..0.5), qa, q)
                })
                .collect();
            let crash = if rng.random::<f64>() < 0.3 { rng.random_range(0.0..1.0) } else { 0.0 };
            TestRecord::new(i as u64, crash, steps).unwrap()
        })
        .collect()
}

fn var(xs: &[f64]) -> f64 {
    mean_and_variance(xs).1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adjusted_variance_never_exceeds_plain(n in 20usize..300, seed in any::<u64>()) {
        let recs = random_records(n, seed, 3);
        let rep = scv_estimate(&stratify(&recs, 9), J, &ScvOptions::default()).unwrap();
        let is = importance_weighted_estimate(&recs).unwrap();
        prop_assert!(rep.report.asymptotic_variance <= is.asymptotic_variance * (1.0 + 1e-9) + 1e-300);
        prop_assert!((rep.report.mean - is.mean).abs() <= 1e-9 * is.mean.abs().max(1e-300));
        for s in &rep.strata {
            prop_assert!(s.fit.rank <= s.n_l.min(s.d_l));
        }
        prop_assert_eq!(rep.strata.iter().map(|s| s.n_l).sum::<usize>(), n);
    }

    #[test]
    fn residuals_are_orthogonal_to_centred_design(n in 30usize..200, seed in any::<u64>()) {
        let recs = random_records(n, seed, 2);
        let batch = stratify(&recs, 9);
        let rep = scv_estimate(&batch, J, &ScvOptions::default()).unwrap();
        for s in rep.strata.iter().filter(|s| s.fitted) {
            let idx = batch.indices(s.l);
            let rows: Vec<Vec<f64>> = idx.iter().map(|&i| scv_design_row(&recs[i], s.l, J).unwrap()).collect();
            let scale: f64 = s.adjusted.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
            for c in 0..s.d_l {
                let col_mean = rows.iter().map(|r| r[c]).sum::<f64>() / rows.len() as f64;
                let dot: f64 = rows.iter().zip(&s.fit.residuals).map(|(r, e)| (r[c] - col_mean) * e).sum();
                let col_norm = rows.iter().map(|r| (r[c] - col_mean).powi(2)).sum::<f64>().sqrt().max(1e-300);
                prop_assert!(dot.abs() <= 1e-7 * col_norm * scale * (rows.len() as f64).sqrt(), "dot {dot}");
            }
        }
    }

    #[test]
    fn estimate_is_permutation_invariant(n in 20usize..200, seed in any::<u64>()) {
        let recs = random_records(n, seed, 2);
        let mut shuffled = recs.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let a = scv_estimate(&stratify(&recs, 9), J, &ScvOptions::default()).unwrap().report;
        let b = scv_estimate(&stratify(&shuffled, 9), J, &ScvOptions::default()).unwrap().report;
        prop_assert!((a.mean - b.mean).abs() <= 1e-10 * a.mean.abs().max(1e-12));
        prop_assert!((a.asymptotic_variance - b.asymptotic_variance).abs() <= 1e-6 * a.asymptotic_variance.max(1e-300));
    }
}

#[test]
fn streaming_refit_matches_batch_fit() {
    let recs = random_records(2000, 99, 2);
    let prepared = PreparedRecords::new(&recs, &ScvOptions::default()).unwrap();
    let order: Vec<usize> = (0..recs.len()).collect();
    let checkpoints = log_checkpoints(recs.len(), 10, 50);
    for (n, mean, v) in prepared.curve(&order, &checkpoints) {
        let prefix = &recs[..n];
        let rep = scv_estimate(&stratify(prefix, 9), infer_components(prefix).unwrap(), &ScvOptions::default()).unwrap();
        assert!((mean - rep.report.mean).abs() <= 1e-10 * mean.abs().max(1e-300), "n={n}");
        assert!((v - rep.report.asymptotic_variance).abs() <= 1e-6 * v.max(1e-300), "n={n}: {v} vs {}", rep.report.asymptotic_variance);
    }
}

#[test]
fn zero_control_equals_importance_sampling() {
    let recs = random_records(500, 5, 3);
    let opts = ScvOptions { fit: false, ..ScvOptions::default() };
    let rep = scv_estimate(&stratify(&recs, 9), J, &opts).unwrap();
    let is = importance_weighted_estimate(&recs).unwrap();
    assert_eq!(rep.report.mean, is.mean);
    assert_eq!(rep.report.asymptotic_variance, is.asymptotic_variance);
    let ys: Vec<f64> = recs.iter().map(|r| r.weighted_outcome()).collect();
    assert_eq!(rep.adjusted, ys);
    assert_eq!(var(&ys), is.asymptotic_variance);
}

#[test]
fn bootstrap_is_deterministic_and_scv_not_slower() {
    let recs = random_records(3000, 42, 2);
    let cfg = BootstrapConfig { num_shuffles: 20, min_tests: 10, ..BootstrapConfig::default() };
    let a = bootstrap_rnot(&recs, &Estimator::Scv(ScvOptions::default()), &cfg).unwrap();
    let b = bootstrap_rnot(&recs, &Estimator::Scv(ScvOptions::default()), &cfg).unwrap();
    assert_eq!(a.rnots(), b.rnots());
    let is = bootstrap_rnot(&recs, &Estimator::ImportanceSampling, &cfg).unwrap();
    assert_eq!(a.scans.len(), 20);
    assert_eq!(is.scans.len(), 20);
}

#[test]
fn running_fit_matches_batch_at_every_prefix() {
    // Up to 32 columns per stratum, so early prefixes are rank deficient.
    let recs = random_records(300, 7, 5);
    let prepared = PreparedRecords::new(&recs, &ScvOptions::default()).unwrap();
    let order: Vec<usize> = (0..recs.len()).collect();
    let every: Vec<usize> = (1..=recs.len()).collect();
    for (n, mean, v) in prepared.curve(&order, &every) {
        let prefix = &recs[..n];
        let rep = scv_estimate(&stratify(prefix, 9), J, &ScvOptions::default()).unwrap();
        assert!((mean - rep.report.mean).abs() <= 1e-10 * mean.abs().max(1e-300), "n={n}");
        let scale = var(&prefix.iter().map(|r| r.weighted_outcome()).collect::<Vec<_>>());
        assert!((v - rep.report.asymptotic_variance).abs() <= 1e-8 * scale.max(1e-300), "n={n}: {v} vs {}", rep.report.asymptotic_variance);
    }
}

#[test]
fn scv_rnot_matches_prefix_recomputation() {
    let recs = random_records(400, 11, 3);
    let cfg = BootstrapConfig { num_shuffles: 3, rhw_threshold: 0.3, min_tests: 5, ..BootstrapConfig::default() };
    let rep = bootstrap_rnot(&recs, &Estimator::Scv(ScvOptions::default()), &cfg).unwrap();
    assert!(rep.reached > 0);
    let z = avscv_core::stats::two_sided_z(cfg.confidence);
    for (k, scan) in rep.scans.iter().enumerate() {
        let order = avscv_core::estimate::shuffle_order(recs.len(), cfg.seed, k as u64);
        let shuffled: Vec<TestRecord> = order.iter().map(|&i| recs[i].clone()).collect();
        let mut expected = None;
        for n in cfg.min_tests..=shuffled.len() {
            let r = scv_estimate(&stratify(&shuffled[..n], 9), J, &ScvOptions::default()).unwrap().report;
            if r.mean > 0.0 && z * (r.asymptotic_variance / n as f64).sqrt() / r.mean <= cfg.rhw_threshold {
                expected = Some(n);
                break;
            }
        }
        assert_eq!(scan.first_crossing, expected, "shuffle {k}");
    }
}
