mod oracles;

use halide_core::evaluation::{compute_metrics, friedman_conover, roc_auc, PredictionRecord};
use halide_core::policy::{loss_gradient, weighted_loss, Architecture, EnergyPolicy};
use halide_core::segmentation::dp::{assign_path, causal_path};
use halide_core::segmentation::{glasso_objective, toeplitz_glasso, AdmmParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn admm_matches_coordinate_descent() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for lambda in [0.01, 0.05, 0.2, 0.5] {
        let s = oracles::random_covariance(&mut rng, 4, 10);
        let fit = toeplitz_glasso(&s, lambda, 4, 1, &AdmmParams::default()).unwrap();
        let cd = oracles::glasso_cd(&s, lambda);
        let a = oracles::glasso_objective_ref(&fit.model.theta, &s, lambda);
        let b = oracles::glasso_objective_ref(&cd, &s, lambda);
        assert!((a - b).abs() / b.abs() < 1e-4, "lambda {lambda}: {a} vs {b}");
        // The library objective agrees with the reference formula.
        assert!((glasso_objective(&fit.model.theta, &s, lambda) - a).abs() < 1e-9);
    }
}

#[test]
fn canonical_rank_test_matches_reference() {
    let table = oracles::canonical_table();
    let names: Vec<String> = (0..4).map(|i| format!("m{i}")).collect();
    let got = friedman_conover(&names, &table).unwrap();
    let want = oracles::friedman_reference(&table);
    assert!((got.chi_square - want.chi_square).abs() < 1e-9);
    assert!((got.chi_square - 16.4).abs() < 1e-9);
    assert!((got.p_value - want.p_value).abs() < 1e-9);
    assert_eq!(got.mean_ranks, vec![1.0, 2.0, 22.0 / 6.0, 20.0 / 6.0]);
    for &((i, j), p) in &want.pairwise {
        assert!((got.pairwise_p[i][j] - p).abs() < 1e-9, "pair ({i},{j})");
    }
    // The best method separates from the two weakest.
    assert!(got.significant[0][2] && got.significant[0][3]);
    assert!(!got.significant[2][3]);
}

fn records(truth: &[usize], dists: &[Vec<f64>]) -> Vec<PredictionRecord> {
    truth
        .iter()
        .zip(dists)
        .enumerate()
        .map(|(k, (&a, d))| PredictionRecord {
            id: format!("t{}", k % 3),
            step: k,
            action: a,
            dist: d.clone(),
        })
        .collect()
}

fn prediction_set() -> impl Strategy<Value = (Vec<usize>, Vec<Vec<f64>>)> {
    (2usize..=4, 1usize..=40).prop_flat_map(|(a, n)| {
        (
            prop::collection::vec(0..a, n),
            prop::collection::vec(prop::collection::vec(0u8..5, a), n),
        )
            .prop_map(|(truth, raw)| {
                let dists = raw
                    .iter()
                    .map(|r| {
                        let shifted: Vec<f64> = r.iter().map(|&v| v as f64 + 0.5).collect();
                        let total: f64 = shifted.iter().sum();
                        shifted.iter().map(|v| v / total).collect()
                    })
                    .collect();
                (truth, dists)
            })
    })
}

proptest! {
    #[test]
    fn dp_matches_enumeration(
        costs in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..7),
        switch in prop::collection::vec(0.0f64..2.0, 7),
    ) {
        let (_, cost) = assign_path(&costs, &switch[..costs.len()]);
        prop_assert_eq!(cost, oracles::enumerate_paths(&costs, &switch[..costs.len()]));
    }

    #[test]
    fn causal_prefix_is_stable(
        costs in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 2..10),
        cut in 1usize..9,
    ) {
        let switch = vec![0.7; costs.len()];
        let cut = cut.min(costs.len());
        let full = causal_path(&costs, &switch);
        let prefix = causal_path(&costs[..cut], &switch[..cut]);
        prop_assert_eq!(&full[..cut], &prefix[..]);
    }

    #[test]
    fn metrics_match_brute_force((truth, dists) in prediction_set()) {
        let got = compute_metrics(&records(&truth, &dists)).unwrap();
        let want = oracles::brute_metrics(&truth, &dists);
        prop_assert!((got.f1 - want.f1).abs() < 1e-12);
        prop_assert!((got.jaccard - want.jaccard).abs() < 1e-12);
        prop_assert!((got.prec - want.prec).abs() < 1e-12);
        prop_assert!((got.acc - got.rec).abs() < 1e-12);
        match (got.auc, want.auc) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
            (x, y) => prop_assert_eq!(x, y),
        }
        match (got.apr, want.apr) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
            (x, y) => prop_assert_eq!(x, y),
        }
        prop_assert!(got.jaccard <= got.f1 + 1e-12);
    }

    #[test]
    fn metrics_ignore_record_order((truth, dists) in prediction_set(), seed in 0u64..1000) {
        use rand::seq::SliceRandom;
        let recs = records(&truth, &dists);
        let mut shuffled = recs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = compute_metrics(&recs).unwrap();
        let b = compute_metrics(&shuffled).unwrap();
        prop_assert!((a.f1 - b.f1).abs() < 1e-12);
        prop_assert!((a.auc.unwrap_or(0.0) - b.auc.unwrap_or(0.0)).abs() < 1e-12);
        prop_assert!((a.apr.unwrap_or(0.0) - b.apr.unwrap_or(0.0)).abs() < 1e-12);
    }

    #[test]
    fn rank_auc_equals_pair_count(
        scores in prop::collection::vec(0u8..6, 2..50),
        labels in prop::collection::vec(any::<bool>(), 50),
    ) {
        let s: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
        let l = &labels[..s.len()];
        prop_assert_eq!(roc_auc(&s, l).map(|v| (v * 1e12).round()), oracles::pair_auc(&s, l).map(|v| (v * 1e12).round()));
    }

    #[test]
    fn mlp_gradient_matches_differences(seed in 0u64..500, lambda in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pol = EnergyPolicy::new(Architecture::Mlp { hidden: 4 }, 3, 3, seed);
        for p in &mut pol.params {
            *p = oracles::gaussian(&mut rng);
        }
        let steps: Vec<_> = (0..4)
            .map(|t| halide_core::dataset::Step {
                t: t as f64,
                x: (0..3).map(|_| oracles::gaussian(&mut rng)).collect(),
                a: t % 3,
                w: 0.3 + 0.2 * t as f64,
            })
            .collect();
        let g = loss_gradient(&pol, &steps, 0.7, lambda);
        let fd = oracles::central_difference(&pol.params, 1e-5, |p| {
            weighted_loss(&EnergyPolicy { params: p.to_vec(), ..pol.clone() }, &steps, 0.7, lambda)
        });
        prop_assert!(oracles::relative_error(&g, &fd) < 1e-6);
    }
}
