use std::collections::BTreeSet;

use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::Rng;

use sdrf::bootstrap::{ResampleDraw, ResampleScheme};
use sdrf::design::{hajek_distribution, PsuKey, SampleDesign, SurveySample};
use sdrf::forest::FittedTree;
use sdrf::forest::{
    fit_forest, with_workers, Forest, ForestConfig, ForestMode, HonestyPartition, TreeNode,
};
use sdrf::kernel::KernelSpec;
use sdrf::rng;
use sdrf::sim::dgp::draw_covariates;
use sdrf::sim::{apply_survey, generate_population, ExperimentConfig};

/// Six units in six PSUs of one stratum, one covariate.
fn tiny_sample() -> SurveySample {
    let x = array![[0.1], [0.2], [0.3], [0.6], [0.7], [0.8]];
    let y = array![
        [1.0, 0.0],
        [2.0, 0.0],
        [3.0, 0.0],
        [4.0, 1.0],
        [5.0, 1.0],
        [6.0, 1.0]
    ];
    let pi = vec![0.5, 0.25, 0.5, 0.2, 0.5, 1.0];
    SurveySample::new(
        x,
        y,
        pi,
        vec![1; 6],
        (1..=6).collect(),
        SampleDesign::Poisson,
    )
    .unwrap()
}

fn partition(split: &[u32], est: &[u32]) -> HonestyPartition {
    HonestyPartition {
        split_psus: split.iter().map(|&p| PsuKey::new(1, p)).collect(),
        est_psus: est.iter().map(|&p| PsuKey::new(1, p)).collect(),
    }
}

fn draw(multipliers: Vec<f64>) -> ResampleDraw {
    ResampleDraw {
        multipliers,
        scheme: ResampleScheme::DesignBootstrap,
        seed: 0,
    }
}

fn stump(threshold: f64) -> TreeNode {
    TreeNode::Split {
        feature: 0,
        threshold,
        left: Box::new(TreeNode::Leaf { leaf_id: 0 }),
        right: Box::new(TreeNode::Leaf { leaf_id: 1 }),
    }
}

fn hand_forest(trees: Vec<FittedTree>) -> Forest {
    let sample = tiny_sample();
    let kernel = KernelSpec::gaussian(1.0, 2).unwrap();
    let config = ForestConfig {
        n_trees: trees.len(),
        ..ForestConfig::default()
    };
    Forest::from_trees(sample, config, kernel, trees).unwrap()
}

#[test]
fn two_tree_weights_match_hand_computation() {
    // Tree A: split at 0.5, estimation units 1, 3, 5 (0-based 0, 2, 4) with
    // multipliers 1, 2, 1. Tree B: split at 0.25, estimation units 2, 4, 6.
    let a = FittedTree {
        root: stump(0.5),
        partition: partition(&[2, 4, 6], &[1, 3, 5]),
        resample: draw(vec![1.0, 1.0, 2.0, 1.0, 1.0, 1.0]),
        seed: 1,
    };
    let b = FittedTree {
        root: stump(0.25),
        partition: partition(&[1, 3, 5], &[2, 4, 6]),
        resample: draw(vec![1.0, 3.0, 1.0, 1.0, 1.0, 2.0]),
        seed: 2,
    };
    let forest = hand_forest(vec![a, b]);
    // x = 0.3: tree A left leaf holds units 0 (1/0.5 = 2) and 2 (2/0.5 = 4);
    // tree B right leaf holds units 3 (1/0.2 = 5) and 5 (2/1 = 2).
    let w = forest.forest_weights(&[0.3]).unwrap();
    let expected = [
        0.5 * 2.0 / 6.0,
        0.0,
        0.5 * 4.0 / 6.0,
        0.5 * 5.0 / 7.0,
        0.0,
        0.5 * 2.0 / 7.0,
    ];
    for (got, want) in w.iter().zip(expected) {
        assert!((got - want).abs() < 1e-15, "{w:?}");
    }
    // x = 0.2: tree B left leaf holds unit 1 only (3 / 0.25).
    let w = forest.forest_weights(&[0.2]).unwrap();
    assert!((w[1] - 0.5).abs() < 1e-15 && (w[0] - 1.0 / 6.0).abs() < 1e-15);
}

#[test]
fn trees_without_estimation_mass_are_dropped() {
    let a = FittedTree {
        root: stump(0.5),
        partition: partition(&[1, 2, 3], &[4, 5, 6]),
        resample: draw(vec![1.0; 6]),
        seed: 1,
    };
    let b = FittedTree {
        root: TreeNode::Leaf { leaf_id: 0 },
        partition: partition(&[4, 5, 6], &[1, 2, 3]),
        resample: draw(vec![1.0; 6]),
        seed: 2,
    };
    let forest = hand_forest(vec![a, b]);
    // Tree A's left leaf has no estimation units, so only tree B counts.
    let w = forest.forest_weights(&[0.1]).unwrap();
    let h = hajek_distribution(forest.sample(), |i| i < 3, Some(&[1.0; 6])).unwrap();
    assert!((w[0] - h.weights()[0]).abs() < 1e-15);
    let only_a = hand_forest(vec![FittedTree {
        root: stump(0.5),
        partition: partition(&[1, 2, 3], &[4, 5, 6]),
        resample: draw(vec![1.0; 6]),
        seed: 1,
    }]);
    assert!(matches!(
        only_a.forest_weights(&[0.1]),
        Err(sdrf::Error::NoSupport)
    ));
}

#[test]
fn single_leaf_forest_is_the_hajek_estimation_law() {
    let multipliers = vec![2.0, 0.0, 1.0, 3.0, 1.0, 1.0];
    let forest = hand_forest(vec![FittedTree {
        root: TreeNode::Leaf { leaf_id: 0 },
        partition: partition(&[2, 5], &[1, 3, 4, 6]),
        resample: draw(multipliers.clone()),
        seed: 0,
    }]);
    let est = [0usize, 2, 3, 5];
    let hajek =
        hajek_distribution(forest.sample(), |i| est.contains(&i), Some(&multipliers)).unwrap();
    let pred = forest.predict_distribution(&[0.9]).unwrap();
    assert_eq!(pred.points(), hajek.points());
    for (a, b) in pred.weights().iter().zip(hajek.weights()) {
        assert!((a - b).abs() < 1e-15);
    }
}

fn sim_sample(size: usize, seed: u64) -> SurveySample {
    let cfg = ExperimentConfig::default();
    let pop = generate_population(&cfg.population_config(size), seed).unwrap();
    apply_survey(&pop, &cfg.survey_plan(size), seed).unwrap()
}

#[test]
fn worker_count_does_not_change_the_forest() {
    let sample = sim_sample(2000, 3);
    let config = ForestConfig {
        n_trees: 12,
        seed: 3,
        ..ForestConfig::default()
    };
    let one = with_workers(1, || fit_forest(&sample, &config).unwrap()).unwrap();
    let eight = with_workers(8, || fit_forest(&sample, &config).unwrap()).unwrap();
    assert_eq!(one.to_json().unwrap(), eight.to_json().unwrap());
}

#[test]
fn json_roundtrip_predicts_identically() {
    let sample = sim_sample(2000, 4);
    for mode in [ForestMode::Survey, ForestMode::Naive] {
        let forest = fit_forest(
            &sample,
            &ForestConfig {
                n_trees: 10,
                mode,
                rff_dim: if mode == ForestMode::Naive { 64 } else { 0 },
                seed: 4,
                ..ForestConfig::default()
            },
        )
        .unwrap();
        let text = forest.to_json().unwrap();
        let back = Forest::from_json(&text).unwrap();
        assert_eq!(back.to_json().unwrap(), text);
        let mut rng = rng::stream(40);
        for _ in 0..100 {
            let x = draw_covariates(&mut rng, 3);
            assert_eq!(forest.forest_weights(&x).ok(), back.forest_weights(&x).ok());
        }
    }
}

#[test]
fn corrupted_documents_are_rejected() {
    let forest = hand_forest(vec![FittedTree {
        root: stump(0.5),
        partition: partition(&[1, 2, 3], &[4, 5, 6]),
        resample: draw(vec![1.0; 6]),
        seed: 1,
    }]);
    let doc: serde_json::Value = serde_json::from_str(&forest.to_json().unwrap()).unwrap();
    let corrupt = |path: &[&str], value: serde_json::Value| {
        let mut d = doc.clone();
        let mut node = &mut d;
        for key in path {
            node = match key.parse::<usize>() {
                Ok(i) => &mut node[i],
                Err(_) => &mut node[*key],
            };
        }
        *node = value;
        Forest::from_json(&d.to_string())
    };
    assert!(corrupt(&[], doc.clone()).is_ok());
    assert!(corrupt(&["format_version"], 99.into()).is_err());
    assert!(corrupt(&["trees", "0", "root", "right", "leaf_id"], 7.into()).is_err());
    assert!(corrupt(&["trees", "0", "root", "feature"], 3.into()).is_err());
    assert!(corrupt(
        &["trees", "0", "resample", "multipliers"],
        serde_json::json!([1.0, 1.0])
    )
    .is_err());
    assert!(Forest::from_json("{}").is_err());
}

fn random_sample(n: usize, psus: u32, seed: u64) -> SurveySample {
    let mut rng = rng::stream(seed);
    let x = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>());
    let y = Array2::from_shape_fn((n, 1), |(i, _)| x[[i, 0]] * 4.0 + rng.random::<f64>());
    let pi: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let psu: Vec<u32> = (0..n).map(|i| i as u32 % psus + 1).collect();
    SurveySample::new(x, y, pi, vec![1; n], psu, SampleDesign::Poisson).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn depth_never_exceeds_limit(seed in 0u64..1000, depth in 1usize..6, min_node in 1usize..6) {
        let sample = random_sample(120, 30, seed);
        let forest = fit_forest(&sample, &ForestConfig {
            n_trees: 4,
            max_depth: depth,
            min_node_size: Some(min_node),
            seed,
            ..ForestConfig::default()
        }).unwrap();
        for t in forest.trees() {
            prop_assert!(t.root.depth() <= depth);
        }
        prop_assert!(forest.audit().is_clean());
    }

    #[test]
    fn weights_are_piecewise_constant(seed in 0u64..1000, x0 in 0.0f64..1.0, x1 in 0.0f64..1.0, eps in 1e-9f64..1e-3) {
        let sample = random_sample(150, 40, seed);
        let forest = fit_forest(&sample, &ForestConfig {
            n_trees: 6,
            min_node_size: Some(3),
            seed,
            ..ForestConfig::default()
        }).unwrap();
        let a = [x0, x1];
        let b = [x0 + eps, x1];
        if forest.leaf_signature(&a).unwrap() == forest.leaf_signature(&b).unwrap() {
            prop_assert_eq!(forest.forest_weights(&a).ok(), forest.forest_weights(&b).ok());
        }
    }

    #[test]
    fn honesty_sides_partition_the_psus(seed in 0u64..1000) {
        let sample = random_sample(80, 12, seed);
        let forest = fit_forest(&sample, &ForestConfig { n_trees: 5, seed, ..ForestConfig::default() }).unwrap();
        let all: BTreeSet<PsuKey> = (0..sample.len()).map(|i| sample.psu_key(i)).collect();
        for t in forest.trees() {
            let p = &t.partition;
            prop_assert!(p.split_psus.is_disjoint(&p.est_psus));
            prop_assert!(!p.split_psus.is_empty() && !p.est_psus.is_empty());
            let union: BTreeSet<PsuKey> = p.split_psus.union(&p.est_psus).copied().collect();
            prop_assert_eq!(&union, &all);
        }
    }
}
