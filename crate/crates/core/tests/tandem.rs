//! Hierarchy training and scoring on desk-scale synthetic corpora.

use std::collections::BTreeSet;

use tandem_core::clustering::ForgyParams;
use tandem_core::dataset::{generate_synthetic, Dataset, Label, SyntheticSpec};
use tandem_core::evaluation::{evaluate_hierarchy, run_trials, Corpus};
use tandem_core::hierarchy::{tandem_train, HierarchyConfig, NodeConfig, TandemOutcome};
use tandem_core::mnn::MnnConfig;
use tandem_core::numerics::Rng;

fn desk_config() -> HierarchyConfig {
    let mut l1 = NodeConfig::new(MnnConfig::new(vec![20, 12, 8, 20], 0.3, 0.25), ForgyParams::new(3, 0.3));
    l1.mnn.max_epochs = 2000;
    let mut l2 = NodeConfig::new(MnnConfig::new(vec![8, 6, 4, 8], 0.15, 0.25), ForgyParams::new(2, 0.1));
    l2.mnn.max_epochs = 2000;
    HierarchyConfig {
        levels: vec![l1, l2],
        max_depth: 2,
    }
}

fn corpus(per: usize, seed: u64) -> Dataset {
    let spec = SyntheticSpec {
        samples_per_subclass: per,
        ..SyntheticSpec::default()
    };
    generate_synthetic(&spec, &mut Rng::new(seed)).unwrap()
}

fn train(data: &Dataset, seed: u64) -> TandemOutcome {
    tandem_train(data.samples(), &desk_config(), &mut Rng::new(seed)).unwrap()
}

#[test]
fn desk_tree_has_three_children_of_two_clusters() {
    let data = corpus(85, 1);
    let out = train(&data, 3);
    assert!(out.failures.is_empty(), "{:?}", out.failures);
    assert_eq!(out.root.clustering.k(), 3);
    assert_eq!(out.root.children.len(), 3);
    for child in out.root.children.values() {
        assert_eq!(child.clustering.k(), 2);
        assert_eq!(child.input_width(), 8);
        assert_eq!(child.level, 1);
    }
    assert_eq!(out.root.depth(), 2);
    out.root.check().unwrap();
}

#[test]
fn classify_agrees_with_training_paths() {
    let data = corpus(85, 1);
    let out = train(&data, 3);
    let trained = out.root.training_paths();
    assert_eq!(trained.len(), data.len());
    let agree = data
        .samples()
        .iter()
        .zip(&trained)
        .filter(|(x, p)| out.root.classify(x).unwrap() == **p)
        .count();
    assert!(agree as f64 / data.len() as f64 >= 0.93, "{agree}/{}", data.len());
}

#[test]
fn leaves_partition_the_input() {
    let data = corpus(40, 4);
    let out = train(&data, 8);
    let paths: Vec<_> = data.samples().iter().map(|x| out.root.classify(x).unwrap()).collect();
    let leaves: BTreeSet<_> = paths.iter().cloned().collect();
    let total: usize = leaves.iter().map(|l| paths.iter().filter(|p| *p == l).count()).sum();
    assert_eq!(total, data.len());
    for p in &paths {
        assert!(p.len() == 1 || p.len() == 2);
        assert!(p.labels()[0] < 3);
        if p.len() == 2 {
            assert!(p.labels()[1] < 2);
        }
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let data = corpus(30, 2);
    let a = train(&data, 11);
    let b = train(&data, 11);
    assert_eq!(a.root.to_json().unwrap(), b.root.to_json().unwrap());
    let c = train(&data, 12);
    assert_ne!(a.root.to_json().unwrap(), c.root.to_json().unwrap());
}

#[test]
fn labels_taken_from_the_tree_score_perfectly() {
    let data = corpus(85, 1);
    let out = train(&data, 3);
    assert_eq!(out.root.children.len(), 3);
    let labels = data
        .samples()
        .iter()
        .map(|x| {
            let p = out.root.classify(x).unwrap();
            Label {
                class: p.labels()[0],
                subclass: p.labels()[1],
            }
        })
        .collect();
    let relabeled = Dataset::new(data.samples().to_vec(), Some(labels)).unwrap();
    let s = evaluate_hierarchy(&out.root, &relabeled).unwrap();
    assert_eq!(s.level1_accuracy, 1.0);
    assert_eq!(s.level2_accuracy, 1.0);
    assert_eq!(s.leaf_accuracy, 1.0);
}

#[test]
fn tree_routing_everything_to_one_cluster_scores_one_third() {
    let data = corpus(30, 5);
    let mut out = train(&data, 6);
    // codes live in the open unit cube, so far-away centroids are never nearest
    let width = out.root.clustering.centroids[0].len();
    out.root.clustering.centroids[1] = vec![100.0; width];
    out.root.clustering.centroids[2] = vec![-100.0; width];
    let s = evaluate_hierarchy(&out.root, &data).unwrap();
    assert!((s.level1_accuracy - 1.0 / 3.0).abs() < 1e-12, "{}", s.level1_accuracy);
    assert_eq!(s.nodes.len(), 1);
    assert_eq!(s.nodes[0].routed, data.len());
    assert!(s.level2_accuracy <= 1.0 / 3.0 + 1e-12);
}

#[test]
fn path_counts_decompose_leaf_accuracy() {
    let data = corpus(40, 7);
    let out = train(&data, 2);
    let s = evaluate_hierarchy(&out.root, &data).unwrap();
    let routed: usize = s.paths.values().map(|v| v.0).sum();
    let correct: usize = s.paths.values().map(|v| v.1).sum();
    assert_eq!(routed, data.len());
    assert!((correct as f64 / data.len() as f64 - s.leaf_accuracy).abs() < 1e-12);
    for node in &s.nodes {
        assert!(node.matched <= node.correctly_routed);
        assert!(node.accuracy() <= node.routing_ceiling() + 1e-12);
    }
    assert!(s.level1_accuracy >= 0.9, "{}", s.level1_accuracy);
}

#[test]
fn single_trial_summary_equals_the_trial() {
    let spec = SyntheticSpec {
        samples_per_subclass: 30,
        ..SyntheticSpec::default()
    };
    let report = run_trials(1, &Corpus::Synthetic(spec), 0.7, &desk_config(), 7).unwrap();
    assert_eq!(report.trials.len(), 1);
    for s in &report.summary {
        assert_eq!(Some(s.mean), report.trials[0].metric(&s.metric));
        assert_eq!(s.min, s.max);
        assert_eq!(s.std_dev, 0.0);
    }
}

#[test]
fn repeated_trial_suites_are_identical() {
    let spec = SyntheticSpec {
        samples_per_subclass: 30,
        ..SyntheticSpec::default()
    };
    let corpus = Corpus::Synthetic(spec);
    let a = run_trials(2, &corpus, 0.7, &desk_config(), 3).unwrap();
    let b = run_trials(2, &corpus, 0.7, &desk_config(), 3).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
