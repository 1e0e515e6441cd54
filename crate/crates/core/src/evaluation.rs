//! Scoring unsupervised trees against held-out labels, and the repeated
//! ab-initio trial protocol with its reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::clustering::MAX_EXACT_K;
use crate::dataset::{generate_synthetic, split, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::hierarchy::{tandem_train, ClassPath, HierarchyConfig, NodeFailure, TrainedNode};
use crate::mnn::MirrorReport;
use crate::numerics::Rng;

/// Rng stream reserved for corpus generation and splitting; trials use streams `0..n`.
pub const CORPUS_STREAM: u64 = u64::MAX;

/// Label permutation maximising agreement, and the number of agreements.
/// `mapping[p]` is the truth label assigned to predicted label `p`.
pub fn best_permutation(predicted: &[usize], truth: &[usize], k: usize) -> Result<(Vec<usize>, usize)> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            context: "permutation_accuracy labels",
            expected: truth.len(),
            found: predicted.len(),
        });
    }
    if k > MAX_EXACT_K {
        return Err(Error::UnsupportedSize { k, max: MAX_EXACT_K });
    }
    if let Some(&bad) = predicted.iter().chain(truth).find(|&&l| l >= k) {
        return Err(Error::Precondition(format!("label {bad} is outside 0..{k}")));
    }
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &t) in predicted.iter().zip(truth) {
        confusion[p][t] += 1;
    }
    let mut best = ((0..k).collect::<Vec<_>>(), 0usize);
    let mut first = true;
    for perm in (0..k).permutations(k) {
        let hits: usize = perm.iter().enumerate().map(|(p, &t)| confusion[p][t]).sum();
        if first || hits > best.1 {
            best = (perm, hits);
            first = false;
        }
    }
    Ok(best)
}

/// Fraction of agreements under the best relabeling of `predicted`.
pub fn permutation_accuracy(predicted: &[usize], truth: &[usize], k: usize) -> Result<f64> {
    if predicted.is_empty() {
        return Err(Error::Precondition("no labels to score".into()));
    }
    let (_, hits) = best_permutation(predicted, truth, k)?;
    Ok(hits as f64 / predicted.len() as f64)
}

/// Score of one level-two node (the subtree under root cluster `cluster`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeScore {
    pub cluster: usize,
    /// Class the root's best relabeling gives this cluster.
    pub home_class: usize,
    pub routed: usize,
    /// Routed samples whose true class is the home class.
    pub correctly_routed: usize,
    /// Routed samples whose subclass is also matched at this node.
    pub matched: usize,
    pub has_child: bool,
}

impl NodeScore {
    pub fn accuracy(&self) -> f64 {
        self.matched as f64 / self.routed as f64
    }

    pub fn routing_ceiling(&self) -> f64 {
        self.correctly_routed as f64 / self.routed as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyScores {
    pub level1_accuracy: f64,
    /// Mean over level-two nodes; misrouted samples count as errors.
    pub level2_accuracy: f64,
    /// Fraction of samples matched at both levels.
    pub leaf_accuracy: f64,
    pub nodes: Vec<NodeScore>,
    /// Per distinct path: (samples on it, samples matched at both levels).
    #[serde(skip)]
    pub paths: BTreeMap<ClassPath, (usize, usize)>,
}

/// Per-level accuracies of `root` on a labelled dataset.
///
/// Level one compares root clusters with classes. Each root cluster is
/// given the class of its best relabeling; its child is then scored on all
/// samples routed to it, where a sample of a different class can never
/// count as correct.
pub fn evaluate_hierarchy(root: &TrainedNode, dataset: &Dataset) -> Result<HierarchyScores> {
    let labels = dataset
        .labels()
        .ok_or_else(|| Error::Evaluation("dataset carries no labels".into()))?;
    if dataset.is_empty() {
        return Err(Error::Evaluation("empty dataset".into()));
    }
    let paths = dataset
        .samples()
        .iter()
        .map(|x| root.classify(x))
        .collect::<Result<Vec<_>>>()?;
    let n = paths.len();

    let classes: Vec<usize> = labels.iter().map(|l| l.class).collect();
    let top: Vec<usize> = paths.iter().map(|p| p.labels()[0]).collect();
    let k1 = root.clustering.k().max(classes.iter().max().map_or(0, |m| m + 1));
    let (class_of, level1_hits) = best_permutation(&top, &classes, k1)?;

    let mut matched_leaf = vec![false; n];
    let mut nodes = Vec::new();
    for cluster in 0..root.clustering.k() {
        let routed: Vec<usize> = (0..n).filter(|&i| top[i] == cluster).collect();
        if routed.is_empty() {
            continue;
        }
        let home_class = class_of[cluster];
        let correctly_routed = routed.iter().filter(|&&i| classes[i] == home_class).count();
        let child = root.children.get(&cluster);
        let mut matched = 0;
        if let Some(child) = child {
            let sub_pred: Vec<usize> = routed.iter().map(|&i| paths[i].labels()[1]).collect();
            // misrouted samples get a truth label no prediction can take
            let max_sub = labels.iter().map(|l| l.subclass).max().unwrap_or(0);
            let k2 = child.clustering.k().max(max_sub + 1);
            let sentinel = k2;
            let sub_truth: Vec<usize> = routed
                .iter()
                .map(|&i| if classes[i] == home_class { labels[i].subclass } else { sentinel })
                .collect();
            let sub_of = best_permutation_with_sentinel(&sub_pred, &sub_truth, k2)?;
            for (j, &i) in routed.iter().enumerate() {
                if sub_truth[j] != sentinel && sub_of[sub_pred[j]] == sub_truth[j] {
                    matched += 1;
                    matched_leaf[i] = true;
                }
            }
        }
        nodes.push(NodeScore {
            cluster,
            home_class,
            routed: routed.len(),
            correctly_routed,
            matched,
            has_child: child.is_some(),
        });
    }

    let mut path_stats: BTreeMap<ClassPath, (usize, usize)> = BTreeMap::new();
    for (i, p) in paths.iter().enumerate() {
        let e = path_stats.entry(p.clone()).or_default();
        e.0 += 1;
        e.1 += usize::from(matched_leaf[i]);
    }
    let level2_accuracy = if nodes.is_empty() {
        0.0
    } else {
        nodes.iter().map(NodeScore::accuracy).sum::<f64>() / nodes.len() as f64
    };
    Ok(HierarchyScores {
        level1_accuracy: level1_hits as f64 / n as f64,
        level2_accuracy,
        leaf_accuracy: matched_leaf.iter().filter(|&&m| m).count() as f64 / n as f64,
        nodes,
        paths: path_stats,
    })
}

/// Best permutation over `0..k` where truth entries equal to `k` never match.
fn best_permutation_with_sentinel(predicted: &[usize], truth: &[usize], k: usize) -> Result<Vec<usize>> {
    let pairs: Vec<(usize, usize)> = predicted
        .iter()
        .zip(truth)
        .filter(|(_, &t)| t < k)
        .map(|(&p, &t)| (p, t))
        .collect();
    let (p, t): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
    Ok(best_permutation(&p, &t, k)?.0)
}

/// Where a trial's corpus comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Corpus {
    Synthetic(SyntheticSpec),
    Loaded(Dataset),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMirror {
    pub path: Vec<usize>,
    pub report: MirrorReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial_index: u64,
    pub level1_accuracy_train: f64,
    pub level1_accuracy_test: f64,
    /// Over the union of training and test samples.
    pub level1_accuracy_all: f64,
    pub level2_accuracy_train: f64,
    pub level2_accuracy_test: f64,
    pub level2_accuracy_all: f64,
    pub mirror_reports: Vec<NodeMirror>,
    pub node_failures: Vec<NodeFailure>,
    /// Not serialized, so reports stay reproducible byte for byte.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl TrialReport {
    pub const METRICS: [&'static str; 6] = [
        "level1_accuracy_train",
        "level1_accuracy_test",
        "level1_accuracy_all",
        "level2_accuracy_train",
        "level2_accuracy_test",
        "level2_accuracy_all",
    ];

    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "level1_accuracy_train" => self.level1_accuracy_train,
            "level1_accuracy_test" => self.level1_accuracy_test,
            "level1_accuracy_all" => self.level1_accuracy_all,
            "level2_accuracy_train" => self.level2_accuracy_train,
            "level2_accuracy_test" => self.level2_accuracy_test,
            "level2_accuracy_all" => self.level2_accuracy_all,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedTrial {
    pub trial_index: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub base_seed: u64,
    pub train_samples: usize,
    pub test_samples: usize,
    pub trials: Vec<TrialReport>,
    pub failed_trials: Vec<FailedTrial>,
    /// Statistics over successful trials only.
    pub summary: Vec<MetricSummary>,
}

/// Trains and scores one tree from scratch on stream `(base_seed, trial_index)`.
pub fn run_trial(
    train: &Dataset,
    test: &Dataset,
    config: &HierarchyConfig,
    base_seed: u64,
    trial_index: u64,
) -> Result<TrialReport> {
    let started = Instant::now();
    let mut rng = Rng::stream(base_seed, trial_index);
    let outcome = tandem_train(train.samples(), config, &mut rng)?;
    let all = train.concat(test)?;
    let on_train = evaluate_hierarchy(&outcome.root, train)?;
    let on_test = evaluate_hierarchy(&outcome.root, test)?;
    let on_all = evaluate_hierarchy(&outcome.root, &all)?;
    Ok(TrialReport {
        trial_index,
        level1_accuracy_train: on_train.level1_accuracy,
        level1_accuracy_test: on_test.level1_accuracy,
        level1_accuracy_all: on_all.level1_accuracy,
        level2_accuracy_train: on_train.level2_accuracy,
        level2_accuracy_test: on_test.level2_accuracy,
        level2_accuracy_all: on_all.level2_accuracy,
        mirror_reports: outcome
            .root
            .nodes()
            .into_iter()
            .map(|n| NodeMirror {
                path: n.path.clone(),
                report: n.mirror_report.clone(),
            })
            .collect(),
        node_failures: outcome.failures,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// Builds the train/test corpus for a trial suite from the reserved stream.
pub fn prepare_corpus(corpus: &Corpus, train_fraction: f64, base_seed: u64) -> Result<(Dataset, Dataset)> {
    let mut rng = Rng::stream(base_seed, CORPUS_STREAM);
    let dataset = match corpus {
        Corpus::Synthetic(spec) => generate_synthetic(spec, &mut rng)?,
        Corpus::Loaded(ds) => ds.clone(),
    };
    if dataset.labels().is_none() {
        return Err(Error::Evaluation("trial corpus must be labelled".into()));
    }
    split(&dataset, train_fraction, &mut rng)
}

/// `n` independent ab-initio trials on one fixed corpus split.
pub fn run_trials(
    n: u64,
    corpus: &Corpus,
    train_fraction: f64,
    config: &HierarchyConfig,
    base_seed: u64,
) -> Result<AggregateReport> {
    if n == 0 {
        return Err(Error::Precondition("need at least one trial".into()));
    }
    config.validate()?;
    let (train, test) = prepare_corpus(corpus, train_fraction, base_seed)?;
    let mut trials = Vec::new();
    let mut failed_trials = Vec::new();
    for t in 0..n {
        match run_trial(&train, &test, config, base_seed, t) {
            Ok(report) => trials.push(report),
            Err(e) => failed_trials.push(FailedTrial {
                trial_index: t,
                message: e.to_string(),
            }),
        }
    }
    Ok(aggregate(base_seed, train.len(), test.len(), trials, failed_trials))
}

pub fn aggregate(
    base_seed: u64,
    train_samples: usize,
    test_samples: usize,
    trials: Vec<TrialReport>,
    failed_trials: Vec<FailedTrial>,
) -> AggregateReport {
    let summary = if trials.is_empty() {
        Vec::new()
    } else {
        TrialReport::METRICS
            .iter()
            .map(|&name| {
                let values: Vec<f64> = trials.iter().map(|t| t.metric(name).expect("known metric")).collect();
                summarize(name, &values)
            })
            .collect()
    };
    AggregateReport {
        base_seed,
        train_samples,
        test_samples,
        trials,
        failed_trials,
        summary,
    }
}

fn summarize(name: &str, values: &[f64]) -> MetricSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    MetricSummary {
        metric: name.to_string(),
        mean,
        std_dev: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

impl AggregateReport {
    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.summary.iter().find(|s| s.metric == metric).map(|s| s.mean)
    }

    /// Plain-text summary laid out like a results table: level, training-set
    /// success rate, and success rate over training and test together.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let cell = |m: &str| {
            self.summary
                .iter()
                .find(|s| s.metric == m)
                .map_or_else(|| "n/a".to_string(), |s| format!("{:5.1}% ± {:4.1}", 100.0 * s.mean, 100.0 * s.std_dev))
        };
        let _ = writeln!(
            out,
            "Trials: {} succeeded, {} failed (base seed {})",
            self.trials.len(),
            self.failed_trials.len(),
            self.base_seed
        );
        let _ = writeln!(out, "Samples: {} training, {} testing", self.train_samples, self.test_samples);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<10} {:>16} {:>16} {:>16}", "Level", "Training", "Testing", "Train + test");
        for (level, prefix) in [("I", "level1"), ("II", "level2")] {
            let _ = writeln!(
                out,
                "{:<10} {:>16} {:>16} {:>16}",
                level,
                cell(&format!("{prefix}_accuracy_train")),
                cell(&format!("{prefix}_accuracy_test")),
                cell(&format!("{prefix}_accuracy_all")),
            );
        }
        for f in &self.failed_trials {
            let _ = writeln!(out, "trial {} failed: {}", f.trial_index, f.message);
        }
        out
    }

    /// One row per successful trial.
    pub fn write_trials_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["trial".to_string()];
        header.extend(TrialReport::METRICS.iter().map(|s| s.to_string()));
        header.push("nodes".into());
        header.push("node_failures".into());
        w.write_record(&header).map_err(std::io::Error::other)?;
        for t in &self.trials {
            let mut row = vec![t.trial_index.to_string()];
            row.extend(TrialReport::METRICS.iter().map(|m| t.metric(m).expect("known metric").to_string()));
            row.push(t.mirror_reports.len().to_string());
            row.push(t.node_failures.len().to_string());
            w.write_record(&row).map_err(std::io::Error::other)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accuracy_examples() {
        let truth = [0, 1, 2, 2, 1, 0];
        assert_eq!(permutation_accuracy(&truth, &truth, 3).unwrap(), 1.0);
        let permuted: Vec<usize> = truth.iter().map(|&l| [2, 0, 1][l]).collect();
        assert_eq!(permutation_accuracy(&permuted, &truth, 3).unwrap(), 1.0);
        assert_eq!(permutation_accuracy(&[0, 0, 1, 1], &[1, 1, 1, 0], 2).unwrap(), 0.75);
    }

    #[test]
    fn accuracy_errors() {
        assert!(matches!(
            permutation_accuracy(&[0; 4], &[0; 4], 9),
            Err(Error::UnsupportedSize { k: 9, .. })
        ));
        assert!(permutation_accuracy(&[0, 1], &[0], 2).is_err());
        assert!(permutation_accuracy(&[0, 3], &[0, 1], 2).is_err());
        assert!(permutation_accuracy(&[], &[], 2).is_err());
    }

    #[test]
    fn single_cluster_baseline() {
        let truth: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let acc = permutation_accuracy(&[0; 30], &truth, 3).unwrap();
        assert!((acc - 1.0 / 3.0).abs() < 1e-12);
    }

    fn labels(k: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        (1usize..40).prop_flat_map(move |n| (prop::collection::vec(0..k, n), prop::collection::vec(0..k, n)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn accuracy_dominates_identity_mapping((pred, truth) in labels(4)) {
            let identity = pred.iter().zip(&truth).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64;
            prop_assert!(permutation_accuracy(&pred, &truth, 4).unwrap() >= identity);
        }

        #[test]
        fn accuracy_ignores_relabeling((pred, truth) in labels(4), perm in Just((0..4usize).collect::<Vec<_>>()).prop_shuffle()) {
            let relabeled: Vec<usize> = pred.iter().map(|&p| perm[p]).collect();
            prop_assert_eq!(
                permutation_accuracy(&pred, &truth, 4).unwrap(),
                permutation_accuracy(&relabeled, &truth, 4).unwrap()
            );
        }
    }

    #[test]
    fn summary_statistics() {
        let s = summarize("x", &[0.5, 1.0]);
        assert_eq!(s.mean, 0.75);
        assert!((s.std_dev - (0.125f64).sqrt()).abs() < 1e-15);
        assert_eq!((s.min, s.max), (0.5, 1.0));
        assert_eq!(summarize("x", &[0.3]).std_dev, 0.0);
    }
}
