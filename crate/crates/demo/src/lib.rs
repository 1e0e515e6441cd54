//! Browser demo: averaged Forgy clustering on 2-D blobs, and a small tandem
//! tree whose root bottleneck is two units wide so its codes can be plotted.
//!
//! Every export returns a JSON string; the `*_json` functions are the same
//! operations for native callers and tests.

use serde::Serialize;
use tandem_core::clustering::{averaged_forgy_runs, ForgyParams};
use tandem_core::dataset::{generate_synthetic, SyntheticSpec};
use tandem_core::evaluation::{evaluate_hierarchy, permutation_accuracy};
use tandem_core::hierarchy::{tandem_train, ChildInput, HierarchyConfig, NodeConfig};
use tandem_core::mnn::MnnConfig;
use tandem_core::numerics::Rng;
use wasm_bindgen::prelude::*;

pub const TREE_WIDTH: usize = 8;

#[derive(Debug, Serialize)]
pub struct ForgyView {
    pub points: Vec<Vec<f64>>,
    pub classes: Vec<usize>,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub averaged: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub accuracy: f64,
}

#[derive(Debug, Serialize)]
pub struct TreeView {
    /// Root bottleneck code of every sample.
    pub codes: Vec<Vec<f64>>,
    pub classes: Vec<usize>,
    pub subclasses: Vec<usize>,
    pub paths: Vec<String>,
    pub root_centroids: Vec<Vec<f64>>,
    pub epochs: usize,
    pub converged: bool,
    pub level1_accuracy: f64,
    pub level2_accuracy: f64,
    pub failures: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Failure {
    error: String,
}

fn to_json<T: Serialize>(result: tandem_core::Result<T>) -> String {
    match result {
        Ok(v) => serde_json::to_string(&v),
        Err(e) => serde_json::to_string(&Failure { error: e.to_string() }),
    }
    .unwrap_or_else(|e| format!(r#"{{"error":"{e}"}}"#))
}

fn blobs(seed: u64, classes: usize, per_class: usize, noise: f64) -> tandem_core::Result<tandem_core::Dataset> {
    let spec = SyntheticSpec {
        width: 2,
        classes,
        subclasses_per_class: 1,
        samples_per_subclass: per_class,
        class_separation: 0.35,
        subclass_separation: 0.1,
        noise_sigma: noise,
    };
    generate_synthetic(&spec, &mut Rng::new(seed))
}

/// Two Forgy runs on 2-D blobs, their matched centroids averaged.
pub fn forgy(seed: u64, k: usize, per_class: usize, noise: f64) -> tandem_core::Result<ForgyView> {
    let data = blobs(seed, k, per_class, noise)?;
    let runs = averaged_forgy_runs(data.samples(), &ForgyParams::new(k, 0.05), &mut Rng::new(seed ^ 0x5eed))?;
    let classes: Vec<usize> = data.labels().unwrap_or_default().iter().map(|l| l.class).collect();
    let accuracy = permutation_accuracy(&runs.result.assignments, &classes, k)?;
    Ok(ForgyView {
        points: data.samples().to_vec(),
        classes,
        first: runs.first.centroids,
        second: runs.second.centroids,
        averaged: runs.averaged_centroids,
        assignments: runs.result.assignments,
        accuracy,
    })
}

pub fn tree_config(mirror_threshold: f64, learning_rate: f64) -> HierarchyConfig {
    let mut root = NodeConfig::new(
        MnnConfig::new(vec![TREE_WIDTH, 6, 2, TREE_WIDTH], mirror_threshold, learning_rate),
        ForgyParams::new(3, 0.1),
    );
    root.child_input = ChildInput::RawPassthrough;
    root.mnn.max_epochs = 1500;
    root.accept_unconverged = true;
    let mut child = NodeConfig::new(
        MnnConfig::new(vec![TREE_WIDTH, 5, 3, TREE_WIDTH], 0.2, learning_rate),
        ForgyParams::new(2, 0.05),
    );
    child.mnn.max_epochs = 1500;
    child.accept_unconverged = true;
    HierarchyConfig {
        levels: vec![root, child],
        max_depth: 2,
    }
}

/// Trains a two-level tree on an 8-D corpus of three classes with two
/// subclasses each and scores it against the generating labels.
pub fn tree(seed: u64, mirror_threshold: f64, learning_rate: f64) -> tandem_core::Result<TreeView> {
    let spec = SyntheticSpec {
        width: TREE_WIDTH,
        samples_per_subclass: 30,
        class_separation: 0.8,
        subclass_separation: 0.4,
        noise_sigma: 0.04,
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec, &mut Rng::new(seed))?;
    let config = tree_config(mirror_threshold, learning_rate);
    config.validate()?;
    let outcome = tandem_train(data.samples(), &config, &mut Rng::new(seed.wrapping_add(100)))?;
    let root = &outcome.root;
    let scores = evaluate_hierarchy(root, &data)?;
    let labels = data.labels().unwrap_or_default();
    Ok(TreeView {
        codes: data.samples().iter().map(|x| root.mnn.encode(x)).collect::<tandem_core::Result<_>>()?,
        classes: labels.iter().map(|l| l.class).collect(),
        subclasses: labels.iter().map(|l| l.subclass).collect(),
        paths: data
            .samples()
            .iter()
            .map(|x| root.classify(x).map(|p| p.to_string()))
            .collect::<tandem_core::Result<_>>()?,
        root_centroids: root.clustering.centroids.clone(),
        epochs: root.mirror_report.epochs_run,
        converged: root.mirror_report.converged,
        level1_accuracy: scores.level1_accuracy,
        level2_accuracy: scores.level2_accuracy,
        failures: outcome.failures.iter().map(|f| f.message.clone()).collect(),
    })
}

/// 2-D blob corpus as CSV, labels in the last two columns.
pub fn blobs_csv(seed: u64, k: usize, per_class: usize, noise: f64) -> tandem_core::Result<String> {
    blobs(seed, k, per_class, noise)?.to_csv_string()
}

#[wasm_bindgen]
pub fn forgy_json(seed: u32, k: u32, per_class: u32, noise: f64) -> String {
    to_json(forgy(seed.into(), k as usize, per_class as usize, noise))
}

#[wasm_bindgen]
pub fn tree_json(seed: u32, mirror_threshold: f64, learning_rate: f64) -> String {
    to_json(tree(seed.into(), mirror_threshold, learning_rate))
}

#[wasm_bindgen]
pub fn blobs_csv_text(seed: u32, k: u32, per_class: u32, noise: f64) -> String {
    blobs_csv(seed.into(), k as usize, per_class as usize, noise).unwrap_or_else(|e| format!("error: {e}"))
}
