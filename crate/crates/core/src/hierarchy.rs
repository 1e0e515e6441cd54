//! The classifier tree. Every node mirror-trains its network on the samples
//! it receives, clusters their bottleneck codes, and passes each cluster's
//! members (as codes, or as the node's own inputs) to a child one level down.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clustering::{assign, averaged_forgy, Clustering, ForgyParams};
use crate::error::{Error, Result};
use crate::mnn::{train_mirror, MirrorReport, Mnn, MnnConfig};
use crate::numerics::Rng;

pub const DEFAULT_MIN_SAMPLES_TO_SPLIT: usize = 20;

/// What a node hands to its children.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChildInput {
    /// The node's bottleneck codes.
    #[default]
    ReducedCode,
    /// The vectors the node itself received.
    RawPassthrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub mnn: MnnConfig,
    pub forgy: ForgyParams,
    pub child_input: ChildInput,
    pub min_samples_to_split: usize,
    /// Keep a network that missed the mirror criterion instead of failing the node.
    pub accept_unconverged: bool,
}

impl NodeConfig {
    pub fn new(mnn: MnnConfig, forgy: ForgyParams) -> Self {
        Self {
            mnn,
            forgy,
            child_input: ChildInput::ReducedCode,
            min_samples_to_split: DEFAULT_MIN_SAMPLES_TO_SPLIT,
            accept_unconverged: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mnn.validate()?;
        self.forgy.validate()?;
        if self.min_samples_to_split < self.forgy.k {
            return Err(Error::InvalidConfig(format!(
                "min_samples_to_split ({}) must be >= k ({})",
                self.min_samples_to_split, self.forgy.k
            )));
        }
        Ok(())
    }

    /// Width of the vectors this node passes to its children.
    pub fn child_width(&self) -> usize {
        match self.child_input {
            ChildInput::ReducedCode => self.mnn.bottleneck_width(),
            ChildInput::RawPassthrough => self.mnn.input_width(),
        }
    }
}

/// One node configuration per level; level `i` applies to every node at depth `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    pub levels: Vec<NodeConfig>,
    pub max_depth: usize,
}

impl HierarchyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::InvalidConfig("max_depth must be >= 1".into()));
        }
        if self.levels.len() < self.max_depth {
            return Err(Error::InvalidConfig(format!(
                "max_depth {} needs {} level configs, got {}",
                self.max_depth,
                self.max_depth,
                self.levels.len()
            )));
        }
        for (i, level) in self.levels.iter().enumerate() {
            level.validate().map_err(|e| {
                let detail = match e {
                    Error::InvalidConfig(m) => m,
                    other => other.to_string(),
                };
                Error::InvalidConfig(format!("level {}: {detail}", i + 1))
            })?;
        }
        for (i, pair) in self.levels.windows(2).enumerate() {
            let (upper, lower) = (&pair[0], &pair[1]);
            if upper.child_width() != lower.mnn.input_width() {
                return Err(Error::InvalidConfig(format!(
                    "level {} feeds {}-wide vectors but level {} expects {}",
                    i + 1,
                    upper.child_width(),
                    i + 2,
                    lower.mnn.input_width()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedNode {
    pub level: usize,
    /// Cluster labels leading from the root to this node.
    pub path: Vec<usize>,
    pub mnn: Mnn,
    pub mirror_report: MirrorReport,
    /// Clustering of the node's training codes.
    pub clustering: Clustering,
    pub child_input: ChildInput,
    pub children: BTreeMap<usize, TrainedNode>,
}

/// Cluster labels collected from the root towards a leaf.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassPath(pub Vec<usize>);

impl ClassPath {
    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn level(&self, depth: usize) -> Option<usize> {
        self.0.get(depth).copied()
    }
}

impl std::fmt::Display for ClassPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        f.write_str(&parts.join("/"))
    }
}

/// A subtree that could not be trained; its parent is otherwise intact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFailure {
    pub path: Vec<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TandemOutcome {
    pub root: TrainedNode,
    pub failures: Vec<NodeFailure>,
}

/// Trains a single node with no children.
pub fn train_node(data: &[Vec<f64>], config: &NodeConfig, rng: &mut Rng) -> Result<TrainedNode> {
    train_node_at(data, config, rng, 0, Vec::new())
}

fn train_node_at(
    data: &[Vec<f64>],
    config: &NodeConfig,
    rng: &mut Rng,
    level: usize,
    path: Vec<usize>,
) -> Result<TrainedNode> {
    let annotate = |e: Error| e.at_node(&path);
    config.validate().map_err(annotate)?;
    if data.len() < config.min_samples_to_split {
        return Err(annotate(Error::Precondition(format!(
            "{} samples is below min_samples_to_split = {}",
            data.len(),
            config.min_samples_to_split
        ))));
    }

    let mnn = Mnn::init(config.mnn.clone(), rng).map_err(annotate)?;
    let (mnn, mirror_report) = match train_mirror(mnn, data, &config.mnn, rng) {
        Ok(trained) => trained,
        Err(Error::TrainingFailure { report, mnn }) if config.accept_unconverged => (*mnn, report),
        Err(e) => return Err(annotate(e)),
    };
    let codes = data
        .iter()
        .map(|x| mnn.encode(x))
        .collect::<Result<Vec<_>>>()
        .map_err(annotate)?;
    let clustering = averaged_forgy(&codes, &config.forgy, rng).map_err(annotate)?;
    Ok(TrainedNode {
        level,
        path,
        mnn,
        mirror_report,
        clustering,
        child_input: config.child_input,
        children: BTreeMap::new(),
    })
}

/// Trains the root on `data`, then recursively a child for every cluster
/// large enough to split, down to `max_depth` levels. A failing child is
/// recorded and left out without affecting its siblings.
pub fn tandem_train(data: &[Vec<f64>], config: &HierarchyConfig, rng: &mut Rng) -> Result<TandemOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Precondition("tandem training needs data".into()));
    }
    let mut root = train_node_at(data, &config.levels[0], rng, 0, Vec::new())?;
    let mut failures = Vec::new();
    grow(&mut root, data, config, rng, &mut failures)?;
    Ok(TandemOutcome { root, failures })
}

fn grow(
    node: &mut TrainedNode,
    inputs: &[Vec<f64>],
    config: &HierarchyConfig,
    rng: &mut Rng,
    failures: &mut Vec<NodeFailure>,
) -> Result<()> {
    let child_level = node.level + 1;
    if child_level >= config.max_depth {
        return Ok(());
    }
    let child_config = &config.levels[child_level];
    let forwarded: Vec<Vec<f64>> = match node.child_input {
        ChildInput::ReducedCode => inputs.iter().map(|x| node.mnn.encode(x)).collect::<Result<_>>()?,
        ChildInput::RawPassthrough => inputs.to_vec(),
    };
    for (label, members) in node.clustering.members().into_iter().enumerate() {
        // one stream per cluster, drawn whether or not the child gets trained
        let mut child_rng = rng.split();
        if members.len() < child_config.min_samples_to_split {
            continue;
        }
        let child_data: Vec<Vec<f64>> = members.iter().map(|&i| forwarded[i].clone()).collect();
        let mut path = node.path.clone();
        path.push(label);
        match train_node_at(&child_data, child_config, &mut child_rng, child_level, path.clone()) {
            Ok(mut child) => {
                grow(&mut child, &child_data, config, &mut child_rng, failures)?;
                node.children.insert(label, child);
            }
            Err(e) => failures.push(NodeFailure {
                path,
                message: e.to_string(),
            }),
        }
    }
    Ok(())
}

impl TrainedNode {
    pub fn input_width(&self) -> usize {
        self.mnn.input_width()
    }

    /// Width of what this node forwards to its children.
    pub fn child_width(&self) -> usize {
        match self.child_input {
            ChildInput::ReducedCode => self.mnn.code_width(),
            ChildInput::RawPassthrough => self.mnn.input_width(),
        }
    }

    /// Cluster of a single vector at this node.
    pub fn label(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let code = self.mnn.encode(x)?;
        let label = assign(std::slice::from_ref(&code), &self.clustering.centroids)[0];
        Ok((label, code))
    }

    /// Routes `x` from this node down to a leaf, collecting one label per level.
    /// Stops early where a cluster has no child.
    pub fn classify(&self, x: &[f64]) -> Result<ClassPath> {
        let mut labels = Vec::new();
        let mut node = self;
        let mut input = x.to_vec();
        loop {
            let (label, code) = node.label(&input)?;
            labels.push(label);
            let Some(child) = node.children.get(&label) else {
                break;
            };
            if node.child_input == ChildInput::ReducedCode {
                input = code;
            }
            node = child;
        }
        Ok(ClassPath(labels))
    }

    /// The label path each training sample received while the tree was built,
    /// indexed like the root's training data.
    pub fn training_paths(&self) -> Vec<ClassPath> {
        let n = self.clustering.assignments.len();
        let mut paths = vec![Vec::new(); n];
        self.collect_training_paths(&(0..n).collect::<Vec<_>>(), &mut paths);
        paths.into_iter().map(ClassPath).collect()
    }

    fn collect_training_paths(&self, global: &[usize], paths: &mut [Vec<usize>]) {
        for (&g, &label) in global.iter().zip(&self.clustering.assignments) {
            paths[g].push(label);
        }
        for (label, members) in self.clustering.members().into_iter().enumerate() {
            if let Some(child) = self.children.get(&label) {
                let sub: Vec<usize> = members.iter().map(|&i| global[i]).collect();
                child.collect_training_paths(&sub, paths);
            }
        }
    }

    /// This node and every descendant, parents before children.
    pub fn nodes(&self) -> Vec<&TrainedNode> {
        let mut out = vec![self];
        for child in self.children.values() {
            out.extend(child.nodes());
        }
        out
    }

    pub fn depth(&self) -> usize {
        1 + self.children.values().map(TrainedNode::depth).max().unwrap_or(0)
    }

    /// Checks the width chaining and label-range invariants of the subtree.
    pub fn check(&self) -> Result<()> {
        for (&label, child) in &self.children {
            if label >= self.clustering.k() {
                return Err(Error::Schema(format!(
                    "node {:?} has a child under label {label} but only {} clusters",
                    self.path,
                    self.clustering.k()
                )));
            }
            if child.input_width() != self.child_width() {
                return Err(Error::DimensionMismatch {
                    context: "child input width",
                    expected: self.child_width(),
                    found: child.input_width(),
                });
            }
            child.check()?;
        }
        if self.clustering.centroids.iter().any(|c| c.len() != self.mnn.code_width()) {
            return Err(Error::Schema(format!("node {:?} centroids do not match its code width", self.path)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let node: TrainedNode = serde_json::from_str(text)?;
        for n in node.nodes() {
            // re-validates network shapes
            Mnn::from_json(&serde_json::to_string(&n.mnn)?)?;
        }
        node.check()?;
        Ok(node)
    }
}

/// Free-function form of [`TrainedNode::classify`].
pub fn classify(root: &TrainedNode, x: &[f64]) -> Result<ClassPath> {
    root.classify(x)
}
