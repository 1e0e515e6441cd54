//! Run configuration files: JSON with every key either required or given a
//! default, so that the echo written next to outputs is the full effective
//! configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tandem_core::clustering::ForgyParams;
use tandem_core::dataset::{Normalization, SyntheticSpec};
use tandem_core::hierarchy::{ChildInput, HierarchyConfig, NodeConfig, DEFAULT_MIN_SAMPLES_TO_SPLIT};
use tandem_core::mnn::{MnnConfig, OutputActivation};

use crate::CliError;

fn default_train_fraction() -> f64 {
    360.0 / 510.0
}
fn default_trials() -> u64 {
    10
}
fn default_weight_init_range() -> [f64; 2] {
    [-0.25, 0.25]
}
fn default_success_fraction() -> f64 {
    0.95
}
fn default_max_epochs() -> usize {
    5000
}
fn default_max_iterations() -> usize {
    ForgyParams::DEFAULT_MAX_ITERATIONS
}
fn default_max_seed_retries() -> usize {
    ForgyParams::DEFAULT_MAX_SEED_RETRIES
}
fn default_min_samples() -> usize {
    DEFAULT_MIN_SAMPLES_TO_SPLIT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<CorpusConfig>,
    pub hierarchy: HierarchyBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyBlock {
    pub max_depth: usize,
    pub levels: Vec<LevelConfig>,
}

/// One tree level: the network and clustering parameters of every node at
/// that depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelConfig {
    pub layer_dims: Vec<usize>,
    pub mirror_threshold: f64,
    pub learning_rate: f64,
    #[serde(default = "default_weight_init_range")]
    pub weight_init_range: [f64; 2],
    #[serde(default = "default_success_fraction")]
    pub success_fraction: f64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default)]
    pub output_activation: OutputActivation,
    #[serde(default)]
    pub accept_unconverged: bool,
    pub k: usize,
    pub seed_min_distance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_max_seed_retries")]
    pub max_seed_retries: usize,
    #[serde(default)]
    pub child_input: ChildInput,
    #[serde(default = "default_min_samples")]
    pub min_samples_to_split: usize,
}

/// `seed` for `generate`, alongside the corpus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    #[serde(default)]
    pub seed: u64,
    pub synthetic: SyntheticSpec,
}

fn bad(key: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Config {
        key: key.into(),
        message: message.into(),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::ConfigSyntax {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let config: RunConfig = read_json(path)?;
    config.validate()?;
    Ok(config)
}

pub fn parse_generate_config(path: &Path) -> Result<GenerateConfig, CliError> {
    let config: GenerateConfig = read_json(path)?;
    config
        .synthetic
        .validate()
        .map_err(|e| bad("synthetic", e.to_string()))?;
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.trials == 0 {
            return Err(bad("trials", "must be at least 1"));
        }
        if let Some(corpus) = &self.corpus {
            match (&corpus.synthetic, &corpus.path) {
                (Some(spec), None) => spec.validate().map_err(|e| bad("corpus.synthetic", e.to_string()))?,
                (None, Some(_)) => {}
                _ => return Err(bad("corpus", "give exactly one of `synthetic` or `path`")),
            }
            if !(corpus.train_fraction > 0.0 && corpus.train_fraction < 1.0) {
                return Err(bad("corpus.train_fraction", "must lie strictly between 0 and 1"));
            }
        }
        self.hierarchy.validate()?;
        if let Some(spec) = self.corpus.as_ref().and_then(|c| c.synthetic.as_ref()) {
            let width = self.hierarchy.levels[0].layer_dims[0];
            if spec.width != width {
                return Err(bad(
                    "corpus.synthetic.width",
                    format!("is {} but hierarchy.levels[0].layer_dims starts with {width}", spec.width),
                ));
            }
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.hierarchy.levels[0].layer_dims[0]
    }
}

impl HierarchyBlock {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.levels.is_empty() {
            return Err(bad("hierarchy.levels", "needs at least one level"));
        }
        if self.max_depth == 0 || self.max_depth > self.levels.len() {
            return Err(bad(
                "hierarchy.max_depth",
                format!("must be between 1 and the number of levels ({})", self.levels.len()),
            ));
        }
        for (i, level) in self.levels.iter().enumerate() {
            level.validate(&format!("hierarchy.levels[{i}]"))?;
        }
        for (i, pair) in self.levels.windows(2).enumerate() {
            let feeds = pair[0].to_node().child_width();
            if pair[1].layer_dims[0] != feeds {
                return Err(bad(
                    format!("hierarchy.levels[{}].layer_dims", i + 1),
                    format!("input width {} does not match the {feeds} values its parent passes down", pair[1].layer_dims[0]),
                ));
            }
        }
        self.to_hierarchy()
            .validate()
            .map_err(|e| bad("hierarchy", e.to_string()))
    }

    pub fn to_hierarchy(&self) -> HierarchyConfig {
        HierarchyConfig {
            levels: self.levels.iter().map(LevelConfig::to_node).collect(),
            max_depth: self.max_depth,
        }
    }
}

impl LevelConfig {
    fn validate(&self, at: &str) -> Result<(), CliError> {
        let key = |k: &str| format!("{at}.{k}");
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.learning_rate) {
            return Err(bad(key("learning_rate"), format!("must be > 0, got {}", self.learning_rate)));
        }
        if !positive(self.mirror_threshold) {
            return Err(bad(key("mirror_threshold"), format!("must be > 0, got {}", self.mirror_threshold)));
        }
        if !(self.success_fraction > 0.0 && self.success_fraction <= 1.0) {
            return Err(bad(key("success_fraction"), "must lie in (0, 1]"));
        }
        let [lo, hi] = self.weight_init_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(bad(key("weight_init_range"), "must be [lo, hi] with lo <= hi"));
        }
        if self.max_epochs == 0 {
            return Err(bad(key("max_epochs"), "must be at least 1"));
        }
        if self.k < 2 {
            return Err(bad(key("k"), format!("must be at least 2, got {}", self.k)));
        }
        if !(self.seed_min_distance >= 0.0 && self.seed_min_distance.is_finite()) {
            return Err(bad(key("seed_min_distance"), "must be >= 0"));
        }
        if self.max_iterations == 0 {
            return Err(bad(key("max_iterations"), "must be at least 1"));
        }
        if self.max_seed_retries == 0 {
            return Err(bad(key("max_seed_retries"), "must be at least 1"));
        }
        if self.min_samples_to_split < self.k {
            return Err(bad(key("min_samples_to_split"), format!("must be at least k = {}", self.k)));
        }
        let node = self.to_node();
        node.mnn.validate().map_err(|e| bad(key("layer_dims"), e.to_string()))?;
        node.validate().map_err(|e| bad(at, e.to_string()))
    }

    pub fn to_node(&self) -> NodeConfig {
        let mut mnn = MnnConfig::new(self.layer_dims.clone(), self.mirror_threshold, self.learning_rate);
        mnn.weight_init_lo = self.weight_init_range[0];
        mnn.weight_init_hi = self.weight_init_range[1];
        mnn.success_fraction = self.success_fraction;
        mnn.max_epochs = self.max_epochs;
        mnn.output_activation = self.output_activation;
        let mut forgy = ForgyParams::new(self.k, self.seed_min_distance);
        forgy.max_iterations = self.max_iterations;
        forgy.max_seed_retries = self.max_seed_retries;
        let mut node = NodeConfig::new(mnn, forgy);
        node.child_input = self.child_input;
        node.min_samples_to_split = self.min_samples_to_split;
        node.accept_unconverged = self.accept_unconverged;
        node
    }
}
