//! Hierarchical unsupervised classification with mirroring neural networks.
//!
//! Each node of the tree trains a bottlenecked reconstruction network
//! ([`mnn`]), clusters the bottleneck codes of its samples ([`clustering`]),
//! and hands every cluster's members down to a child node ([`hierarchy`]).
//! [`dataset`] supplies corpora and [`evaluation`] scores trees against
//! held-out labels.

pub mod clustering;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod hierarchy;
pub mod mnn;
pub mod numerics;

pub use clustering::{averaged_forgy, forgy_converge, Clustering, ForgyParams};
pub use dataset::{Dataset, Label, Normalization, SyntheticSpec};
pub use error::{Error, Result};
pub use evaluation::{permutation_accuracy, AggregateReport, Corpus, TrialReport};
pub use hierarchy::{classify, tandem_train, ChildInput, ClassPath, HierarchyConfig, NodeConfig, TrainedNode};
pub use mnn::{train_mirror, MirrorReport, Mnn, MnnConfig};
pub use numerics::{Matrix, Rng};
