use std::path::PathBuf;

use crate::mnn::{MirrorReport, Mnn};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite gradient in weight layer {layer}")]
    NumericFailure { layer: usize },

    /// Carries the partially trained network so a caller may still accept it.
    #[error(
        "mirror training did not converge after {} epochs ({:.3} of samples mirrored)",
        report.epochs_run,
        report.mirrored_fraction
    )]
    TrainingFailure { report: MirrorReport, mnn: Box<Mnn> },

    #[error("could not draw {k} seed points at least {min_distance} apart in {retries} attempts")]
    SeedSelection {
        k: usize,
        min_distance: f64,
        retries: usize,
    },

    #[error("exact permutation search supports k <= {max}, got k = {k}")]
    UnsupportedSize { k: usize, max: usize },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("synthetic generation failed: {0}")]
    Generation(String),

    #[error("stratification failed: {0}")]
    Stratification(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// A failure inside the hierarchy, tagged with the cluster path of the node.
    #[error("node {path:?}: {source}")]
    Node {
        path: Vec<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_node(self, path: &[usize]) -> Error {
        Error::Node {
            path: path.to_vec(),
            source: Box::new(self),
        }
    }
}
