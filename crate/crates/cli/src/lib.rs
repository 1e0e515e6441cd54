//! The `tandem` command-line tool: corpus generation, hierarchy training,
//! classification and repeated trial suites, driven by JSON config files.

pub mod config;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tandem_core::dataset::{generate_synthetic, load_vectors, Dataset};
use tandem_core::evaluation::{run_trials, Corpus, NodeMirror, CORPUS_STREAM};
use tandem_core::hierarchy::{tandem_train, NodeFailure, TrainedNode};
use tandem_core::numerics::Rng;

pub use config::{parse_config, parse_generate_config, CorpusConfig, GenerateConfig, RunConfig};

pub const HIERARCHY_FILE: &str = "hierarchy.json";
pub const MIRROR_REPORTS_FILE: &str = "mirror_reports.json";
pub const CONFIG_ECHO_FILE: &str = "config.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("cannot parse {}: {message}", path.display())]
    ConfigSyntax { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] tandem_core::Error),
    #[error("{0}")]
    Failed(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Writes `bytes` to a temporary file beside `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(tandem_core::Error::from)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Where `generate` echoes its configuration: `corpus.csv` → `corpus.config.json`.
pub fn generate_echo_path(out: &Path) -> PathBuf {
    out.with_extension("config.json")
}

/// Writes a labelled synthetic corpus. The corpus equals the one `eval-trials`
/// builds from the same spec and seed.
pub fn generate(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<Dataset> {
    let mut config = parse_generate_config(spec_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let mut rng = Rng::stream(config.seed, CORPUS_STREAM);
    let dataset = generate_synthetic(&config.synthetic, &mut rng)?;
    write_atomic(out, dataset.to_csv_string()?.as_bytes())?;
    write_json(&generate_echo_path(out), &config)?;
    Ok(dataset)
}

#[derive(Debug, Serialize)]
struct MirrorReportsFile<'a> {
    nodes: Vec<NodeMirror>,
    node_failures: &'a [NodeFailure],
}

/// Trains one hierarchy on `data`, using the same random stream as trial 0
/// of a suite with this seed.
pub fn train(config_path: &Path, data: &Path, out: &Path, seed: Option<u64>) -> Result<TrainedNode> {
    let mut config = parse_config(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let dataset = load_vectors(data, config.input_width(), config.normalization)?;
    let mut rng = Rng::stream(config.seed, 0);
    let outcome = tandem_train(dataset.samples(), &config.hierarchy.to_hierarchy(), &mut rng)?;

    config.corpus = Some(CorpusConfig {
        synthetic: None,
        path: Some(data.to_path_buf()),
        train_fraction: config.corpus.as_ref().map_or(360.0 / 510.0, |c| c.train_fraction),
    });
    create_dir(out)?;
    write_atomic(&out.join(HIERARCHY_FILE), outcome.root.to_json()?.as_bytes())?;
    let reports = MirrorReportsFile {
        nodes: outcome
            .root
            .nodes()
            .into_iter()
            .map(|n| NodeMirror {
                path: n.path.clone(),
                report: n.mirror_report.clone(),
            })
            .collect(),
        node_failures: &outcome.failures,
    };
    write_json(&out.join(MIRROR_REPORTS_FILE), &reports)?;
    write_json(&out.join(CONFIG_ECHO_FILE), &config)?;
    for f in &outcome.failures {
        eprintln!("warning: no child at {:?}: {}", f.path, f.message);
    }
    Ok(outcome.root)
}

/// Class path of every row of `data`, one per line.
pub fn classify(model: &Path, data: &Path) -> Result<String> {
    let config = parse_config(&model.join(CONFIG_ECHO_FILE))?;
    let hierarchy_path = model.join(HIERARCHY_FILE);
    let text = std::fs::read_to_string(&hierarchy_path).map_err(|source| CliError::Io {
        path: hierarchy_path,
        source,
    })?;
    let root = TrainedNode::from_json(&text)?;
    let dataset = load_vectors(data, root.input_width(), config.normalization)?;
    let mut out = String::new();
    for x in dataset.samples() {
        let _ = writeln!(out, "{}", root.classify(x)?);
    }
    Ok(out)
}

/// Runs the trial suite and writes `report.json`, `trials.csv`,
/// `timings.csv`, `summary.txt` and the config echo into `out`.
pub fn eval_trials(
    config_path: &Path,
    trials: Option<u64>,
    seed: Option<u64>,
    out: &Path,
) -> Result<tandem_core::AggregateReport> {
    let mut config = parse_config(config_path)?;
    if let Some(n) = trials {
        config.trials = n;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    let corpus_config = config.corpus.as_ref().ok_or_else(|| CliError::Config {
        key: "corpus".into(),
        message: "eval-trials needs a corpus".into(),
    })?;
    let corpus = match (&corpus_config.synthetic, &corpus_config.path) {
        (Some(spec), _) => Corpus::Synthetic(spec.clone()),
        (None, Some(path)) => Corpus::Loaded(load_vectors(path, config.input_width(), config.normalization)?),
        (None, None) => unreachable!("validated"),
    };
    let report = run_trials(
        config.trials,
        &corpus,
        corpus_config.train_fraction,
        &config.hierarchy.to_hierarchy(),
        config.seed,
    )?;

    create_dir(out)?;
    write_json(&out.join("report.json"), &report)?;
    let mut csv = Vec::new();
    report.write_trials_csv(&mut csv)?;
    write_atomic(&out.join("trials.csv"), &csv)?;
    let mut timings = String::from("trial,wall_time_secs\n");
    for t in &report.trials {
        let _ = writeln!(timings, "{},{}", t.trial_index, t.wall_time_secs);
    }
    write_atomic(&out.join("timings.csv"), timings.as_bytes())?;
    write_atomic(&out.join("summary.txt"), report.to_table().as_bytes())?;
    write_json(&out.join(CONFIG_ECHO_FILE), &config)?;
    if report.trials.is_empty() {
        return Err(CliError::Failed(format!(
            "all {} trials failed; see {}",
            report.failed_trials.len(),
            out.join("report.json").display()
        )));
    }
    Ok(report)
}
