//! Sample matrices, the CSV interchange format, the synthetic hierarchical
//! corpus generator and stratified splitting.
//!
//! CSV layout: one sample per row, `width` numbers, optionally followed by two
//! integer columns `class,subclass`. Labels are for evaluation only.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{euclidean_distance, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Label {
    pub class: usize,
    pub subclass: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Vec<f64>>,
    labels: Option<Vec<Label>>,
    width: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Vec<f64>>, labels: Option<Vec<Label>>) -> Result<Self> {
        let width = samples.first().map(Vec::len).ok_or_else(|| Error::Schema("dataset has no samples".into()))?;
        if let Some(bad) = samples.iter().find(|s| s.len() != width) {
            return Err(Error::DimensionMismatch {
                context: "dataset sample width",
                expected: width,
                found: bad.len(),
            });
        }
        if let Some(l) = &labels {
            if l.len() != samples.len() {
                return Err(Error::Schema(format!(
                    "{} labels for {} samples",
                    l.len(),
                    samples.len()
                )));
            }
        }
        Ok(Self { samples, labels, width })
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(
            indices.iter().map(|&i| self.samples[i].clone()).collect(),
            self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
        )
    }

    /// `self` followed by `other`; labels survive only when both carry them.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        let samples = self.samples.iter().chain(&other.samples).cloned().collect();
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Dataset::new(samples, labels)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for (i, sample) in self.samples.iter().enumerate() {
            let mut row: Vec<String> = sample.iter().map(f64::to_string).collect();
            if let Some(labels) = &self.labels {
                row.push(labels[i].class.to_string());
                row.push(labels[i].subclass.to_string());
            }
            writer.write_record(&row).map_err(csv_to_io)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

fn csv_to_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Per-column min-max scaling to [0, 1]; constant columns become 0.
    #[default]
    MinMax,
    /// Values are kept as written but must already lie in [0, 1].
    None,
}

/// Reads a CSV corpus of `expected_width` columns (plus optional labels).
pub fn load_vectors(path: &Path, expected_width: usize, normalization: Normalization) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_vectors(&text, path, expected_width, normalization)
}

pub fn parse_vectors(text: &str, path: &Path, expected_width: usize, normalization: Normalization) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut labelled: Option<bool> = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let has_labels = match record.len() {
            n if n == expected_width => false,
            n if n == expected_width + 2 => true,
            n => {
                return Err(Error::Schema(format!(
                    "{}:{line}: expected {expected_width} values (or {} with labels), found {n}",
                    path.display(),
                    expected_width + 2
                )))
            }
        };
        if *labelled.get_or_insert(has_labels) != has_labels {
            return Err(Error::Schema(format!(
                "{}:{line}: label columns present on some rows only",
                path.display()
            )));
        }
        let values = record
            .iter()
            .take(expected_width)
            .map(|field| match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(line, format!("not a finite number: {field:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if has_labels {
            let int = |field: &str| {
                field
                    .parse::<usize>()
                    .map_err(|_| parse_err(line, format!("label is not a non-negative integer: {field:?}")))
            };
            labels.push(Label {
                class: int(&record[expected_width])?,
                subclass: int(&record[expected_width + 1])?,
            });
        }
        samples.push(values);
    }
    if samples.is_empty() {
        return Err(Error::Schema(format!("{}: no samples", path.display())));
    }
    match normalization {
        Normalization::MinMax => min_max_normalize(&mut samples),
        Normalization::None => {
            if let Some((row, _)) = samples
                .iter()
                .enumerate()
                .find(|(_, s)| s.iter().any(|v| !(0.0..=1.0).contains(v)))
            {
                return Err(Error::Schema(format!(
                    "{}: sample {} has values outside [0, 1] and normalization is off",
                    path.display(),
                    row + 1
                )));
            }
        }
    }
    Dataset::new(samples, labelled.unwrap_or(false).then_some(labels))
}

/// Per-column min-max scaling to [0, 1]; constant columns map to 0.
pub fn min_max_normalize(samples: &mut [Vec<f64>]) {
    let Some(width) = samples.first().map(Vec::len) else {
        return;
    };
    for col in 0..width {
        let (lo, hi) = samples
            .iter()
            .map(|s| s[col])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let span = hi - lo;
        for s in samples.iter_mut() {
            s[col] = if span > 0.0 { ((s[col] - lo) / span).clamp(0.0, 1.0) } else { 0.0 };
        }
    }
}

/// Parameters of a labelled corpus of `classes × subclasses_per_class`
/// Gaussian blobs inside the unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub width: usize,
    pub classes: usize,
    pub subclasses_per_class: usize,
    pub samples_per_subclass: usize,
    /// Minimum distance between class centres.
    pub class_separation: f64,
    /// Minimum distance between subclass centres of the same class.
    pub subclass_separation: f64,
    /// Per-coordinate standard deviation of the blob noise.
    pub noise_sigma: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            width: 20,
            classes: 3,
            subclasses_per_class: 2,
            samples_per_subclass: 85,
            class_separation: 1.0,
            subclass_separation: 0.5,
            noise_sigma: 0.04,
        }
    }
}

/// Class centres are drawn from this sub-box so blobs rarely touch the clip.
const CENTER_LO: f64 = 0.15;
const CENTER_HI: f64 = 0.85;
/// Subclass offsets have this length relative to `subclass_separation`.
const OFFSET_RADIUS: f64 = 0.75;
const PLACEMENT_ATTEMPTS: usize = 10_000;

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.width == 0 || self.classes == 0 || self.subclasses_per_class == 0 || self.samples_per_subclass == 0 {
            return bad(format!("synthetic spec counts must all be >= 1: {self:?}"));
        }
        if !(self.class_separation > self.subclass_separation
            && self.subclass_separation > self.noise_sigma
            && self.noise_sigma >= 0.0
            && self.class_separation.is_finite())
        {
            return bad(format!(
                "need class_separation > subclass_separation > noise_sigma >= 0, got {} / {} / {}",
                self.class_separation, self.subclass_separation, self.noise_sigma
            ));
        }
        Ok(())
    }

    pub fn total_samples(&self) -> usize {
        self.classes * self.subclasses_per_class * self.samples_per_subclass
    }
}

/// A generated corpus together with its generating centres.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub dataset: Dataset,
    pub class_centers: Vec<Vec<f64>>,
    /// `subclass_centers[class][subclass]`.
    pub subclass_centers: Vec<Vec<Vec<f64>>>,
}

pub fn generate_synthetic(spec: &SyntheticSpec, rng: &mut Rng) -> Result<Dataset> {
    Ok(generate_synthetic_corpus(spec, rng)?.dataset)
}

pub fn generate_synthetic_corpus(spec: &SyntheticSpec, rng: &mut Rng) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let w = spec.width;

    let mut class_centers: Vec<Vec<f64>> = Vec::with_capacity(spec.classes);
    let mut attempts = 0;
    while class_centers.len() < spec.classes {
        attempts += 1;
        if attempts > PLACEMENT_ATTEMPTS {
            return Err(Error::Generation(format!(
                "could not place {} class centres {} apart in width {w}",
                spec.classes, spec.class_separation
            )));
        }
        let c = (0..w).map(|_| rng.uniform(CENTER_LO, CENTER_HI)).collect::<Result<Vec<_>>>()?;
        if class_centers
            .iter()
            .all(|o| euclidean_distance(o, &c).is_ok_and(|d| d >= spec.class_separation))
        {
            class_centers.push(c);
        }
    }

    let radius = OFFSET_RADIUS * spec.subclass_separation;
    let mut subclass_centers = Vec::with_capacity(spec.classes);
    for center in &class_centers {
        let offsets = if spec.subclasses_per_class == 1 {
            vec![vec![0.0; w]]
        } else {
            let mut found = None;
            for _ in 0..PLACEMENT_ATTEMPTS {
                let offsets: Vec<Vec<f64>> = (0..spec.subclasses_per_class).map(|_| random_direction(w, rng, radius)).collect();
                if offsets
                    .iter()
                    .tuple_combinations()
                    .all(|(a, b)| euclidean_distance(a, b).is_ok_and(|d| d >= spec.subclass_separation))
                {
                    found = Some(offsets);
                    break;
                }
            }
            found.ok_or_else(|| {
                Error::Generation(format!(
                    "could not place {} subclass offsets {} apart in width {w}",
                    spec.subclasses_per_class, spec.subclass_separation
                ))
            })?
        };
        subclass_centers.push(
            offsets
                .iter()
                .map(|o| center.iter().zip(o).map(|(c, d)| c + d).collect::<Vec<f64>>())
                .collect::<Vec<_>>(),
        );
    }

    let mut samples = Vec::with_capacity(spec.total_samples());
    let mut labels = Vec::with_capacity(spec.total_samples());
    for (class, subs) in subclass_centers.iter().enumerate() {
        for (subclass, center) in subs.iter().enumerate() {
            for _ in 0..spec.samples_per_subclass {
                samples.push(
                    center
                        .iter()
                        .map(|&m| (m + spec.noise_sigma * rng.standard_normal()).clamp(0.0, 1.0))
                        .collect(),
                );
                labels.push(Label { class, subclass });
            }
        }
    }
    Ok(SyntheticCorpus {
        dataset: Dataset::new(samples, Some(labels))?,
        class_centers,
        subclass_centers,
    })
}

fn random_direction(width: usize, rng: &mut Rng, length: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..width).map(|_| rng.standard_normal()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x * length / norm).collect();
        }
    }
}

/// Stratified (by label when present) disjoint split into train and test.
pub fn split(dataset: &Dataset, train_fraction: f64, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(dataset, train_fraction, rng)?;
    Ok((dataset.subset(&train)?, dataset.subset(&test)?))
}

/// Index form of [`split`]; both index lists are ascending.
pub fn split_indices(dataset: &Dataset, train_fraction: f64, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Precondition(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut strata: BTreeMap<Option<Label>, Vec<usize>> = BTreeMap::new();
    for i in 0..dataset.len() {
        strata.entry(dataset.labels().map(|l| l[i])).or_default().push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (key, mut members) in strata {
        let n = members.len();
        let n_train = (n as f64 * train_fraction).round() as usize;
        if n_train == 0 || n_train >= n {
            return Err(Error::Stratification(format!(
                "stratum {key:?} of {n} samples leaves an empty side at train fraction {train_fraction}"
            )));
        }
        rng.shuffle(&mut members);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
