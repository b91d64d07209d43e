//! Synthetic data generation, CSV ingestion and stratified fold plans.

use std::fmt::Write as _;
use std::path::Path;

use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::LabelledExample;
use crate::scalar::{cast, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("dataset needs at least 2 classes, got {got}")]
    TooFewClasses { got: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("label {label} out of range for {num_classes} classes (example {index})")]
    LabelOutOfRange {
        label: usize,
        num_classes: usize,
        index: usize,
    },
    #[error("example {index} has {got} features, expected {expected}")]
    InconsistentDimensions {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: cannot parse '{token}' in column {column}")]
    Parse {
        line: u64,
        column: usize,
        token: String,
    },
    #[error("line {line}: unknown class label '{label}'")]
    UnknownClassLabel { line: u64, label: String },
    #[error("line {line}: row has {got} fields, expected {expected}")]
    RaggedRow {
        line: u64,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },
    #[error("csv read failed: {0}")]
    Io(String),
    #[error("class {class} has {count} members, fewer than {k} folds")]
    ClassTooSmall { class: usize, count: usize, k: usize },
    #[error("fold count must be >= 1")]
    ZeroFolds,
    #[error("synthetic generator needs num_classes >= 2 and dim >= 1")]
    BadSyntheticShape,
}

/// A labelled dataset with a fixed class count and feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<F> {
    examples: Vec<LabelledExample<F>>,
    num_classes: usize,
    feature_dim: usize,
    name: String,
}

impl<F: Scalar> Dataset<F> {
    pub fn new(
        examples: Vec<LabelledExample<F>>,
        num_classes: usize,
        name: &str,
    ) -> Result<Self, DatasetError> {
        if num_classes < 2 {
            return Err(DatasetError::TooFewClasses { got: num_classes });
        }
        let first = examples.first().ok_or(DatasetError::Empty)?;
        let feature_dim = first.features.len();
        for (index, ex) in examples.iter().enumerate() {
            if ex.features.len() != feature_dim {
                return Err(DatasetError::InconsistentDimensions {
                    index,
                    expected: feature_dim,
                    got: ex.features.len(),
                });
            }
            if ex.label >= num_classes {
                return Err(DatasetError::LabelOutOfRange {
                    label: ex.label,
                    num_classes,
                    index,
                });
            }
        }
        Ok(Self {
            examples,
            num_classes,
            feature_dim,
            name: name.to_string(),
        })
    }

    pub fn examples(&self) -> &[LabelledExample<F>] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Per-feature min-max scaling onto [0, 1]. Constant features map to 0.
    /// Useful ahead of stump learners, whose thresholds are scale
    /// sensitive; off by default everywhere.
    pub fn min_max_scaled(&self) -> Self {
        let mut lo = vec![F::infinity(); self.feature_dim];
        let mut hi = vec![F::neg_infinity(); self.feature_dim];
        for ex in &self.examples {
            for (j, &x) in ex.features.iter().enumerate() {
                lo[j] = lo[j].min(x);
                hi[j] = hi[j].max(x);
            }
        }
        let examples = self
            .examples
            .iter()
            .map(|ex| {
                let features = ex
                    .features
                    .iter()
                    .enumerate()
                    .map(|(j, &x)| {
                        if hi[j] > lo[j] {
                            (x - lo[j]) / (hi[j] - lo[j])
                        } else {
                            F::zero()
                        }
                    })
                    .collect();
                LabelledExample::new(features, ex.label)
            })
            .collect();
        Self {
            examples,
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
            name: self.name.clone(),
        }
    }
}

/// Samples an equivariant Gaussian mixture: one unit-covariance cluster per
/// class, class means `class_separation` away from the origin along
/// distinct axes. When there are more classes than dimensions the axes wrap
/// around, rotated by a fresh random orthogonal map per wrap cycle so all
/// means stay distinct. Deterministic per seed; examples are grouped by
/// class.
pub fn gen_gaussian_mixture<F: Scalar>(
    num_classes: usize,
    dim: usize,
    class_separation: F,
    count_per_class: usize,
    seed: u64,
) -> Result<Dataset<F>, DatasetError>
where
    StandardNormal: Distribution<F>,
{
    if num_classes < 2 || dim == 0 || count_per_class == 0 {
        return Err(DatasetError::BadSyntheticShape);
    }
    let mut mean_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let rotation = if num_classes > dim {
        Some(random_rotation::<F>(dim, &mut mean_rng))
    } else {
        None
    };
    let mut means = Vec::with_capacity(num_classes);
    for class in 0..num_classes {
        let mut v = vec![F::zero(); dim];
        v[class % dim] = F::one();
        if let Some(rot) = &rotation {
            for _ in 0..(class / dim) {
                v = mat_vec(rot, &v);
            }
        }
        for x in v.iter_mut() {
            *x = *x * class_separation;
        }
        means.push(v);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(num_classes * count_per_class);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..count_per_class {
            let features = mean
                .iter()
                .map(|&m| m + rng.sample::<F, _>(StandardNormal))
                .collect();
            examples.push(LabelledExample::new(features, class));
        }
    }
    Dataset::new(
        examples,
        num_classes,
        &format!("synthetic-{num_classes}c{dim}d"),
    )
}

/// Random orthogonal matrix via Gram-Schmidt on a Gaussian matrix.
fn random_rotation<F: Scalar>(dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<F>>
where
    StandardNormal: Distribution<F>,
{
    let mut rows: Vec<Vec<F>> = (0..dim)
        .map(|_| (0..dim).map(|_| rng.sample::<F, _>(StandardNormal)).collect())
        .collect();
    for i in 0..dim {
        for j in 0..i {
            let dot = dot(&rows[i], &rows[j]);
            let prev = rows[j].clone();
            for (x, &p) in rows[i].iter_mut().zip(&prev) {
                *x = *x - dot * p;
            }
        }
        let norm = dot(&rows[i], &rows[i]).sqrt();
        if norm > cast(1e-12) {
            for x in rows[i].iter_mut() {
                *x = *x / norm;
            }
        } else {
            // vanishing leftover direction; fall back to the unit axis
            for (k, x) in rows[i].iter_mut().enumerate() {
                *x = if k == i { F::one() } else { F::zero() };
            }
        }
    }
    rows
}

fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| x * y).fold(F::zero(), |s, v| s + v)
}

fn mat_vec<F: Scalar>(m: &[Vec<F>], v: &[F]) -> Vec<F> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// Column layout of a CSV file: where the label lives, which columns to
/// drop, and the class-name table (index = class id).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label_column: usize,
    #[serde(default)]
    pub ignore_columns: Vec<usize>,
    pub classes: Vec<String>,
    #[serde(default)]
    pub has_header: bool,
}

/// Loads a CSV file under an explicit schema. Row order is preserved;
/// parse failures carry the 1-based line number.
pub fn load_csv<F: Scalar>(path: &Path, schema: &CsvSchema) -> Result<Dataset<F>, DatasetError> {
    if schema.classes.len() < 2 {
        return Err(DatasetError::TooFewClasses {
            got: schema.classes.len(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DatasetError::Io(e.to_string()))?;
    let mut examples = Vec::new();
    let mut expected_fields: Option<usize> = None;
    for record in reader.records() {
        let record = record.map_err(|e| DatasetError::Io(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue; // blank line
        }
        match expected_fields {
            None => expected_fields = Some(record.len()),
            Some(expected) if record.len() != expected => {
                return Err(DatasetError::RaggedRow {
                    line,
                    expected,
                    got: record.len(),
                });
            }
            _ => {}
        }
        if schema.label_column >= record.len() {
            return Err(DatasetError::MalformedRow {
                line,
                message: format!(
                    "label column {} outside row of {} fields",
                    schema.label_column,
                    record.len()
                ),
            });
        }
        let label_token = &record[schema.label_column];
        let label = schema
            .classes
            .iter()
            .position(|c| c == label_token)
            .ok_or_else(|| DatasetError::UnknownClassLabel {
                line,
                label: label_token.to_string(),
            })?;
        let mut features = Vec::with_capacity(record.len());
        for (column, token) in record.iter().enumerate() {
            if column == schema.label_column || schema.ignore_columns.contains(&column) {
                continue;
            }
            let value = token.parse::<F>().map_err(|_| DatasetError::Parse {
                line,
                column,
                token: token.to_string(),
            })?;
            features.push(value);
        }
        examples.push(LabelledExample::new(features, label));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".to_string());
    Dataset::new(examples, schema.classes.len(), &name)
}

/// Serializes a dataset back to CSV text, features first and the class
/// name last. Finite decimal inputs survive a load/serialize round trip
/// bit-exactly (floats print in shortest round-trip form).
pub fn to_csv_string<F: Scalar>(dataset: &Dataset<F>, class_names: &[String]) -> String {
    let mut out = String::new();
    for ex in dataset.examples() {
        for x in &ex.features {
            let _ = write!(out, "{x},");
        }
        let _ = writeln!(out, "{}", class_names[ex.label]);
    }
    out
}

/// A stratified fold assignment: per class, consecutive shuffled members
/// deal round-robin into folds, with the starting fold rotating between
/// classes so overall fold sizes also differ by at most one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    k: usize,
    assignments: Vec<usize>,
    seed: u64,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Dataset indices landing in `fold` (the test side) and everywhere
    /// else (the training side), both in dataset order.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, &f) in self.assignments.iter().enumerate() {
            if f == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }
}

/// Stratified k-fold plan: per-class fold counts differ by at most one and
/// so do overall fold sizes. Deterministic per seed.
pub fn stratified_kfold<F: Scalar>(
    dataset: &Dataset<F>,
    k: usize,
    seed: u64,
) -> Result<FoldPlan, DatasetError> {
    if k == 0 {
        return Err(DatasetError::ZeroFolds);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0usize; dataset.len()];
    let mut offset = 0usize;
    for class in 0..dataset.num_classes() {
        let mut members: Vec<usize> = dataset
            .examples()
            .iter()
            .enumerate()
            .filter(|(_, ex)| ex.label == class)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(DatasetError::ClassTooSmall {
                class,
                count: members.len(),
                k,
            });
        }
        use rand::seq::SliceRandom;
        members.shuffle(&mut rng);
        for (pos, &idx) in members.iter().enumerate() {
            assignments[idx] = (offset + pos) % k;
        }
        offset = (offset + members.len()) % k;
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
    })
}
