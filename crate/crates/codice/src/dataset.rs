//! Dataset container, CSV ingestion, and train/test splitting.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{check_row, FeatureSchema, Row, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Class indices in `[0, n_classes)`.
    Labels(Vec<usize>),
    /// Real-valued regression targets.
    Values(Vec<f64>),
}

impl Target {
    pub fn len(&self) -> usize {
        match self {
            Target::Labels(v) => v.len(),
            Target::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn label(&self, i: usize) -> usize {
        match self {
            Target::Labels(v) => v[i],
            Target::Values(_) => panic!("regression target has no class labels"),
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        match self {
            Target::Values(v) => v[i],
            Target::Labels(_) => panic!("classification target has no real values"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub rows: Vec<Row>,
    pub target: Target,
    pub task: Task,
}

impl Dataset {
    /// Build a dataset, validating every row against the schema.
    pub fn new(schema: FeatureSchema, rows: Vec<Row>, target: Target, task: Task) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyFile);
        }
        if rows.len() != target.len() {
            return Err(Error::Dimension {
                expected: rows.len(),
                got: target.len(),
            });
        }
        for (i, row) in rows.iter().enumerate() {
            check_row(&schema, row).map_err(|e| Error::Row {
                row: i,
                msg: e.to_string(),
            })?;
        }
        if let (Task::Classification, Target::Labels(labels)) = (task, &target) {
            let n_classes = labels.iter().max().map_or(0, |m| m + 1);
            if n_classes == 0 {
                return Err(Error::Schema("classification dataset without labels".into()));
            }
        }
        match (task, &target) {
            (Task::Classification, Target::Values(_)) | (Task::Regression, Target::Labels(_)) => {
                return Err(Error::Schema("target kind does not match task".into()));
            }
            _ => {}
        }
        Ok(Dataset {
            schema,
            rows,
            target,
            task,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn n_classes(&self) -> usize {
        match &self.target {
            Target::Labels(labels) => labels.iter().max().map_or(0, |m| m + 1),
            Target::Values(_) => 0,
        }
    }
}

/// What the target column holds, declared alongside the feature schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// Integer class labels; task becomes classification.
    Classes,
    /// Real values; task becomes regression.
    Real,
}

/// Load a comma-separated UTF-8 file with a header row. Feature columns are
/// matched to the schema by name; column order in the file is free.
pub fn load_csv(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
    target_column: &str,
    target_kind: &TargetKind,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;

    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.to_string())
        .collect();

    let mut feature_cols = Vec::with_capacity(schema.len());
    for f in schema.features() {
        let col = header
            .iter()
            .position(|h| h == &f.name)
            .ok_or_else(|| Error::MissingColumn(f.name.clone()))?;
        feature_cols.push(col);
    }
    let target_col = header
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingColumn(target_column.to_string()))?;

    let mut rows: Vec<Row> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut values: Vec<f64> = Vec::new();

    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Row::with_capacity(schema.len());
        for (fi, f) in schema.features().iter().enumerate() {
            let raw = record.get(feature_cols[fi]).ok_or_else(|| Error::Row {
                row: i,
                msg: format!("missing value for column '{}'", f.name),
            })?;
            let value = if f.is_continuous() {
                let x: f64 = raw.parse().map_err(|_| Error::Row {
                    row: i,
                    msg: format!("cannot parse '{raw}' as a number for '{}'", f.name),
                })?;
                Value::Num(x)
            } else {
                let c = schema.category_index(fi, raw).ok_or_else(|| Error::Row {
                    row: i,
                    msg: format!("category '{raw}' not in the vocabulary of '{}'", f.name),
                })?;
                Value::Cat(c)
            };
            row.push(value);
        }
        let raw_target = record.get(target_col).ok_or_else(|| Error::Row {
            row: i,
            msg: "missing target value".into(),
        })?;
        match target_kind {
            TargetKind::Classes => {
                let label: usize = raw_target.parse().map_err(|_| Error::Row {
                    row: i,
                    msg: format!("cannot parse '{raw_target}' as a class label"),
                })?;
                labels.push(label);
            }
            TargetKind::Real => {
                let v: f64 = raw_target.parse().map_err(|_| Error::Row {
                    row: i,
                    msg: format!("cannot parse '{raw_target}' as a number"),
                })?;
                values.push(v);
            }
        }
        rows.push(row);
    }

    let (target, task) = match target_kind {
        TargetKind::Classes => (Target::Labels(labels), Task::Classification),
        TargetKind::Real => (Target::Values(values), Task::Regression),
    };
    Dataset::new(schema.clone(), rows, target, task)
}

/// Deterministic shuffled split. The shuffled order is preserved inside each
/// partition so "the first k test instances" is reproducible from the seed.
pub fn train_test_split(
    dataset: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = dataset.n_rows();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::Config(format!(
            "split of {n} rows with fraction {test_fraction} leaves an empty partition"
        )));
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);

    let take = |idx: &[usize]| -> Dataset {
        let rows = idx.iter().map(|&i| dataset.rows[i].clone()).collect();
        let target = match &dataset.target {
            Target::Labels(l) => Target::Labels(idx.iter().map(|&i| l[i]).collect()),
            Target::Values(v) => Target::Values(idx.iter().map(|&i| v[i]).collect()),
        };
        Dataset {
            schema: dataset.schema.clone(),
            rows,
            target,
            task: dataset.task,
        }
    };

    let test = take(&indices[..n_test]);
    let train = take(&indices[n_test..]);
    Ok((train, test))
}
