//! Standardization, one-hot encoding, and median absolute deviations.
//!
//! Continuous features are centered and scaled by the population standard
//! deviation; categorical features expand to one-hot blocks. Zero standard
//! deviations and zero MADs are stored as 1.0 so that downstream scale
//! divisions stay finite on constant columns.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::schema::{check_row, FeatureKind, FeatureSchema, Row, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureStats {
    Continuous { mean: f64, std: f64, mad: f64 },
    Categorical { n_categories: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    schema: FeatureSchema,
    stats: Vec<FeatureStats>,
    /// Start column of each feature in the encoded vector.
    offsets: Vec<usize>,
    encoded_width: usize,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Median absolute deviation: median(|x - median(x)|).
fn mad(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let med = median(&sorted);
    let mut dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    median(&dev)
}

impl Preprocessor {
    pub fn fit(dataset: &Dataset) -> Result<Self> {
        if dataset.rows.is_empty() {
            return Err(Error::EmptyFile);
        }
        let schema = dataset.schema.clone();
        let n = dataset.rows.len() as f64;

        let mut stats = Vec::with_capacity(schema.len());
        let mut offsets = Vec::with_capacity(schema.len());
        let mut width = 0usize;
        for (fi, f) in schema.features().iter().enumerate() {
            offsets.push(width);
            match &f.kind {
                FeatureKind::Continuous => {
                    let values: Vec<f64> =
                        dataset.rows.iter().map(|r| r[fi].as_num()).collect();
                    let mean = values.iter().sum::<f64>() / n;
                    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    let mut std = var.sqrt();
                    if std == 0.0 {
                        std = 1.0;
                    }
                    let mut m = mad(&values);
                    if m == 0.0 {
                        m = 1.0;
                    }
                    stats.push(FeatureStats::Continuous { mean, std, mad: m });
                    width += 1;
                }
                FeatureKind::Categorical { categories } => {
                    stats.push(FeatureStats::Categorical {
                        n_categories: categories.len(),
                    });
                    width += categories.len();
                }
            }
        }
        Ok(Preprocessor {
            schema,
            stats,
            offsets,
            encoded_width: width,
        })
    }

    /// Assemble a preprocessor from explicit statistics. Useful for fixtures
    /// where exact means/scales are part of the test design.
    pub fn from_parts(schema: FeatureSchema, stats: Vec<FeatureStats>) -> Result<Self> {
        if stats.len() != schema.len() {
            return Err(Error::Dimension {
                expected: schema.len(),
                got: stats.len(),
            });
        }
        let mut offsets = Vec::with_capacity(schema.len());
        let mut width = 0usize;
        for (f, s) in schema.features().iter().zip(&stats) {
            offsets.push(width);
            match (&f.kind, s) {
                (FeatureKind::Continuous, FeatureStats::Continuous { .. }) => width += 1,
                (FeatureKind::Categorical { categories }, FeatureStats::Categorical { n_categories })
                    if categories.len() == *n_categories =>
                {
                    width += n_categories;
                }
                _ => return Err(Error::Schema("stats do not match schema".into())),
            }
        }
        Ok(Preprocessor {
            schema,
            stats,
            offsets,
            encoded_width: width,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn encoded_width(&self) -> usize {
        self.encoded_width
    }

    pub fn stats(&self, feature: usize) -> &FeatureStats {
        &self.stats[feature]
    }

    /// MAD of a continuous feature in original units (1.0 fallback applied).
    pub fn mad_of(&self, feature: usize) -> f64 {
        match &self.stats[feature] {
            FeatureStats::Continuous { mad, .. } => *mad,
            FeatureStats::Categorical { .. } => panic!("MAD requested for categorical feature"),
        }
    }

    pub fn mean_std_of(&self, feature: usize) -> (f64, f64) {
        match &self.stats[feature] {
            FeatureStats::Continuous { mean, std, .. } => (*mean, *std),
            FeatureStats::Categorical { .. } => {
                panic!("mean/std requested for categorical feature")
            }
        }
    }

    /// Standardize + one-hot a row into the model's input vector.
    pub fn transform(&self, row: &Row) -> Result<DVector<f64>> {
        check_row(&self.schema, row)?;
        let mut out = DVector::zeros(self.encoded_width);
        for (fi, v) in row.iter().enumerate() {
            match (&self.stats[fi], v) {
                (FeatureStats::Continuous { mean, std, .. }, Value::Num(x)) => {
                    out[self.offsets[fi]] = (x - mean) / std;
                }
                (FeatureStats::Categorical { .. }, Value::Cat(c)) => {
                    out[self.offsets[fi] + c] = 1.0;
                }
                _ => unreachable!("check_row guarantees kind agreement"),
            }
        }
        Ok(out)
    }

    /// Decode an encoded vector: argmax over each one-hot block, then
    /// de-standardize continuous entries.
    pub fn inverse_transform(&self, encoded: &DVector<f64>) -> Result<Row> {
        if encoded.len() != self.encoded_width {
            return Err(Error::Dimension {
                expected: self.encoded_width,
                got: encoded.len(),
            });
        }
        let mut row = Row::with_capacity(self.schema.len());
        for (fi, s) in self.stats.iter().enumerate() {
            match s {
                FeatureStats::Continuous { mean, std, .. } => {
                    row.push(Value::Num(encoded[self.offsets[fi]] * std + mean));
                }
                FeatureStats::Categorical { n_categories } => {
                    let block = encoded.rows(self.offsets[fi], *n_categories);
                    let mut best = 0usize;
                    for c in 1..*n_categories {
                        if block[c] > block[best] {
                            best = c;
                        }
                    }
                    row.push(Value::Cat(best));
                }
            }
        }
        Ok(row)
    }

    /// Map continuous values to standardized units, leaving categories as-is.
    /// This is the space the counterfactual search operates in.
    pub fn standardize_row(&self, row: &Row) -> Result<Row> {
        check_row(&self.schema, row)?;
        Ok(row
            .iter()
            .enumerate()
            .map(|(fi, v)| match (v, &self.stats[fi]) {
                (Value::Num(x), FeatureStats::Continuous { mean, std, .. }) => {
                    Value::Num((x - mean) / std)
                }
                (v, _) => *v,
            })
            .collect())
    }

    /// Inverse of [`standardize_row`](Self::standardize_row).
    pub fn destandardize_row(&self, row: &Row) -> Result<Row> {
        if row.len() != self.schema.len() {
            return Err(Error::Dimension {
                expected: self.schema.len(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(fi, v)| match (v, &self.stats[fi]) {
                (Value::Num(x), FeatureStats::Continuous { mean, std, .. }) => {
                    Value::Num(x * std + mean)
                }
                (v, _) => *v,
            })
            .collect())
    }

    /// Encode a row already expressed in standardized units.
    pub fn encode_standardized(&self, row: &Row) -> DVector<f64> {
        let mut out = DVector::zeros(self.encoded_width);
        for (fi, v) in row.iter().enumerate() {
            match v {
                Value::Num(x) => out[self.offsets[fi]] = *x,
                Value::Cat(c) => out[self.offsets[fi] + c] = 1.0,
            }
        }
        out
    }

    /// Standardized continuous matrix of a whole dataset, one row per
    /// observation (the diffusion-map training space).
    pub fn continuous_matrix(&self, rows: &[Row]) -> nalgebra::DMatrix<f64> {
        let d = self.schema.n_continuous();
        let mut out = nalgebra::DMatrix::zeros(rows.len(), d);
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in self.continuous_coords(row).into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }

    /// Standardized continuous coordinates of a row (the diffusion-map input
    /// space); categorical features are dropped.
    pub fn continuous_coords(&self, row: &Row) -> Vec<f64> {
        row.iter()
            .enumerate()
            .filter_map(|(fi, v)| match (v, &self.stats[fi]) {
                (Value::Num(x), FeatureStats::Continuous { mean, std, .. }) => {
                    Some((x - mean) / std)
                }
                _ => None,
            })
            .collect()
    }
}
