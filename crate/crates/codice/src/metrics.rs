//! Evaluation metrics for generated counterfactuals, plus the PCA projection
//! used for coordinate exports.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::Preprocessor;
use crate::schema::{FeatureSchema, Row};
use crate::search::CounterfactualResult;

/// Percentage of results that achieved the desired outcome.
pub fn validity(results: &[CounterfactualResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Config("validity of an empty result set is undefined".into()));
    }
    let valid = results.iter().filter(|r| r.valid).count();
    Ok(100.0 * valid as f64 / results.len() as f64)
}

/// MAD-weighted L1 over continuous features, in original units.
pub fn weighted_l1(x: &Row, x_cf: &Row, pp: &Preprocessor) -> f64 {
    pp.schema()
        .continuous_indices()
        .into_iter()
        .map(|i| (x[i].as_num() - x_cf[i].as_num()).abs() / pp.mad_of(i))
        .sum()
}

/// Count of categorical features changed, raw and as a fraction of the
/// categorical features (0 when there are none).
pub fn l0_categorical(x: &Row, x_cf: &Row, schema: &FeatureSchema) -> (usize, f64) {
    let cats = schema.categorical_indices();
    if cats.is_empty() {
        return (0, 0.0);
    }
    let raw = cats
        .iter()
        .filter(|&&i| x[i].as_cat() != x_cf[i].as_cat())
        .count();
    (raw, raw as f64 / cats.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Population mean and standard deviation; `None` for an empty slice.
pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some(MeanStd {
        mean,
        std: var.sqrt(),
    })
}

/// Spearman rank correlation with average ranks on ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::Config("spearman needs at least 2 points".into()));
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let mx = rx.iter().sum::<f64>() / rx.len() as f64;
    let my = ry.iter().sum::<f64>() / ry.len() as f64;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::Config("spearman undefined for constant input".into()));
    }
    Ok(cov / (vx * vy).sqrt())
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    /// n x dims coordinates of the (centered) input.
    pub coords: DMatrix<f64>,
    /// Variance captured by each retained component, descending.
    pub explained_variance: Vec<f64>,
    /// d x dims component matrix, sign-fixed.
    pub components: DMatrix<f64>,
    pub mean: DVector<f64>,
}

impl PcaProjection {
    pub fn project(&self, point: &[f64]) -> DVector<f64> {
        let x = DVector::from_iterator(point.len(), point.iter().copied()) - &self.mean;
        self.components.transpose() * x
    }
}

/// Mean-centered projection onto the top principal components (population
/// covariance convention).
pub fn pca_project(x: &DMatrix<f64>, dims: usize) -> Result<PcaProjection> {
    let n = x.nrows();
    let d = x.ncols();
    if n < 2 {
        return Err(Error::Config("PCA needs at least 2 rows".into()));
    }
    if dims == 0 || dims > d {
        return Err(Error::Config(format!("dims must lie in [1, {d}], got {dims}")));
    }
    let mean = DVector::from_iterator(d, (0..d).map(|j| x.column(j).sum() / n as f64));
    let mut centered = x.clone();
    for i in 0..n {
        for j in 0..d {
            centered[(i, j)] -= mean[j];
        }
    }
    let cov = centered.transpose() * &centered / n as f64;
    let eig = nalgebra::SymmetricEigen::try_new(cov, 1e-13, 10_000)
        .ok_or_else(|| Error::Eigensolver("PCA eigensolve did not converge".into()))?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut components = DMatrix::zeros(d, dims);
    let mut explained = Vec::with_capacity(dims);
    for (c, &idx) in order.iter().take(dims).enumerate() {
        let mut col = eig.eigenvectors.column(idx).into_owned();
        // Same sign convention as the diffusion eigenvectors.
        let mut max_idx = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[max_idx].abs() {
                max_idx = i;
            }
        }
        if col[max_idx] < 0.0 {
            col *= -1.0;
        }
        components.set_column(c, &col);
        explained.push(eig.eigenvalues[idx].max(0.0));
    }
    let coords = &centered * &components;
    Ok(PcaProjection {
        coords,
        explained_variance: explained,
        components,
        mean,
    })
}
