//! Black-box prediction contract and built-in reference models.
//!
//! The counterfactual engine only ever sees the [`Predictor`] trait; the
//! built-in models exist so experiments are reproducible without external
//! tooling. All predictors are immutable after training and safe to share
//! across worker threads.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Target, Task};
use crate::error::{Error, Result};
use crate::preprocess::Preprocessor;

/// Lowest index wins ties, so argmax is deterministic.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prediction {
    Class(usize),
    Value(f64),
}

/// Deterministic prediction over encoded (standardized + one-hot) inputs.
pub trait Predictor: Send + Sync {
    fn task(&self) -> Task;

    /// Number of classes for classification, 0 for regression.
    fn n_classes(&self) -> usize;

    /// Class-probability simplex. Errors on regression predictors.
    fn predict_proba(&self, x: &DVector<f64>) -> Result<Vec<f64>>;

    /// Real-valued prediction. Errors on classification predictors.
    fn predict_value(&self, x: &DVector<f64>) -> Result<f64>;

    fn predict(&self, x: &DVector<f64>) -> Result<Prediction> {
        match self.task() {
            Task::Classification => Ok(Prediction::Class(argmax(&self.predict_proba(x)?))),
            Task::Regression => Ok(Prediction::Value(self.predict_value(x)?)),
        }
    }
}

/// Multinomial logistic model: one logit row per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    weights: DMatrix<f64>,
    bias: DVector<f64>,
}

impl LogisticModel {
    /// Binary model with explicit class-1 logit `w . x + b`.
    pub fn binary(weights: &[f64], bias: f64) -> Self {
        let d = weights.len();
        let mut w = DMatrix::zeros(2, d);
        for (j, v) in weights.iter().enumerate() {
            w[(1, j)] = *v;
        }
        LogisticModel {
            weights: w,
            bias: DVector::from_vec(vec![0.0, bias]),
        }
    }

    fn logits(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.weights * x + &self.bias
    }

    fn proba(&self, x: &DVector<f64>) -> Vec<f64> {
        let logits = self.logits(x);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.iter().map(|e| e / sum).collect()
    }
}

impl Predictor for LogisticModel {
    fn task(&self) -> Task {
        Task::Classification
    }

    fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    fn predict_proba(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        if x.len() != self.weights.ncols() {
            return Err(Error::Dimension {
                expected: self.weights.ncols(),
                got: x.len(),
            });
        }
        Ok(self.proba(x))
    }

    fn predict_value(&self, _x: &DVector<f64>) -> Result<f64> {
        Err(Error::TaskMismatch {
            expected: "regression",
        })
    }
}

/// k-nearest-neighbor probability classifier (Euclidean in encoded space).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    x: DMatrix<f64>,
    y: Vec<usize>,
    k: usize,
    n_classes: usize,
}

impl Predictor for KnnModel {
    fn task(&self) -> Task {
        Task::Classification
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        if x.len() != self.x.ncols() {
            return Err(Error::Dimension {
                expected: self.x.ncols(),
                got: x.len(),
            });
        }
        let mut dist: Vec<(f64, usize)> = (0..self.x.nrows())
            .map(|i| {
                let d2: f64 = (0..self.x.ncols())
                    .map(|j| (self.x[(i, j)] - x[j]).powi(2))
                    .sum();
                (d2, i)
            })
            .collect();
        // Ties broken by training index for determinism.
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut counts = vec![0usize; self.n_classes];
        for (_, i) in dist.iter().take(self.k) {
            counts[self.y[*i]] += 1;
        }
        Ok(counts
            .iter()
            .map(|&c| c as f64 / self.k as f64)
            .collect())
    }

    fn predict_value(&self, _x: &DVector<f64>) -> Result<f64> {
        Err(Error::TaskMismatch {
            expected: "regression",
        })
    }
}

/// Ridge linear regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    weights: DVector<f64>,
    bias: f64,
}

impl RidgeModel {
    pub fn new(weights: &[f64], bias: f64) -> Self {
        RidgeModel {
            weights: DVector::from_vec(weights.to_vec()),
            bias,
        }
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }
}

impl Predictor for RidgeModel {
    fn task(&self) -> Task {
        Task::Regression
    }

    fn n_classes(&self) -> usize {
        0
    }

    fn predict_proba(&self, _x: &DVector<f64>) -> Result<Vec<f64>> {
        Err(Error::TaskMismatch {
            expected: "classification",
        })
    }

    fn predict_value(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::Dimension {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        Ok(self.weights.dot(x) + self.bias)
    }
}

/// Serializable built-in model, tagged with the schema it was trained for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BuiltinModel {
    Logistic(LogisticModel),
    Knn(KnnModel),
    Ridge(RidgeModel),
}

impl BuiltinModel {
    fn inner(&self) -> &dyn Predictor {
        match self {
            BuiltinModel::Logistic(m) => m,
            BuiltinModel::Knn(m) => m,
            BuiltinModel::Ridge(m) => m,
        }
    }
}

impl Predictor for BuiltinModel {
    fn task(&self) -> Task {
        self.inner().task()
    }
    fn n_classes(&self) -> usize {
        self.inner().n_classes()
    }
    fn predict_proba(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        self.inner().predict_proba(x)
    }
    fn predict_value(&self, x: &DVector<f64>) -> Result<f64> {
        self.inner().predict_value(x)
    }
}

/// On-disk form of a trained model; the schema hash guards against applying
/// a model to data it was not trained for.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema_hash: String,
    pub model: BuiltinModel,
}

impl ModelArtifact {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

fn encode_dataset(train: &Dataset, pp: &Preprocessor) -> Result<(DMatrix<f64>, usize)> {
    let n = train.n_rows();
    let d = pp.encoded_width();
    let mut x = DMatrix::zeros(n, d);
    for (i, row) in train.rows.iter().enumerate() {
        let enc = pp.transform(row)?;
        x.row_mut(i).copy_from(&enc.transpose());
    }
    Ok((x, d))
}

fn class_labels(train: &Dataset) -> Result<(Vec<usize>, usize)> {
    let labels = match &train.target {
        Target::Labels(l) => l.clone(),
        Target::Values(_) => {
            return Err(Error::TaskMismatch {
                expected: "classification",
            })
        }
    };
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut seen = vec![false; n_classes];
    for &l in &labels {
        seen[l] = true;
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::SingleClass);
    }
    Ok((labels, n_classes))
}

/// Full-batch gradient descent with backtracking line search on the mean
/// cross-entropy plus an L2 penalty on the weights (bias unpenalized). The
/// training loss is non-increasing across iterations by construction.
pub fn train_logistic(
    train: &Dataset,
    pp: &Preprocessor,
    l2_penalty: f64,
    max_iter: usize,
    tol: f64,
) -> Result<LogisticModel> {
    let (x, d) = encode_dataset(train, pp)?;
    let (labels, n_classes) = class_labels(train)?;
    let n = x.nrows() as f64;

    let mut w = DMatrix::<f64>::zeros(n_classes, d);
    let mut b = DVector::<f64>::zeros(n_classes);

    let loss_and_grad = |w: &DMatrix<f64>, b: &DVector<f64>| {
        let mut loss = 0.0;
        let mut gw = DMatrix::<f64>::zeros(n_classes, d);
        let mut gb = DVector::<f64>::zeros(n_classes);
        for i in 0..x.nrows() {
            let xi = x.row(i).transpose();
            let logits = w * &xi + b;
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            loss += -(logits[labels[i]] - max - sum.ln());
            for c in 0..n_classes {
                let p = exps[c] / sum;
                let delta = p - f64::from(u8::from(c == labels[i]));
                gb[c] += delta;
                for j in 0..d {
                    gw[(c, j)] += delta * xi[j];
                }
            }
        }
        loss /= n;
        gw /= n;
        gb /= n;
        loss += 0.5 * l2_penalty * w.iter().map(|v| v * v).sum::<f64>();
        gw += l2_penalty * w;
        (loss, gw, gb)
    };

    let mut step = 1.0f64;
    for _ in 0..max_iter {
        let (loss, gw, gb) = loss_and_grad(&w, &b);
        let grad_norm = (gw.iter().map(|v| v * v).sum::<f64>()
            + gb.iter().map(|v| v * v).sum::<f64>())
        .sqrt();
        if grad_norm < tol {
            break;
        }
        // Armijo backtracking from a slowly growing trial step.
        step = (step * 2.0).min(1e3);
        let mut accepted = false;
        while step > 1e-12 {
            let w_new = &w - step * &gw;
            let b_new = &b - step * &gb;
            let (loss_new, _, _) = loss_and_grad(&w_new, &b_new);
            if loss_new <= loss - 1e-4 * step * grad_norm * grad_norm {
                w = w_new;
                b = b_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    Ok(LogisticModel { weights: w, bias: b })
}

pub fn train_knn_prob(train: &Dataset, pp: &Preprocessor, k: usize) -> Result<KnnModel> {
    let (x, _) = encode_dataset(train, pp)?;
    let (labels, n_classes) = class_labels(train)?;
    if k == 0 || k > x.nrows() {
        return Err(Error::KTooLarge { k, n: x.nrows() });
    }
    Ok(KnnModel {
        x,
        y: labels,
        k,
        n_classes,
    })
}

/// Ridge regression via least squares on the penalty-augmented system; the
/// bias column is left unpenalized.
pub fn train_linear_regression(
    train: &Dataset,
    pp: &Preprocessor,
    l2_penalty: f64,
) -> Result<RidgeModel> {
    let (x, d) = encode_dataset(train, pp)?;
    let y = match &train.target {
        Target::Values(v) => v.clone(),
        Target::Labels(_) => {
            return Err(Error::TaskMismatch {
                expected: "regression",
            })
        }
    };
    let n = x.nrows();

    let mut a = DMatrix::<f64>::zeros(n + d, d + 1);
    let mut rhs = DVector::<f64>::zeros(n + d);
    for i in 0..n {
        for j in 0..d {
            a[(i, j)] = x[(i, j)];
        }
        a[(i, d)] = 1.0;
        rhs[i] = y[i];
    }
    let sqrt_l2 = l2_penalty.max(0.0).sqrt();
    for j in 0..d {
        a[(n + j, j)] = sqrt_l2;
    }

    let svd = a.svd(true, true);
    let solution = svd
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Eigensolver(e.to_string()))?;
    let weights = DVector::from_iterator(d, (0..d).map(|j| solution[j]));
    Ok(RidgeModel {
        weights,
        bias: solution[d],
    })
}

/// Fraction of test rows whose predicted class matches the label.
pub fn accuracy(model: &dyn Predictor, test: &Dataset, pp: &Preprocessor) -> Result<f64> {
    if test.n_rows() == 0 {
        return Err(Error::EmptyTestSet);
    }
    let labels = match &test.target {
        Target::Labels(l) => l,
        Target::Values(_) => {
            return Err(Error::TaskMismatch {
                expected: "classification",
            })
        }
    };
    let mut correct = 0usize;
    for (row, &label) in test.rows.iter().zip(labels) {
        let enc = pp.transform(row)?;
        if let Prediction::Class(c) = model.predict(&enc)? {
            if c == label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / test.n_rows() as f64)
}
