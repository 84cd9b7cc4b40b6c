//! Directional-coherence scoring.
//!
//! For each feature, the model is probed with a control point that applies
//! only that feature's counterfactual change. The sign of the resulting
//! shift in the desired outcome (probability for classifiers, oriented
//! prediction delta for regressors) tells whether the joint move agrees with
//! the marginal one. User-declared marginal directions, when present on the
//! schema, replace the model probe.
//!
//! Two scores are available: the ratio of non-opposing features in [0, 1]
//! (default, unchanged features count as coherent) and the signed average in
//! [-1, 1] where unchanged features contribute zero.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataset::Task;
use crate::error::{Error, Result};
use crate::model::Predictor;
use crate::objective::DesiredOutcome;
use crate::preprocess::Preprocessor;
use crate::schema::{MarginalDirection, Row, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoherenceMode {
    /// score = |{f : sign(f) != -1}| / n.
    #[default]
    AlgorithmRatio,
    /// score = mean of signs, in [-1, 1].
    SignedAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub score: f64,
    /// Features whose marginal sign opposes the joint move.
    pub incoherent_features: Vec<String>,
    /// (feature name, sign) in schema order; signs are -1, 0, or +1.
    pub per_feature_signs: Vec<(String, i8)>,
}

fn sign_of(delta: f64) -> i8 {
    if delta > 0.0 {
        1
    } else if delta < 0.0 {
        -1
    } else {
        0
    }
}

fn memo_key(feature: usize, value: &Value) -> (usize, u64) {
    match value {
        Value::Num(x) => (feature, x.to_bits()),
        Value::Cat(c) => (feature, *c as u64),
    }
}

/// Probes a model's marginal response around a fixed instance, memoizing per
/// (feature, value) so a search run pays at most one model evaluation per
/// distinct single-feature change.
pub struct MarginalProber<'a> {
    model: &'a dyn Predictor,
    pp: &'a Preprocessor,
    desired: DesiredOutcome,
    /// Instance in standardized units.
    x_std: Row,
    /// Model output at `x_std`: desired-class probability or prediction.
    base: f64,
    /// +1 when the regression target lies above the current prediction,
    /// -1 below; unused for classification.
    direction: f64,
    memo: Mutex<HashMap<(usize, u64), f64>>,
    probes: AtomicUsize,
}

impl<'a> MarginalProber<'a> {
    pub fn new(
        model: &'a dyn Predictor,
        pp: &'a Preprocessor,
        x_std: Row,
        desired: DesiredOutcome,
    ) -> Result<Self> {
        let encoded = pp.encode_standardized(&x_std);
        let (base, direction) = match (&desired, model.task()) {
            (DesiredOutcome::Class(c), Task::Classification) => {
                let p = model.predict_proba(&encoded)?;
                if *c >= p.len() {
                    return Err(Error::Config(format!(
                        "desired class {c} out of range for a {}-class model",
                        p.len()
                    )));
                }
                (p[*c], 1.0)
            }
            (DesiredOutcome::Range { lo, hi }, Task::Regression) => {
                let pred = model.predict_value(&encoded)?;
                let mid = 0.5 * (lo + hi);
                (pred, if mid >= pred { 1.0 } else { -1.0 })
            }
            (DesiredOutcome::Class(_), Task::Regression) => {
                return Err(Error::TaskMismatch {
                    expected: "classification",
                })
            }
            (DesiredOutcome::Range { .. }, Task::Classification) => {
                return Err(Error::TaskMismatch {
                    expected: "regression",
                })
            }
        };
        Ok(MarginalProber {
            model,
            pp,
            desired,
            x_std,
            base,
            direction,
            memo: Mutex::new(HashMap::new()),
            probes: AtomicUsize::new(0),
        })
    }

    pub fn probe_count(&self) -> usize {
        self.probes.load(Ordering::Relaxed)
    }

    /// Model output (desired-class probability or prediction) for the
    /// control point that changes only `feature` to `value`.
    fn control_output(&self, feature: usize, value: &Value) -> Result<f64> {
        let key = memo_key(feature, value);
        if let Some(cached) = self.memo.lock().unwrap().get(&key) {
            return Ok(*cached);
        }
        let mut control = self.x_std.clone();
        control[feature] = *value;
        let encoded = self.pp.encode_standardized(&control);
        self.probes.fetch_add(1, Ordering::Relaxed);
        let out = match &self.desired {
            DesiredOutcome::Class(c) => self.model.predict_proba(&encoded)?[*c],
            DesiredOutcome::Range { .. } => self.model.predict_value(&encoded)?,
        };
        self.memo.lock().unwrap().insert(key, out);
        Ok(out)
    }

    /// Marginal sign of moving `feature` to the counterfactual's value.
    pub fn sign(&self, feature: usize, cf_value: &Value) -> Result<i8> {
        let schema = self.pp.schema();
        if feature >= schema.len() {
            return Err(Error::Schema(format!("feature index {feature} out of range")));
        }
        let unchanged = *cf_value == self.x_std[feature];

        if let Some(dir) = schema.feature(feature).marginal_override {
            if unchanged {
                return Ok(0);
            }
            let joint = cf_value.as_num() - self.x_std[feature].as_num();
            let wanted = match dir {
                MarginalDirection::Increase => 1.0,
                MarginalDirection::Decrease => -1.0,
            };
            return Ok(sign_of(joint * wanted));
        }

        if unchanged {
            return Ok(0);
        }
        let out = self.control_output(feature, cf_value)?;
        Ok(sign_of((out - self.base) * self.direction))
    }

    /// Score a full counterfactual move.
    pub fn report(&self, x_cf_std: &Row, mode: CoherenceMode) -> Result<CoherenceReport> {
        let schema = self.pp.schema();
        if x_cf_std.len() != schema.len() {
            return Err(Error::Dimension {
                expected: schema.len(),
                got: x_cf_std.len(),
            });
        }
        let mut signs = Vec::with_capacity(schema.len());
        let mut incoherent = Vec::new();
        let mut non_opposing = 0usize;
        let mut signed_sum = 0i64;
        for (fi, f) in schema.features().iter().enumerate() {
            let s = self.sign(fi, &x_cf_std[fi])?;
            if s != -1 {
                non_opposing += 1;
            } else {
                incoherent.push(f.name.clone());
            }
            signed_sum += i64::from(s);
            signs.push((f.name.clone(), s));
        }
        let n = schema.len() as f64;
        let score = match mode {
            CoherenceMode::AlgorithmRatio => non_opposing as f64 / n,
            CoherenceMode::SignedAverage => signed_sum as f64 / n,
        };
        Ok(CoherenceReport {
            score,
            incoherent_features: incoherent,
            per_feature_signs: signs,
        })
    }
}

/// Sign of the model's marginal response when only `feature_name` is moved
/// from `x`'s value to `x_cf`'s. Rows are in original units.
pub fn marginal_pred_sign(
    model: &dyn Predictor,
    pp: &Preprocessor,
    x: &Row,
    x_cf: &Row,
    feature_name: &str,
    desired: &DesiredOutcome,
) -> Result<i8> {
    let schema = pp.schema();
    let feature = schema
        .index_of(feature_name)
        .ok_or_else(|| Error::Schema(format!("unknown feature '{feature_name}'")))?;
    let x_std = pp.standardize_row(x)?;
    let cf_std = pp.standardize_row(x_cf)?;
    let prober = MarginalProber::new(model, pp, x_std, desired.clone())?;
    prober.sign(feature, &cf_std[feature])
}

/// Full coherence report for a counterfactual move, rows in original units.
pub fn directional_coherence(
    model: &dyn Predictor,
    pp: &Preprocessor,
    x: &Row,
    x_cf: &Row,
    desired: &DesiredOutcome,
    mode: CoherenceMode,
) -> Result<CoherenceReport> {
    let x_std = pp.standardize_row(x)?;
    let cf_std = pp.standardize_row(x_cf)?;
    let prober = MarginalProber::new(model, pp, x_std, desired.clone())?;
    prober.report(&cf_std, mode)
}
