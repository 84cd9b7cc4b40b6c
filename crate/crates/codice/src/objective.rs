//! The composite counterfactual objective.
//!
//! total = loss + lambda1 * (proximity + categorical) + lambda2 * sparsity
//!         + lambda3 * (1 - coherence score)
//!
//! The outcome loss is a hinge on the desired-class logit with unit margin
//! for classification, and the squared distance to the target interval for
//! regression. Proximity is either the diffusion distance over continuous
//! features or a MAD-weighted L1; categorical changes are charged separately
//! under the same lambda1. The acknowledged overlap between the categorical
//! term and sparsity is intentional and kept.

use serde::{Deserialize, Serialize};

use crate::coherence::{CoherenceMode, MarginalProber};
use crate::dataset::Task;
use crate::diffusion::DiffusionMap;
use crate::error::{Error, Result};
use crate::model::Predictor;
use crate::preprocess::{FeatureStats, Preprocessor};
use crate::schema::{FeatureSchema, Row, Value};

/// Continuous changes below this magnitude (standardized units) do not count
/// as modifications for the sparsity term.
pub const SPARSITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProximityMode {
    #[default]
    Diffusion,
    WeightedL1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub proximity_mode: ProximityMode,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights {
            lambda1: 0.5,
            lambda2: 0.5,
            lambda3: 0.5,
            proximity_mode: ProximityMode::Diffusion,
        }
    }
}

impl ObjectiveWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "{name} must be a finite non-negative number, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", untagged)]
pub enum DesiredOutcome {
    Class(usize),
    Range { lo: f64, hi: f64 },
}

impl DesiredOutcome {
    pub fn validate(&self, task: Task) -> Result<()> {
        match (self, task) {
            (DesiredOutcome::Class(_), Task::Classification) => Ok(()),
            (DesiredOutcome::Range { lo, hi }, Task::Regression) => {
                if lo <= hi {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "desired range is empty: [{lo}, {hi}]"
                    )))
                }
            }
            _ => Err(Error::Config(
                "desired outcome kind does not match the model task".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEvaluation {
    pub total: f64,
    pub loss_term: f64,
    pub proximity_term: f64,
    pub categorical_term: f64,
    pub sparsity_term: f64,
    pub coherence_penalty: f64,
    pub valid: bool,
}

/// Hinge on the desired-class logit with unit margin; probabilities are
/// clamped so the logit stays finite.
pub fn hinge_loss(p_desired: f64) -> f64 {
    let p = p_desired.clamp(1e-12, 1.0 - 1e-12);
    let logit = (p / (1.0 - p)).ln();
    (1.0 - logit).max(0.0)
}

/// Squared distance from the prediction to the target interval.
pub fn mse_loss(prediction: f64, lo: f64, hi: f64) -> f64 {
    if prediction < lo {
        (lo - prediction).powi(2)
    } else if prediction > hi {
        (prediction - hi).powi(2)
    } else {
        0.0
    }
}

/// Fraction of features changed, over all features. Rows must share units.
pub fn sparsity(x: &Row, x_cf: &Row) -> f64 {
    let changed = x
        .iter()
        .zip(x_cf)
        .filter(|(a, b)| match (a, b) {
            (Value::Num(p), Value::Num(q)) => (p - q).abs() > SPARSITY_TOLERANCE,
            (Value::Cat(p), Value::Cat(q)) => p != q,
            _ => true,
        })
        .count();
    changed as f64 / x.len() as f64
}

/// Fraction of categorical features whose category differs; 0 when the
/// schema has no categorical features.
pub fn dist_cat(x: &Row, x_cf: &Row, schema: &FeatureSchema) -> f64 {
    let cats = schema.categorical_indices();
    if cats.is_empty() {
        return 0.0;
    }
    let changed = cats
        .iter()
        .filter(|&&i| x[i].as_cat() != x_cf[i].as_cat())
        .count();
    changed as f64 / cats.len() as f64
}

/// Scores candidates against a fixed instance. The instance's diffusion
/// coordinates and marginal probes are cached; evaluating distinct
/// candidates concurrently is safe.
pub struct Evaluator<'a> {
    model: &'a dyn Predictor,
    pp: &'a Preprocessor,
    dm: Option<&'a DiffusionMap>,
    weights: ObjectiveWeights,
    desired: DesiredOutcome,
    coherence_mode: CoherenceMode,
    x_std: Row,
    x_coords: Option<nalgebra::DVector<f64>>,
    /// Per continuous feature: std/MAD, so the weighted L1 over standardized
    /// deltas equals the MAD-weighted distance in original units.
    l1_scale: Vec<(usize, f64)>,
    prober: MarginalProber<'a>,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        model: &'a dyn Predictor,
        pp: &'a Preprocessor,
        dm: Option<&'a DiffusionMap>,
        x_std: Row,
        desired: DesiredOutcome,
        weights: ObjectiveWeights,
        coherence_mode: CoherenceMode,
    ) -> Result<Self> {
        weights.validate()?;
        desired.validate(model.task())?;
        let x_coords = match weights.proximity_mode {
            ProximityMode::Diffusion => {
                let dm = dm.ok_or_else(|| {
                    Error::Config(
                        "proximity_mode = diffusion requires a fitted diffusion map".into(),
                    )
                })?;
                Some(dm.extend(&continuous_of(pp, &x_std))?.coords)
            }
            ProximityMode::WeightedL1 => None,
        };
        let schema = pp.schema();
        let l1_scale = schema
            .continuous_indices()
            .into_iter()
            .map(|i| {
                let (_, std) = pp.mean_std_of(i);
                (i, std / pp.mad_of(i))
            })
            .collect();
        let prober = MarginalProber::new(model, pp, x_std.clone(), desired.clone())?;
        Ok(Evaluator {
            model,
            pp,
            dm,
            weights,
            desired,
            coherence_mode,
            x_std,
            x_coords,
            l1_scale,
            prober,
        })
    }

    pub fn weights(&self) -> &ObjectiveWeights {
        &self.weights
    }

    pub fn desired(&self) -> &DesiredOutcome {
        &self.desired
    }

    pub fn x_std(&self) -> &Row {
        &self.x_std
    }

    /// Model evaluations spent probing marginal directions so far.
    pub fn probe_count(&self) -> usize {
        self.prober.probe_count()
    }

    /// Whether a raw model output satisfies the desired outcome.
    pub fn satisfied(&self, proba: Option<&[f64]>, value: Option<f64>) -> bool {
        match &self.desired {
            DesiredOutcome::Class(c) => {
                let p = proba.expect("classification outcome needs probabilities");
                let mut best = 0;
                for (i, v) in p.iter().enumerate().skip(1) {
                    if *v > p[best] {
                        best = i;
                    }
                }
                best == *c
            }
            DesiredOutcome::Range { lo, hi } => {
                let v = value.expect("regression outcome needs a prediction");
                v >= *lo && v <= *hi
            }
        }
    }

    pub fn coherence_report(&self, cand_std: &Row) -> Result<crate::coherence::CoherenceReport> {
        self.prober.report(cand_std, self.coherence_mode)
    }

    pub fn evaluate(&self, cand_std: &Row) -> Result<CandidateEvaluation> {
        let encoded = self.pp.encode_standardized(cand_std);

        let (loss_term, valid) = match &self.desired {
            DesiredOutcome::Class(c) => {
                let proba = self.model.predict_proba(&encoded)?;
                (hinge_loss(proba[*c]), self.satisfied(Some(&proba), None))
            }
            DesiredOutcome::Range { lo, hi } => {
                let value = self.model.predict_value(&encoded)?;
                (mse_loss(value, *lo, *hi), self.satisfied(None, Some(value)))
            }
        };

        let proximity_term = match self.weights.proximity_mode {
            ProximityMode::Diffusion => {
                let dm = self.dm.expect("checked at construction");
                let cand_coords = dm.extend(&continuous_of(self.pp, cand_std))?.coords;
                DiffusionMap::distance_between_coords(
                    self.x_coords.as_ref().expect("cached at construction"),
                    &cand_coords,
                )
            }
            ProximityMode::WeightedL1 => self
                .l1_scale
                .iter()
                .map(|&(i, scale)| scale * (cand_std[i].as_num() - self.x_std[i].as_num()).abs())
                .sum(),
        };

        let categorical_term = dist_cat(&self.x_std, cand_std, self.pp.schema());
        let sparsity_term = sparsity(&self.x_std, cand_std);

        let coherence_penalty = if self.weights.lambda3 == 0.0 {
            0.0
        } else {
            1.0 - self.prober.report(cand_std, self.coherence_mode)?.score
        };

        let total = loss_term
            + self.weights.lambda1 * (proximity_term + categorical_term)
            + self.weights.lambda2 * sparsity_term
            + self.weights.lambda3 * coherence_penalty;

        Ok(CandidateEvaluation {
            total,
            loss_term,
            proximity_term,
            categorical_term,
            sparsity_term,
            coherence_penalty,
            valid,
        })
    }
}

/// Standardized continuous coordinates of a standardized-units row.
fn continuous_of(pp: &Preprocessor, row_std: &Row) -> Vec<f64> {
    pp.schema()
        .continuous_indices()
        .into_iter()
        .map(|i| match (&row_std[i], pp.stats(i)) {
            (Value::Num(x), FeatureStats::Continuous { .. }) => *x,
            _ => unreachable!("continuous index yields a numeric value"),
        })
        .collect()
}
