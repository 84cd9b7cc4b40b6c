//! Genetic search for counterfactuals.
//!
//! Plain generational loop: seeded initialization (a mix of desired-class
//! training rows and Gaussian perturbations of the instance), elitist
//! truncation to the better half, uniform crossover, Gaussian mutation with
//! range clipping, and a patience-based stop on the best total. Everything
//! is driven by one ChaCha stream, so a (inputs, config, seed) triple fixes
//! the result exactly.

use log::warn;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::coherence::{CoherenceMode, CoherenceReport};
use crate::dataset::Dataset;
use crate::diffusion::DiffusionMap;
use crate::error::{Error, Result};
use crate::model::Predictor;
use crate::objective::{CandidateEvaluation, DesiredOutcome, Evaluator, ObjectiveWeights};
use crate::preprocess::Preprocessor;
use crate::schema::{check_row, Row, Value};

/// Convergence threshold on the best total objective.
const IMPROVEMENT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GAConfig {
    pub population_size: usize,
    pub max_iterations: usize,
    /// Per-feature mutation probability.
    pub mutation_rate: f64,
    /// Std of the Gaussian step, in standardized units.
    pub mutation_scale: f64,
    /// Per-feature probability of inheriting from the second parent.
    pub crossover_rate: f64,
    /// Share of the initial population drawn from desired-outcome training
    /// rows.
    pub init_fraction_sampled: f64,
    /// Generations without improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for GAConfig {
    fn default() -> Self {
        GAConfig {
            population_size: 60,
            max_iterations: 200,
            mutation_rate: 0.3,
            mutation_scale: 0.3,
            crossover_rate: 0.5,
            init_fraction_sampled: 0.5,
            patience: 20,
            seed: 0,
        }
    }
}

impl GAConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::Config("population_size must be >= 2".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        for (name, v) in [
            ("mutation_rate", self.mutation_rate),
            ("crossover_rate", self.crossover_rate),
            ("init_fraction_sampled", self.init_fraction_sampled),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !self.mutation_scale.is_finite() || self.mutation_scale <= 0.0 {
            return Err(Error::Config("mutation_scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    /// Counterfactual in original feature units.
    pub counterfactual: Row,
    /// Re-checked against the model after the search finished.
    pub valid: bool,
    pub evaluation: CandidateEvaluation,
    pub coherence: CoherenceReport,
    pub generations_used: usize,
    pub seed: u64,
    /// Best total objective after initialization and after each generation;
    /// non-increasing by elitism.
    pub best_history: Vec<f64>,
}

/// Per-feature clip range in standardized units (None for categorical).
type Ranges = Vec<Option<(f64, f64)>>;

/// Uniform crossover; frozen features always carry the instance's value.
pub fn crossover(
    a: &Row,
    b: &Row,
    rate: f64,
    x: &Row,
    frozen: &[bool],
    rng: &mut impl Rng,
) -> Row {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (va, vb))| {
            if frozen[i] {
                x[i]
            } else if rng.gen::<f64>() < rate {
                *vb
            } else {
                *va
            }
        })
        .collect()
}

/// Gaussian steps on continuous genes (clipped to the training range),
/// uniform resampling among the other categories for categorical genes.
pub fn mutate(
    row: &mut Row,
    mutation_rate: f64,
    mutation_scale: f64,
    ranges: &Ranges,
    n_categories: &[usize],
    frozen: &[bool],
    rng: &mut impl Rng,
) {
    for (i, v) in row.iter_mut().enumerate() {
        if frozen[i] {
            continue;
        }
        match v {
            Value::Num(x) => {
                if rng.gen::<f64>() < mutation_rate {
                    let step: f64 = rng.sample(StandardNormal);
                    let (lo, hi) = ranges[i].expect("continuous gene has a range");
                    *x = (*x + mutation_scale * step).clamp(lo, hi);
                }
            }
            Value::Cat(c) => {
                if rng.gen::<f64>() < mutation_rate {
                    let k = n_categories[i];
                    let mut pick = rng.gen_range(0..k - 1);
                    if pick >= *c {
                        pick += 1;
                    }
                    *c = pick;
                }
            }
        }
    }
}

/// Stable ascending sort by total objective; ties keep insertion order.
fn rank(pop: &mut [(Row, CandidateEvaluation)]) {
    pop.sort_by(|a, b| a.1.total.total_cmp(&b.1.total));
}

pub struct SearchContext<'a> {
    model: &'a dyn Predictor,
    pp: &'a Preprocessor,
    dm: Option<&'a DiffusionMap>,
    train: &'a Dataset,
    weights: ObjectiveWeights,
    coherence_mode: CoherenceMode,
    ga: GAConfig,
}

impl<'a> SearchContext<'a> {
    pub fn new(
        model: &'a dyn Predictor,
        pp: &'a Preprocessor,
        dm: Option<&'a DiffusionMap>,
        train: &'a Dataset,
        weights: ObjectiveWeights,
        coherence_mode: CoherenceMode,
        ga: GAConfig,
    ) -> Result<Self> {
        ga.validate()?;
        weights.validate()?;
        Ok(SearchContext {
            model,
            pp,
            dm,
            train,
            weights,
            coherence_mode,
            ga,
        })
    }

    pub fn ga(&self) -> &GAConfig {
        &self.ga
    }

    /// Standardized per-feature training ranges for clipping.
    fn feature_ranges(&self) -> Result<Ranges> {
        let schema = self.pp.schema();
        let mut ranges: Ranges = vec![None; schema.len()];
        for &i in &schema.continuous_indices() {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for row in &self.train.rows {
                let v = row[i].as_num();
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let (mean, std) = self.pp.mean_std_of(i);
            ranges[i] = Some(((lo - mean) / std, (hi - mean) / std));
        }
        Ok(ranges)
    }

    /// Training rows (standardized) currently predicted as the desired
    /// outcome.
    fn desired_pool(&self, evaluator: &Evaluator) -> Result<Vec<Row>> {
        let mut pool = Vec::new();
        for row in &self.train.rows {
            let encoded = self.pp.transform(row)?;
            let hit = match evaluator.desired() {
                DesiredOutcome::Class(_) => {
                    let p = self.model.predict_proba(&encoded)?;
                    evaluator.satisfied(Some(&p), None)
                }
                DesiredOutcome::Range { .. } => {
                    let v = self.model.predict_value(&encoded)?;
                    evaluator.satisfied(None, Some(v))
                }
            };
            if hit {
                pool.push(self.pp.standardize_row(row)?);
            }
        }
        Ok(pool)
    }

    fn init_population(
        &self,
        x_std: &Row,
        pool: &[Row],
        ranges: &Ranges,
        n_categories: &[usize],
        frozen: &[bool],
        rng: &mut impl Rng,
    ) -> Vec<Row> {
        let size = self.ga.population_size;
        let mut n_sampled =
            (self.ga.init_fraction_sampled * size as f64).round() as usize;
        n_sampled = n_sampled.min(size);
        if pool.is_empty() && n_sampled > 0 {
            warn!("no training rows predicted as the desired outcome; initializing from perturbations only");
            n_sampled = 0;
        }

        let mut population = Vec::with_capacity(size);
        for _ in 0..n_sampled {
            let mut member = pool[rng.gen_range(0..pool.len())].clone();
            for (i, v) in member.iter_mut().enumerate() {
                if frozen[i] {
                    *v = x_std[i];
                }
            }
            population.push(member);
        }
        // Perturbations are rate-limited per feature so members keep some
        // genes exactly at the instance's values; without that, the sparsity
        // term has nothing to select for.
        while population.len() < size {
            let mut member = x_std.clone();
            mutate(
                &mut member,
                self.ga.mutation_rate,
                self.ga.mutation_scale,
                ranges,
                n_categories,
                frozen,
                rng,
            );
            population.push(member);
        }
        population
    }

    /// Search for a counterfactual of `x` (original units) that reaches the
    /// desired outcome. Errors when `x` already satisfies it.
    pub fn find(&self, x: &Row, desired: &DesiredOutcome) -> Result<CounterfactualResult> {
        let schema = self.pp.schema();
        check_row(schema, x)?;
        let x_std = self.pp.standardize_row(x)?;

        let evaluator = Evaluator::new(
            self.model,
            self.pp,
            self.dm,
            x_std.clone(),
            desired.clone(),
            self.weights,
            self.coherence_mode,
        )?;

        // Precondition: the instance must not already satisfy the outcome.
        let x_encoded = self.pp.encode_standardized(&x_std);
        let already = match desired {
            DesiredOutcome::Class(_) => {
                let p = self.model.predict_proba(&x_encoded)?;
                evaluator.satisfied(Some(&p), None)
            }
            DesiredOutcome::Range { .. } => {
                let v = self.model.predict_value(&x_encoded)?;
                evaluator.satisfied(None, Some(v))
            }
        };
        if already {
            return Err(Error::AlreadyDesired);
        }

        let frozen: Vec<bool> = schema.features().iter().map(|f| f.frozen).collect();
        let n_categories: Vec<usize> = schema
            .features()
            .iter()
            .map(|f| match &f.kind {
                crate::schema::FeatureKind::Categorical { categories } => categories.len(),
                crate::schema::FeatureKind::Continuous => 0,
            })
            .collect();
        let ranges = self.feature_ranges()?;
        let pool = self.desired_pool(&evaluator)?;

        let mut rng = ChaCha8Rng::seed_from_u64(self.ga.seed);
        let members = self.init_population(&x_std, &pool, &ranges, &n_categories, &frozen, &mut rng);
        let mut population: Vec<(Row, CandidateEvaluation)> = members
            .into_iter()
            .map(|m| {
                let e = evaluator.evaluate(&m)?;
                Ok((m, e))
            })
            .collect::<Result<_>>()?;
        rank(&mut population);

        // Candidates that satisfy the outcome with the full loss margin are
        // preferred over bare prediction flips: extraction keys on meeting
        // the desired output robustly, and a zero-loss pick cannot sit on
        // the wrong side of the hinge boundary.
        let mut best_margin: Option<(Row, CandidateEvaluation)> = None;
        let mut best_valid: Option<(Row, CandidateEvaluation)> = None;
        let mut note_valid = |cand: &Row, eval: &CandidateEvaluation| {
            if !eval.valid {
                return;
            }
            if best_valid
                .as_ref()
                .is_none_or(|(_, b)| eval.total < b.total)
            {
                best_valid = Some((cand.clone(), eval.clone()));
            }
            if eval.loss_term == 0.0
                && best_margin
                    .as_ref()
                    .is_none_or(|(_, b)| eval.total < b.total)
            {
                best_margin = Some((cand.clone(), eval.clone()));
            }
        };
        for (cand, eval) in &population {
            note_valid(cand, eval);
        }

        let mut best_history = vec![population[0].1.total];
        let mut stale = 0usize;
        let mut generations = 0usize;

        while generations < self.ga.max_iterations && stale < self.ga.patience {
            let n_survivors = self.ga.population_size.div_ceil(2);
            population.truncate(n_survivors);

            let mut offspring = Vec::with_capacity(self.ga.population_size - n_survivors);
            while population.len() + offspring.len() < self.ga.population_size {
                let pa = rng.gen_range(0..n_survivors);
                let pb = rng.gen_range(0..n_survivors);
                let mut child = crossover(
                    &population[pa].0,
                    &population[pb].0,
                    self.ga.crossover_rate,
                    &x_std,
                    &frozen,
                    &mut rng,
                );
                mutate(
                    &mut child,
                    self.ga.mutation_rate,
                    self.ga.mutation_scale,
                    &ranges,
                    &n_categories,
                    &frozen,
                    &mut rng,
                );
                let eval = evaluator.evaluate(&child)?;
                note_valid(&child, &eval);
                offspring.push((child, eval));
            }
            population.extend(offspring);
            rank(&mut population);
            generations += 1;

            let best = population[0].1.total;
            let improved = best_history.last().copied().unwrap_or(f64::INFINITY) - best
                >= IMPROVEMENT_EPS;
            best_history.push(best);
            if improved {
                stale = 0;
            } else {
                stale += 1;
            }
        }

        let (chosen_std, mut evaluation) = best_margin
            .or(best_valid)
            .unwrap_or_else(|| population[0].clone());

        // Validity is re-checked against the model, not taken from search
        // state.
        let encoded = self.pp.encode_standardized(&chosen_std);
        let valid = match desired {
            DesiredOutcome::Class(_) => {
                let p = self.model.predict_proba(&encoded)?;
                evaluator.satisfied(Some(&p), None)
            }
            DesiredOutcome::Range { .. } => {
                let v = self.model.predict_value(&encoded)?;
                evaluator.satisfied(None, Some(v))
            }
        };
        evaluation.valid = valid;

        let coherence = evaluator.coherence_report(&chosen_std)?;
        let counterfactual = self.pp.destandardize_row(&chosen_std)?;

        Ok(CounterfactualResult {
            counterfactual,
            valid,
            evaluation,
            coherence,
            generations_used: generations,
            seed: self.ga.seed,
            best_history,
        })
    }
}
