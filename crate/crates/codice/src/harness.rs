//! Batch evaluation: benchmark runs over the first eligible test instances,
//! term ablations, the proximity/coherence trade-off sweep, and report
//! emission (CSV tables, line-delimited result records, coordinate exports).
//!
//! Instances run in parallel; each search derives its own seed from the run
//! seed and the instance ordinal, so reports do not depend on the worker
//! count. Distance and coherence statistics aggregate valid results only.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherence::CoherenceMode;
use crate::dataset::Dataset;
use crate::diffusion::DiffusionMap;
use crate::error::{Error, Result};
use crate::metrics::{l0_categorical, mean_std, pca_project, weighted_l1, MeanStd};
use crate::model::Predictor;
use crate::objective::{sparsity, DesiredOutcome, ObjectiveWeights, ProximityMode};
use crate::preprocess::Preprocessor;
use crate::schema::Row;
use crate::search::{CounterfactualResult, GAConfig, SearchContext};

/// One engine variant to benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    pub weights: ObjectiveWeights,
}

/// Standard variant pair: diffusion proximity vs. weighted L1 proximity.
pub fn default_methods(base: ObjectiveWeights) -> Vec<MethodSpec> {
    vec![
        MethodSpec {
            name: "CoDiCE_diff".into(),
            weights: ObjectiveWeights {
                proximity_mode: ProximityMode::Diffusion,
                ..base
            },
        },
        MethodSpec {
            name: "CoDiCE_L1".into(),
            weights: ObjectiveWeights {
                proximity_mode: ProximityMode::WeightedL1,
                ..base
            },
        },
    ]
}

/// Per-counterfactual metrics attached to each emitted record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMetrics {
    pub diffusion: f64,
    pub weighted_l1: f64,
    pub l0_categorical: usize,
    pub l0_categorical_norm: f64,
    pub sparsity: f64,
    pub dcoherence: f64,
}

/// One line of the line-delimited result log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub method: String,
    /// Position of the instance in the fixed test-set order.
    pub instance_index: usize,
    /// Input row in original units.
    pub input: Row,
    pub result: CounterfactualResult,
    pub metrics: RecordMetrics,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    /// Deactivated weights, for ablation tables.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inactive: Option<String>,
    pub n_attempted: usize,
    pub n_valid: usize,
    pub validity_pct: f64,
    pub diffusion: Option<MeanStd>,
    pub weighted_l1: Option<MeanStd>,
    pub l0_categorical: Option<MeanStd>,
    pub l0_categorical_raw: Option<MeanStd>,
    pub sparsity: Option<MeanStd>,
    pub dcoherence: Option<MeanStd>,
    pub mean_wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<MethodRow>,
    pub records: Vec<ResultRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub validity_pct: f64,
    pub mean_diffusion: Option<f64>,
    pub mean_coherence_penalty: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub rows: Vec<MethodRow>,
    pub records: Vec<ResultRecord>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-instance search seed, independent of worker scheduling.
fn instance_seed(base: u64, ordinal: usize) -> u64 {
    splitmix64(base ^ splitmix64(ordinal as u64 + 1))
}

/// Attach the evaluation metrics to a finished search result.
pub fn build_record(
    method: &str,
    instance_index: usize,
    input: &Row,
    result: CounterfactualResult,
    wall_clock_s: f64,
    pp: &Preprocessor,
    dm: &DiffusionMap,
) -> Result<ResultRecord> {
    let x_std = pp.standardize_row(input)?;
    let cf_std = pp.standardize_row(&result.counterfactual)?;
    let (l0_raw, l0_norm) = l0_categorical(input, &result.counterfactual, pp.schema());
    let metrics = RecordMetrics {
        diffusion: dm.distance(
            &pp.continuous_coords(input),
            &pp.continuous_coords(&result.counterfactual),
        )?,
        weighted_l1: weighted_l1(input, &result.counterfactual, pp),
        l0_categorical: l0_raw,
        l0_categorical_norm: l0_norm,
        sparsity: sparsity(&x_std, &cf_std),
        dcoherence: result.coherence.score,
    };
    Ok(ResultRecord {
        method: method.to_string(),
        instance_index,
        input: input.clone(),
        result,
        metrics,
        wall_clock_s,
    })
}

pub struct Harness<'a> {
    pub model: &'a dyn Predictor,
    pub pp: &'a Preprocessor,
    pub dm: &'a DiffusionMap,
    pub train: &'a Dataset,
    pub test: &'a Dataset,
    pub desired: DesiredOutcome,
    pub coherence_mode: CoherenceMode,
    pub ga: GAConfig,
}

impl<'a> Harness<'a> {
    /// First `n` test rows (in fixed order) whose prediction differs from
    /// the desired outcome; rows already satisfying it are skipped.
    pub fn eligible_instances(&self, n: usize) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for (i, row) in self.test.rows.iter().enumerate() {
            if out.len() == n {
                break;
            }
            let encoded = self.pp.transform(row)?;
            let satisfied = match &self.desired {
                DesiredOutcome::Class(c) => {
                    let p = self.model.predict_proba(&encoded)?;
                    let mut best = 0;
                    for (k, v) in p.iter().enumerate().skip(1) {
                        if *v > p[best] {
                            best = k;
                        }
                    }
                    best == *c
                }
                DesiredOutcome::Range { lo, hi } => {
                    let v = self.model.predict_value(&encoded)?;
                    v >= *lo && v <= *hi
                }
            };
            if !satisfied {
                out.push(i);
            }
        }
        if out.is_empty() {
            return Err(Error::NoEligibleInstances);
        }
        Ok(out)
    }

    fn run_method(
        &self,
        method: &MethodSpec,
        instances: &[usize],
        base_seed: u64,
    ) -> Result<(MethodRow, Vec<ResultRecord>)> {
        let records: Vec<ResultRecord> = instances
            .par_iter()
            .enumerate()
            .map(|(ordinal, &idx)| {
                let seed = instance_seed(base_seed, ordinal);
                let ctx = SearchContext::new(
                    self.model,
                    self.pp,
                    Some(self.dm),
                    self.train,
                    method.weights,
                    self.coherence_mode,
                    GAConfig { seed, ..self.ga },
                )?;
                let x = &self.test.rows[idx];
                let started = Instant::now();
                let result = ctx.find(x, &self.desired)?;
                let wall_clock_s = started.elapsed().as_secs_f64();
                build_record(&method.name, idx, x, result, wall_clock_s, self.pp, self.dm)
            })
            .collect::<Result<_>>()?;

        let n_attempted = records.len();
        let n_valid = records.iter().filter(|r| r.result.valid).count();
        let valid: Vec<&ResultRecord> =
            records.iter().filter(|r| r.result.valid).collect();
        let stat = |f: &dyn Fn(&ResultRecord) -> f64| {
            mean_std(&valid.iter().map(|r| f(r)).collect::<Vec<_>>())
        };
        let row = MethodRow {
            method: method.name.clone(),
            inactive: None,
            n_attempted,
            n_valid,
            validity_pct: 100.0 * n_valid as f64 / n_attempted as f64,
            diffusion: stat(&|r| r.metrics.diffusion),
            weighted_l1: stat(&|r| r.metrics.weighted_l1),
            l0_categorical: stat(&|r| r.metrics.l0_categorical_norm),
            l0_categorical_raw: stat(&|r| r.metrics.l0_categorical as f64),
            sparsity: stat(&|r| r.metrics.sparsity),
            dcoherence: stat(&|r| r.metrics.dcoherence),
            mean_wall_clock_s: records.iter().map(|r| r.wall_clock_s).sum::<f64>()
                / n_attempted as f64,
        };
        Ok((row, records))
    }

    pub fn run_benchmark(
        &self,
        methods: &[MethodSpec],
        n_instances: usize,
        seed: u64,
    ) -> Result<BenchmarkReport> {
        if methods.is_empty() {
            return Err(Error::Config("benchmark needs at least one method".into()));
        }
        let instances = self.eligible_instances(n_instances)?;
        let mut rows = Vec::new();
        let mut records = Vec::new();
        for method in methods {
            let (row, mut recs) = self.run_method(method, &instances, seed)?;
            rows.push(row);
            records.append(&mut recs);
        }
        Ok(BenchmarkReport { rows, records })
    }

    /// Three single-term runs: all weights except the one under
    /// investigation set to zero.
    pub fn run_ablation(
        &self,
        active_weight: f64,
        proximity_mode: ProximityMode,
        n_instances: usize,
        seed: u64,
    ) -> Result<BenchmarkReport> {
        let w = active_weight;
        let specs = [
            ("proximity_only", "lambda2, lambda3", (w, 0.0, 0.0)),
            ("sparsity_only", "lambda1, lambda3", (0.0, w, 0.0)),
            ("coherence_only", "lambda1, lambda2", (0.0, 0.0, w)),
        ];
        let methods: Vec<MethodSpec> = specs
            .iter()
            .map(|(name, _, (l1, l2, l3))| MethodSpec {
                name: (*name).into(),
                weights: ObjectiveWeights {
                    lambda1: *l1,
                    lambda2: *l2,
                    lambda3: *l3,
                    proximity_mode,
                },
            })
            .collect();
        let mut report = self.run_benchmark(&methods, n_instances, seed)?;
        for (row, (_, inactive, _)) in report.rows.iter_mut().zip(&specs) {
            row.inactive = Some((*inactive).into());
        }
        Ok(report)
    }

    /// Vary lambda1 over a grid with lambda2 fixed and lambda3 = 1 - lambda1.
    pub fn run_tradeoff_sweep(
        &self,
        grid: &[f64],
        lambda2: f64,
        n_instances: usize,
        seed: u64,
    ) -> Result<SweepReport> {
        if grid.len() < 3 {
            return Err(Error::Config("sweep grid needs at least 3 points".into()));
        }
        if grid.iter().any(|&l| !(0.0..=1.0).contains(&l)) {
            return Err(Error::Config(
                "sweep grid values must lie in [0, 1] so lambda3 = 1 - lambda1 stays valid".into(),
            ));
        }
        let methods: Vec<MethodSpec> = grid
            .iter()
            .map(|&l1| MethodSpec {
                name: format!("lambda1={l1}"),
                weights: ObjectiveWeights {
                    lambda1: l1,
                    lambda2,
                    lambda3: 1.0 - l1,
                    proximity_mode: ProximityMode::Diffusion,
                },
            })
            .collect();
        let report = self.run_benchmark(&methods, n_instances, seed)?;
        let points = grid
            .iter()
            .zip(&report.rows)
            .map(|(&l1, row)| {
                // Penalty is 1 - score; the mean over valid results follows
                // from the dcoherence statistic.
                let mean_pen = row.dcoherence.map(|m| 1.0 - m.mean);
                SweepPoint {
                    lambda1: l1,
                    lambda2,
                    lambda3: 1.0 - l1,
                    validity_pct: row.validity_pct,
                    mean_diffusion: row.diffusion.map(|m| m.mean),
                    mean_coherence_penalty: mean_pen,
                }
            })
            .collect();
        Ok(SweepReport {
            points,
            rows: report.rows,
            records: report.records,
        })
    }
}

fn fmt_stat(cell: &Option<MeanStd>) -> (String, String) {
    match cell {
        Some(m) => (format!("{:.4}", m.mean), format!("{:.4}", m.std)),
        None => (String::new(), String::new()),
    }
}

impl BenchmarkReport {
    /// Table-style CSV: method, validity, diffusion, L1 continuous,
    /// optionally L0 categorical, directional coherence.
    pub fn to_csv(&self, include_categorical: bool) -> String {
        let mut out = String::from("method,validity_pct,diffusion_mean,diffusion_std,l1_continuous_mean,l1_continuous_std");
        if include_categorical {
            out.push_str(",l0_categorical_mean,l0_categorical_std");
        }
        out.push_str(",dcoherence_mean,dcoherence_std\n");
        for row in &self.rows {
            let (dm, ds) = fmt_stat(&row.diffusion);
            let (lm, ls) = fmt_stat(&row.weighted_l1);
            let (cm, cs) = fmt_stat(&row.dcoherence);
            out.push_str(&format!("{},{:.1},{dm},{ds},{lm},{ls}", row.method, row.validity_pct));
            if include_categorical {
                let (km, ks) = fmt_stat(&row.l0_categorical);
                out.push_str(&format!(",{km},{ks}"));
            }
            out.push_str(&format!(",{cm},{cs}\n"));
        }
        out
    }

    /// Ablation CSV with the inactive-term column and sparsity.
    pub fn to_ablation_csv(&self) -> String {
        let mut out = String::from(
            "method,inactive_terms,validity_pct,diffusion_mean,diffusion_std,l1_continuous_mean,l1_continuous_std,sparsity_mean,sparsity_std,dcoherence_mean,dcoherence_std\n",
        );
        for row in &self.rows {
            let (dm, ds) = fmt_stat(&row.diffusion);
            let (lm, ls) = fmt_stat(&row.weighted_l1);
            let (sm, ss) = fmt_stat(&row.sparsity);
            let (cm, cs) = fmt_stat(&row.dcoherence);
            out.push_str(&format!(
                "{},\"{}\",{:.1},{dm},{ds},{lm},{ls},{sm},{ss},{cm},{cs}\n",
                row.method,
                row.inactive.as_deref().unwrap_or(""),
                row.validity_pct,
            ));
        }
        out
    }

    /// One JSON object per line, one line per counterfactual.
    pub fn records_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record)?);
            out.push('\n');
        }
        Ok(out)
    }
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("lambda1,lambda2,lambda3,validity_pct,mean_diffusion,mean_coherence_penalty\n");
        for p in &self.points {
            let md = p.mean_diffusion.map_or(String::new(), |v| format!("{v:.4}"));
            let mp = p
                .mean_coherence_penalty
                .map_or(String::new(), |v| format!("{v:.4}"));
            out.push_str(&format!(
                "{},{},{},{:.1},{md},{mp}\n",
                p.lambda1, p.lambda2, p.lambda3, p.validity_pct
            ));
        }
        out
    }
}

/// Coordinate export for visualization: each training point, input, and
/// counterfactual with its role tag.
pub fn export_coords_csv(
    pp: &Preprocessor,
    dm: &DiffusionMap,
    train: &Dataset,
    records: &[ResultRecord],
    pca_dims: usize,
) -> Result<String> {
    let x_train = pp.continuous_matrix(&train.rows);
    let pca = pca_project(&x_train, pca_dims.min(x_train.ncols()))?;
    let dims = pca.components.ncols();
    let m = dm.n_components();

    let mut out = String::from("id,role");
    for j in 0..dims {
        out.push_str(&format!(",pca{j}"));
    }
    for j in 0..m {
        out.push_str(&format!(",diff{j}"));
    }
    out.push('\n');

    let push_point = |out: &mut String, id: &str, role: &str, row: &Row| -> Result<()> {
        let cont = pp.continuous_coords(row);
        let p = pca.project(&cont);
        let d = dm.extend(&cont)?.coords;
        out.push_str(&format!("{id},{role}"));
        for j in 0..dims {
            out.push_str(&format!(",{:.6}", p[j]));
        }
        for j in 0..m {
            out.push_str(&format!(",{:.6}", d[j]));
        }
        out.push('\n');
        Ok(())
    };

    for (i, row) in train.rows.iter().enumerate() {
        push_point(&mut out, &format!("train_{i}"), "train", row)?;
    }
    for record in records {
        let tag = format!("{}_{}", record.method, record.instance_index);
        push_point(&mut out, &format!("input_{tag}"), "input", &record.input)?;
        push_point(
            &mut out,
            &format!("cf_{tag}"),
            "counterfactual",
            &record.result.counterfactual,
        )?;
    }
    Ok(out)
}
