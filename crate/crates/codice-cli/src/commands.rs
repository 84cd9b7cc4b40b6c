//! Subcommand implementations. Exit statuses: 0 success (and a valid
//! counterfactual for `explain`), 1 error, 2 no valid counterfactual or
//! instance already in the desired state.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};

use codice::error::Error as CodiceError;
use codice::harness::{build_record, export_coords_csv, Harness};
use codice::objective::DesiredOutcome;
use codice::schema::{FeatureKind, Row, Value};
use codice::search::SearchContext;
use codice::synthetic::{make_s_curve, make_swiss_roll};

use crate::config::{save_schema, DesiredSection, RunConfig};
use crate::pipeline::{build, Pipeline};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_NO_COUNTERFACTUAL: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Shape {
    SCurve,
    SwissRoll,
}

/// Flag-level overrides with precedence flags > config file > defaults.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Proximity weight.
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Sparsity weight.
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Coherence-penalty weight.
    #[arg(long)]
    pub lambda3: Option<f64>,
    /// diffusion or weighted_l1.
    #[arg(long)]
    pub proximity_mode: Option<String>,
    /// Search seed (benchmark runs derive per-instance seeds from it).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (also settable via CODICE_OUT_DIR).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn apply_overrides(config: &mut RunConfig, overrides: &Overrides) -> Result<()> {
    if let Some(v) = overrides.lambda1 {
        config.objective.lambda1 = v;
    }
    if let Some(v) = overrides.lambda2 {
        config.objective.lambda2 = v;
    }
    if let Some(v) = overrides.lambda3 {
        config.objective.lambda3 = v;
    }
    if let Some(mode) = &overrides.proximity_mode {
        config.objective.proximity_mode = match mode.as_str() {
            "diffusion" => codice::objective::ProximityMode::Diffusion,
            "weighted_l1" => codice::objective::ProximityMode::WeightedL1,
            other => bail!("unknown proximity mode '{other}'"),
        };
    }
    if let Some(seed) = overrides.seed {
        config.ga.seed = seed;
        config.benchmark.seed = seed;
    }
    if let Some(out) = &overrides.out {
        config.output.dir = out.clone();
    } else if let Ok(dir) = std::env::var("CODICE_OUT_DIR") {
        config.output.dir = PathBuf::from(dir);
    }
    config.validate()?;
    Ok(())
}

fn prepare_output_dir(config: &RunConfig) -> Result<PathBuf> {
    let dir = config.output.dir.clone();
    fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    fs::write(dir.join("effective_config.toml"), config.to_toml()?)?;
    Ok(dir)
}

pub fn cmd_synth(shape: Shape, n: usize, noise: f64, seed: u64, out: &Path) -> Result<u8> {
    let dataset = match shape {
        Shape::SCurve => make_s_curve(n, noise, seed)?,
        Shape::SwissRoll => make_swiss_roll(n, noise, seed)?,
    };
    fs::create_dir_all(out)?;

    let mut csv = String::from("x,y,z,class\n");
    for (row, label) in dataset.rows.iter().zip(match &dataset.target {
        codice::dataset::Target::Labels(l) => l.iter(),
        codice::dataset::Target::Values(_) => unreachable!("synthetic sets are labeled"),
    }) {
        csv.push_str(&format!(
            "{},{},{},{label}\n",
            row[0].as_num(),
            row[1].as_num(),
            row[2].as_num()
        ));
    }
    fs::write(out.join("data.csv"), csv)?;
    save_schema(&out.join("schema.toml"), &dataset.schema)?;
    println!(
        "wrote {} rows to {} (schema.toml alongside)",
        dataset.n_rows(),
        out.join("data.csv").display()
    );
    Ok(EXIT_OK)
}

fn parse_desired(text: &str) -> Result<DesiredOutcome> {
    if let Some((lo, hi)) = text.split_once(':') {
        Ok(DesiredOutcome::Range {
            lo: lo.parse().context("range start")?,
            hi: hi.parse().context("range end")?,
        })
    } else {
        Ok(DesiredOutcome::Class(text.parse().context("class index")?))
    }
}

fn parse_inline_row(text: &str, pipeline: &Pipeline) -> Result<Row> {
    let schema = &pipeline.train.schema;
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != schema.len() {
        bail!(
            "inline row has {} values, schema declares {} features",
            parts.len(),
            schema.len()
        );
    }
    let mut row = Row::with_capacity(parts.len());
    for (i, part) in parts.iter().enumerate() {
        let feature = schema.feature(i);
        match &feature.kind {
            FeatureKind::Continuous => {
                row.push(Value::Num(part.parse().with_context(|| {
                    format!("value '{part}' for feature '{}'", feature.name)
                })?));
            }
            FeatureKind::Categorical { .. } => {
                let idx = schema.category_index(i, part).ok_or_else(|| {
                    anyhow!("category '{part}' not in the vocabulary of '{}'", feature.name)
                })?;
                row.push(Value::Cat(idx));
            }
        }
    }
    Ok(row)
}

fn resolve_desired(
    flag: Option<&str>,
    config: &RunConfig,
) -> Result<DesiredOutcome> {
    if let Some(text) = flag {
        return parse_desired(text);
    }
    if let Some(section) = &config.desired {
        return Ok(section.to_outcome());
    }
    bail!("no desired outcome: pass --desired or add a [desired] section to the config");
}

pub fn cmd_explain(
    config: &RunConfig,
    instance: Option<usize>,
    inline_row: Option<&str>,
    desired_flag: Option<&str>,
) -> Result<u8> {
    let pipeline = build(config)?;
    let desired = resolve_desired(desired_flag, config)?;
    let out_dir = prepare_output_dir(config)?;

    let x: Row = match (instance, inline_row) {
        (Some(idx), None) => pipeline
            .test
            .rows
            .get(idx)
            .cloned()
            .ok_or_else(|| anyhow!("test set has {} rows, index {idx} is out of range", pipeline.test.n_rows()))?,
        (None, Some(text)) => parse_inline_row(text, &pipeline)?,
        _ => bail!("pass exactly one of --instance or --row"),
    };

    let ctx = SearchContext::new(
        pipeline.predictor(),
        &pipeline.pp,
        Some(&pipeline.dm),
        &pipeline.train,
        config.objective.weights(),
        config.objective.coherence_mode,
        config.ga,
    )?;

    let started = Instant::now();
    let result = match ctx.find(&x, &desired) {
        Ok(result) => result,
        Err(CodiceError::AlreadyDesired) => {
            eprintln!("instance already satisfies the desired outcome; nothing to explain");
            return Ok(EXIT_NO_COUNTERFACTUAL);
        }
        Err(e) => return Err(e.into()),
    };
    let wall = started.elapsed().as_secs_f64();
    let valid = result.valid;

    let record = build_record(
        "explain",
        instance.unwrap_or(0),
        &x,
        result,
        wall,
        &pipeline.pp,
        &pipeline.dm,
    )?;
    let json = serde_json::to_string_pretty(&record)?;
    println!("{json}");
    fs::write(out_dir.join("explain_record.json"), format!("{json}\n"))?;

    if valid {
        Ok(EXIT_OK)
    } else {
        eprintln!("search finished without a valid counterfactual");
        Ok(EXIT_NO_COUNTERFACTUAL)
    }
}

fn build_harness<'a>(pipeline: &'a Pipeline, config: &RunConfig) -> Result<Harness<'a>> {
    let desired = config
        .desired
        .as_ref()
        .map(DesiredSection::to_outcome)
        .ok_or_else(|| anyhow!("benchmark runs need a [desired] section in the config"))?;
    Ok(Harness {
        model: pipeline.predictor(),
        pp: &pipeline.pp,
        dm: &pipeline.dm,
        train: &pipeline.train,
        test: &pipeline.test,
        desired,
        coherence_mode: config.objective.coherence_mode,
        ga: config.ga,
    })
}

fn write_artifacts(pipeline: &Pipeline, out_dir: &Path) -> Result<()> {
    fs::write(
        out_dir.join("model.json"),
        pipeline.model_artifact().to_json()?,
    )?;
    fs::write(
        out_dir.join("diffusion.json"),
        pipeline.dm.to_artifact().to_json()?,
    )?;
    Ok(())
}

fn maybe_write_coords(
    pipeline: &Pipeline,
    config: &RunConfig,
    records: &[codice::harness::ResultRecord],
    out_dir: &Path,
) -> Result<()> {
    if config.output.emit_coords {
        let csv = export_coords_csv(
            &pipeline.pp,
            &pipeline.dm,
            &pipeline.train,
            records,
            config.output.pca_dims,
        )?;
        fs::write(out_dir.join("coords.csv"), csv)?;
    }
    Ok(())
}

pub fn cmd_benchmark(config: &RunConfig) -> Result<u8> {
    let pipeline = build(config)?;
    let harness = build_harness(&pipeline, config)?;
    let out_dir = prepare_output_dir(config)?;

    let methods = config.resolved_methods();
    let report = harness.run_benchmark(&methods, config.benchmark.n_instances, config.benchmark.seed)?;

    let csv = report.to_csv(pipeline.train.schema.n_categorical() > 0);
    print!("{csv}");
    fs::write(out_dir.join("benchmark.csv"), &csv)?;
    fs::write(out_dir.join("records.jsonl"), report.records_jsonl()?)?;
    write_artifacts(&pipeline, &out_dir)?;
    maybe_write_coords(&pipeline, config, &report.records, &out_dir)?;
    Ok(EXIT_OK)
}

pub fn cmd_ablate(config: &RunConfig) -> Result<u8> {
    let pipeline = build(config)?;
    let harness = build_harness(&pipeline, config)?;
    let out_dir = prepare_output_dir(config)?;

    let report = harness.run_ablation(
        config.ablation.active_weight,
        config.objective.proximity_mode,
        config.benchmark.n_instances,
        config.benchmark.seed,
    )?;
    let csv = report.to_ablation_csv();
    print!("{csv}");
    fs::write(out_dir.join("ablation.csv"), &csv)?;
    fs::write(out_dir.join("records.jsonl"), report.records_jsonl()?)?;
    write_artifacts(&pipeline, &out_dir)?;
    maybe_write_coords(&pipeline, config, &report.records, &out_dir)?;
    Ok(EXIT_OK)
}

pub fn cmd_sweep(config: &RunConfig, grid_flag: Option<&str>) -> Result<u8> {
    let mut grid = config.sweep.grid.clone();
    if let Some(text) = grid_flag {
        grid = text
            .split(',')
            .map(|p| p.trim().parse::<f64>().context("grid value"))
            .collect::<Result<_>>()?;
    }
    let pipeline = build(config)?;
    let harness = build_harness(&pipeline, config)?;
    let out_dir = prepare_output_dir(config)?;

    let report = harness.run_tradeoff_sweep(
        &grid,
        config.sweep.lambda2,
        config.benchmark.n_instances,
        config.benchmark.seed,
    )?;
    let csv = report.to_csv();
    print!("{csv}");
    fs::write(out_dir.join("sweep.csv"), &csv)?;
    let bench = codice::harness::BenchmarkReport {
        rows: report.rows.clone(),
        records: report.records.clone(),
    };
    fs::write(out_dir.join("records.jsonl"), bench.records_jsonl()?)?;
    write_artifacts(&pipeline, &out_dir)?;
    maybe_write_coords(&pipeline, config, &report.records, &out_dir)?;
    Ok(EXIT_OK)
}
