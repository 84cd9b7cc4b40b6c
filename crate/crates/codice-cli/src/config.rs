//! Run configuration: one TOML document describing the dataset, model,
//! diffusion map, objective, search, and outputs. Unknown keys are rejected;
//! every field has a documented default.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use codice::coherence::CoherenceMode;
use codice::dataset::TargetKind;
use codice::objective::{DesiredOutcome, ObjectiveWeights, ProximityMode};
use codice::schema::FeatureSchema;
use codice::search::GAConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Csv,
    SCurve,
    SwissRoll,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DatasetSource,
    /// CSV source: data file, schema document, and target column.
    pub csv_path: Option<PathBuf>,
    pub schema_path: Option<PathBuf>,
    pub target_column: String,
    pub target_kind: TargetKind,
    /// Synthetic sources.
    pub n: usize,
    pub noise: f64,
    /// Shared split parameters.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            source: DatasetSource::Csv,
            csv_path: None,
            schema_path: None,
            target_column: "target".into(),
            target_kind: TargetKind::Classes,
            n: 2000,
            noise: 0.1,
            test_fraction: 0.2,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Knn,
    Ridge,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub l2_penalty: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Neighbor count for the k-NN classifier.
    pub k: usize,
    /// When set, the trained model is cached here and reused on later runs
    /// (validated against the schema hash).
    pub artifact_path: Option<PathBuf>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Logistic,
            l2_penalty: 1e-3,
            max_iter: 500,
            tol: 1e-6,
            k: 10,
            artifact_path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionSection {
    pub k: usize,
    pub alpha: f64,
    pub t: u32,
    pub n_components: Option<usize>,
    /// When set, the fitted map is cached here and reused on later runs
    /// (validated against the training-matrix hash and parameters).
    pub artifact_path: Option<PathBuf>,
}

impl Default for DiffusionSection {
    fn default() -> Self {
        DiffusionSection {
            k: 10,
            alpha: 1.0,
            t: 1,
            n_components: None,
            artifact_path: None,
        }
    }
}

impl DiffusionSection {
    pub fn to_config(&self) -> codice::diffusion::DiffusionConfig {
        codice::diffusion::DiffusionConfig {
            k: self.k,
            alpha: self.alpha,
            t: self.t,
            n_components: self.n_components,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveSection {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub proximity_mode: ProximityMode,
    pub coherence_mode: CoherenceMode,
}

impl Default for ObjectiveSection {
    fn default() -> Self {
        ObjectiveSection {
            lambda1: 0.5,
            lambda2: 0.5,
            lambda3: 0.5,
            proximity_mode: ProximityMode::Diffusion,
            coherence_mode: CoherenceMode::AlgorithmRatio,
        }
    }
}

impl ObjectiveSection {
    pub fn weights(&self) -> ObjectiveWeights {
        ObjectiveWeights {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            proximity_mode: self.proximity_mode,
        }
    }
}

/// Desired outcome: a class index or a prediction interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum DesiredSection {
    Class { class: usize },
    Range { lo: f64, hi: f64 },
}

impl DesiredSection {
    pub fn to_outcome(&self) -> DesiredOutcome {
        match self {
            DesiredSection::Class { class } => DesiredOutcome::Class(*class),
            DesiredSection::Range { lo, hi } => DesiredOutcome::Range { lo: *lo, hi: *hi },
        }
    }
}

/// A benchmark method; unset weights fall back to the objective section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub name: String,
    #[serde(default)]
    pub proximity_mode: Option<ProximityMode>,
    #[serde(default)]
    pub lambda1: Option<f64>,
    #[serde(default)]
    pub lambda2: Option<f64>,
    #[serde(default)]
    pub lambda3: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub n_instances: usize,
    pub seed: u64,
    pub methods: Vec<MethodConfig>,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        BenchmarkSection {
            n_instances: 100,
            seed: 0,
            methods: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub active_weight: f64,
}

impl Default for AblationSection {
    fn default() -> Self {
        AblationSection { active_weight: 0.5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub grid: Vec<f64>,
    pub lambda2: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            grid: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            lambda2: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub emit_coords: bool,
    pub pca_dims: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("codice_out"),
            emit_coords: false,
            pca_dims: 2,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub diffusion: DiffusionSection,
    pub objective: ObjectiveSection,
    pub ga: GAConfig,
    pub desired: Option<DesiredSection>,
    pub benchmark: BenchmarkSection,
    pub ablation: AblationSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text)
            .with_context(|| format!("invalid config file {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if let DatasetSource::Csv = self.dataset.source {
            if self.dataset.csv_path.is_none() || self.dataset.schema_path.is_none() {
                bail!("dataset.source = \"csv\" requires csv_path and schema_path");
            }
        }
        if !(self.dataset.test_fraction > 0.0 && self.dataset.test_fraction < 1.0) {
            bail!("dataset.test_fraction must lie in (0, 1)");
        }
        self.objective.weights().validate()?;
        self.ga.validate()?;
        Ok(())
    }

    /// Serialize the effective (post-defaults, post-overrides) configuration
    /// for provenance.
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Benchmark methods resolved against the objective defaults; the
    /// standard diffusion/L1 pair when none are configured.
    pub fn resolved_methods(&self) -> Vec<codice::harness::MethodSpec> {
        let base = self.objective.weights();
        if self.benchmark.methods.is_empty() {
            return codice::harness::default_methods(base);
        }
        self.benchmark
            .methods
            .iter()
            .map(|m| codice::harness::MethodSpec {
                name: m.name.clone(),
                weights: ObjectiveWeights {
                    lambda1: m.lambda1.unwrap_or(base.lambda1),
                    lambda2: m.lambda2.unwrap_or(base.lambda2),
                    lambda3: m.lambda3.unwrap_or(base.lambda3),
                    proximity_mode: m.proximity_mode.unwrap_or(base.proximity_mode),
                },
            })
            .collect()
    }
}

/// Schema documents live in their own TOML file next to the data.
pub fn load_schema(path: &Path) -> Result<FeatureSchema> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read schema file {}", path.display()))?;
    let schema: FeatureSchema = toml::from_str(&text)
        .with_context(|| format!("invalid schema file {}", path.display()))?;
    Ok(schema)
}

pub fn save_schema(path: &Path, schema: &FeatureSchema) -> Result<()> {
    fs::write(path, toml::to_string_pretty(schema)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let config = RunConfig::default();
        let text = config.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.objective.lambda1, 0.5);
        assert_eq!(back.ga.population_size, 60);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "[objective]\nlambda1 = 0.5\nbogus = 1\n";
        assert!(toml::from_str::<RunConfig>(text).is_err());
    }

    #[test]
    fn desired_section_both_shapes() {
        let class: RunConfig = toml::from_str("[desired]\nclass = 1\n").unwrap();
        assert!(matches!(class.desired, Some(DesiredSection::Class { class: 1 })));
        let range: RunConfig = toml::from_str("[desired]\nlo = 1.0\nhi = 2.0\n").unwrap();
        match range.desired {
            Some(DesiredSection::Range { lo, hi }) => {
                assert_eq!(lo, 1.0);
                assert_eq!(hi, 2.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn method_overrides_fall_back_to_objective() {
        let text = r#"
[objective]
lambda1 = 0.7

[[benchmark.methods]]
name = "custom"
proximity_mode = "weighted_l1"
lambda2 = 0.1
"#;
        let config: RunConfig = toml::from_str(text).unwrap();
        let methods = config.resolved_methods();
        assert_eq!(methods.len(), 1);
        assert_eq!(methods[0].weights.lambda1, 0.7);
        assert_eq!(methods[0].weights.lambda2, 0.1);
        assert_eq!(methods[0].weights.proximity_mode, ProximityMode::WeightedL1);
    }
}
