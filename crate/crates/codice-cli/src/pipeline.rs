//! Shared setup: dataset ingestion or generation, splitting, preprocessing,
//! model training, and diffusion-map fitting.

use anyhow::{bail, Context, Result};

use codice::dataset::{load_csv, train_test_split, Dataset, Task};
use codice::diffusion::DiffusionMap;
use codice::model::{
    train_knn_prob, train_linear_regression, train_logistic, BuiltinModel, ModelArtifact,
    Predictor,
};
use codice::preprocess::Preprocessor;
use codice::synthetic::{make_s_curve, make_swiss_roll};

use crate::config::{load_schema, DatasetSource, ModelKind, RunConfig};

pub struct Pipeline {
    pub train: Dataset,
    pub test: Dataset,
    pub pp: Preprocessor,
    pub model: BuiltinModel,
    pub dm: DiffusionMap,
}

pub fn build(config: &RunConfig) -> Result<Pipeline> {
    let ds = &config.dataset;
    let dataset = match ds.source {
        DatasetSource::Csv => {
            let schema = load_schema(ds.schema_path.as_ref().expect("validated"))?;
            load_csv(
                ds.csv_path.as_ref().expect("validated"),
                &schema,
                &ds.target_column,
                &ds.target_kind,
            )
            .context("loading the CSV dataset")?
        }
        DatasetSource::SCurve => make_s_curve(ds.n, ds.noise, ds.seed)?,
        DatasetSource::SwissRoll => make_swiss_roll(ds.n, ds.noise, ds.seed)?,
    };

    let (train, test) = train_test_split(&dataset, ds.test_fraction, ds.seed)?;
    let pp = Preprocessor::fit(&train)?;

    let model = load_or_train_model(config, &train, &pp)?;
    let dm = load_or_fit_diffusion(config, &train, &pp)?;

    Ok(Pipeline {
        train,
        test,
        pp,
        model,
        dm,
    })
}

fn train_model(config: &RunConfig, train: &Dataset, pp: &Preprocessor) -> Result<BuiltinModel> {
    Ok(match (config.model.kind, train.task) {
        (ModelKind::Logistic, Task::Classification) => BuiltinModel::Logistic(train_logistic(
            train,
            pp,
            config.model.l2_penalty,
            config.model.max_iter,
            config.model.tol,
        )?),
        (ModelKind::Knn, Task::Classification) => {
            BuiltinModel::Knn(train_knn_prob(train, pp, config.model.k)?)
        }
        (ModelKind::Ridge, Task::Regression) => BuiltinModel::Ridge(train_linear_regression(
            train,
            pp,
            config.model.l2_penalty,
        )?),
        (kind, task) => bail!("model kind {kind:?} does not fit a {task:?} dataset"),
    })
}

fn load_or_train_model(
    config: &RunConfig,
    train: &Dataset,
    pp: &Preprocessor,
) -> Result<BuiltinModel> {
    let Some(path) = &config.model.artifact_path else {
        return train_model(config, train, pp);
    };
    let schema_hash = train.schema.content_hash();
    if path.exists() {
        let artifact = ModelArtifact::from_json(&std::fs::read_to_string(path)?)?;
        if artifact.schema_hash == schema_hash {
            log::debug!("reusing model artifact {}", path.display());
            return Ok(artifact.model);
        }
        log::warn!(
            "model artifact {} was built for a different schema; retraining",
            path.display()
        );
    }
    let model = train_model(config, train, pp)?;
    let artifact = ModelArtifact {
        schema_hash,
        model: model.clone(),
    };
    std::fs::write(path, artifact.to_json()?)?;
    Ok(model)
}

fn load_or_fit_diffusion(
    config: &RunConfig,
    train: &Dataset,
    pp: &Preprocessor,
) -> Result<DiffusionMap> {
    let x_train = pp.continuous_matrix(&train.rows);
    let wanted = config.diffusion.to_config();
    let Some(path) = &config.diffusion.artifact_path else {
        return Ok(DiffusionMap::fit(x_train, wanted)?);
    };
    if path.exists() {
        let map = codice::diffusion::DiffusionArtifact::from_json(&std::fs::read_to_string(path)?)?;
        if *map.config() == wanted
            && map.train_matrix_hash() == codice::diffusion::matrix_content_hash(&x_train)
        {
            log::debug!("reusing diffusion artifact {}", path.display());
            return Ok(map);
        }
        log::warn!(
            "diffusion artifact {} does not match the current data or parameters; refitting",
            path.display()
        );
    }
    let dm = DiffusionMap::fit(x_train, wanted)?;
    std::fs::write(path, dm.to_artifact().to_json()?)?;
    Ok(dm)
}

impl Pipeline {
    pub fn predictor(&self) -> &dyn Predictor {
        &self.model
    }

    pub fn model_artifact(&self) -> ModelArtifact {
        ModelArtifact {
            schema_hash: self.train.schema.content_hash(),
            model: self.model.clone(),
        }
    }
}
