use std::path::Path;

use cypur_core::disease::DiseaseModel;
use cypur_core::regression::{self, MlrModel};
use cypur_core::yield_model::YieldModel;

use crate::ServiceError;

/// Immutable snapshot of the loaded models.
#[derive(Debug, Clone)]
pub struct Registry {
    pub mlr: MlrModel,
    pub yield_model: Option<YieldModel>,
    pub disease: Option<DiseaseModel>,
}

impl Registry {
    /// Built-in regression model only.
    pub fn builtin() -> Self {
        Registry {
            mlr: regression::paper_model(),
            yield_model: None,
            disease: None,
        }
    }

    /// Loads whatever models `dir` contains. A fitted `mlr.json` replaces the
    /// built-in regression model.
    pub fn load(dir: Option<&Path>) -> Result<Self, ServiceError> {
        let Some(dir) = dir else {
            return Ok(Self::builtin());
        };
        if !dir.is_dir() {
            return Err(ServiceError::ModelDir(format!("{} is not a readable directory", dir.display())));
        }
        std::fs::read_dir(dir).map_err(|e| ServiceError::ModelDir(format!("{}: {e}", dir.display())))?;

        let mlr_path = dir.join(regression::MODEL_FILE);
        let mlr = if mlr_path.exists() {
            MlrModel::load(&mlr_path).map_err(|e| ServiceError::Model(format!("{}: {e}", mlr_path.display())))?
        } else {
            regression::paper_model()
        };
        let yield_model = if YieldModel::exists_in(dir) {
            Some(YieldModel::load(dir).map_err(|e| ServiceError::Model(format!("yield model: {e}")))?)
        } else {
            None
        };
        let disease = if DiseaseModel::exists_in(dir) {
            Some(DiseaseModel::load(dir).map_err(|e| ServiceError::Model(format!("disease model: {e}")))?)
        } else {
            None
        };
        Ok(Registry {
            mlr,
            yield_model,
            disease,
        })
    }

    /// Names of the loaded models in the order mlr, yield, disease.
    pub fn model_names(&self) -> Vec<&'static str> {
        let mut names = vec!["mlr"];
        if self.yield_model.is_some() {
            names.push("yield");
        }
        if self.disease.is_some() {
            names.push("disease");
        }
        names
    }
}
