//! Multiple linear regression over the one-hot crop schema.
//!
//! Fitting solves the (optionally ridge-penalised) least-squares problem with
//! an unpenalised intercept. The columns are centred, which removes the
//! intercept from the system, and the centred normal equations are solved
//! through a thin SVD of the centred design. Singular directions below the
//! rank tolerance are dropped when `ridge_lambda == 0`, which yields the
//! minimum-norm solution. That matters here: keeping every state and season
//! indicator next to an intercept makes the design rank-deficient by two.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{CropRecord, DesignMatrix, FeatureSchema};

pub const PAPER_MODEL_VERSION: &str = "paper-mlr-v1";
pub const MODEL_FORMAT_VERSION: u32 = 1;
/// File name used for a fitted model inside a model directory.
pub const MODEL_FILE: &str = "mlr.json";

const PUBLISHED_INTERCEPT: f64 = 0.874;
const PUBLISHED_COEFFICIENTS: [(&str, f64); 11] = [
    ("Area", 1.019),
    ("Andhra Pradesh", 0.035),
    ("Karnataka", -0.082),
    ("Kerala", -0.309),
    ("Pondicherry", 0.095),
    ("Tamil Nadu", 0.260),
    ("Autumn", 0.041),
    ("Kharif", -0.157),
    ("Rabi", -0.029),
    ("Summer", 0.111),
    ("Winter", 0.034),
];

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("design matrix has no rows")]
    Empty,
    #[error("design matrix has no targets")]
    MissingTargets,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("ridge lambda must be finite and >= 0, got {0}")]
    InvalidLambda(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("model schema does not match the crop feature schema")]
    SchemaMismatch,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Intercept plus one named coefficient per design column.
#[derive(Debug, Clone, PartialEq)]
pub struct MlrModel {
    version: String,
    intercept: f64,
    names: Vec<String>,
    coefficients: Vec<f64>,
}

impl MlrModel {
    pub fn new(
        version: impl Into<String>,
        intercept: f64,
        names: Vec<String>,
        coefficients: Vec<f64>,
    ) -> Result<Self, RegressionError> {
        if names.len() != coefficients.len() {
            return Err(RegressionError::LengthMismatch(names.len(), coefficients.len()));
        }
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != names.len() {
            return Err(RegressionError::InvalidModel("duplicate feature name".into()));
        }
        if !intercept.is_finite() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(RegressionError::NonFinite("coefficients"));
        }
        Ok(MlrModel {
            version: version.into(),
            intercept,
            names,
            coefficients,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.coefficients[i])
    }

    /// `b0 + row · b` for an already-encoded row.
    pub fn predict_row(&self, row: &[f64]) -> Result<f64, RegressionError> {
        if row.len() != self.coefficients.len() {
            return Err(RegressionError::LengthMismatch(row.len(), self.coefficients.len()));
        }
        Ok(self.intercept + dot(row, &self.coefficients))
    }

    /// Encodes `record` under the crop schema and evaluates the model.
    pub fn predict(&self, record: &CropRecord) -> Result<f64, RegressionError> {
        let schema = FeatureSchema::crop();
        if self.names != schema.names() {
            return Err(RegressionError::SchemaMismatch);
        }
        self.predict_row(&schema.encode_row(record))
    }

    pub fn predict_matrix(&self, x: &DesignMatrix) -> Result<Vec<f64>, RegressionError> {
        if x.columns() != self.names.as_slice() {
            return Err(RegressionError::SchemaMismatch);
        }
        x.rows().map(|r| self.predict_row(r)).collect()
    }

    pub fn to_json(&self) -> Result<String, RegressionError> {
        let doc = ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            model_version: self.version.clone(),
            intercept: self.intercept,
            coefficients: self
                .names
                .iter()
                .cloned()
                .zip(self.coefficients.iter().copied())
                .collect(),
            schema: self.names.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self, RegressionError> {
        let mut doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(RegressionError::InvalidModel(format!(
                "unsupported format_version {}",
                doc.format_version
            )));
        }
        if doc.coefficients.len() != doc.schema.len() {
            return Err(RegressionError::InvalidModel(
                "coefficient names do not match schema".into(),
            ));
        }
        let coefficients = doc
            .schema
            .iter()
            .map(|n| {
                doc.coefficients.remove(n).ok_or_else(|| {
                    RegressionError::InvalidModel(format!("missing coefficient for `{n}`"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        MlrModel::new(doc.model_version, doc.intercept, doc.schema, coefficients)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RegressionError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegressionError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

// Field order is the serialised key order; coefficients sort by name.
#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    model_version: String,
    intercept: f64,
    coefficients: BTreeMap<String, f64>,
    schema: Vec<String>,
}

/// The published eleven-coefficient crop model.
pub fn paper_model() -> MlrModel {
    let schema = FeatureSchema::crop();
    debug_assert!(PUBLISHED_COEFFICIENTS
        .iter()
        .zip(schema.names())
        .all(|((a, _), b)| a == b));
    MlrModel {
        version: PAPER_MODEL_VERSION.to_string(),
        intercept: PUBLISHED_INTERCEPT,
        names: schema.names().to_vec(),
        coefficients: PUBLISHED_COEFFICIENTS.iter().map(|&(_, c)| c).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: MlrModel,
    pub rmse: f64,
    pub residuals: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Least-squares fit with ridge penalty `ridge_lambda * ||b||²` on the slopes.
pub fn fit(x: &DesignMatrix, ridge_lambda: f64) -> Result<FitReport, RegressionError> {
    fit_versioned(x, ridge_lambda, "fitted")
}

pub fn fit_versioned(
    x: &DesignMatrix,
    ridge_lambda: f64,
    version: &str,
) -> Result<FitReport, RegressionError> {
    if !(ridge_lambda.is_finite() && ridge_lambda >= 0.0) {
        return Err(RegressionError::InvalidLambda(ridge_lambda));
    }
    let y = x.targets().ok_or(RegressionError::MissingTargets)?;
    let n = x.n_rows();
    if n == 0 {
        return Err(RegressionError::Empty);
    }
    if x.values().iter().any(|v| !v.is_finite()) {
        return Err(RegressionError::NonFinite("design matrix"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(RegressionError::NonFinite("targets"));
    }
    let p = x.n_cols();

    let col_means: Vec<f64> = (0..p)
        .map(|j| x.rows().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;

    let slopes = if p == 0 {
        Vec::new()
    } else {
        let xc = DMatrix::from_fn(n, p, |i, j| x.row(i)[j] - col_means[j]);
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        solve_centered(xc, &yc, ridge_lambda)
    };

    let intercept = y_mean - dot(&col_means, &slopes);
    let model = MlrModel::new(version, intercept, x.columns().to_vec(), slopes)?;
    let residuals: Vec<f64> = x
        .rows()
        .zip(y)
        .map(|(r, &t)| t - model.intercept - dot(r, &model.coefficients))
        .collect();
    let rmse = (residuals.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
    Ok(FitReport {
        model,
        rmse,
        residuals,
    })
}

fn solve_centered(xc: DMatrix<f64>, yc: &DVector<f64>, lambda: f64) -> Vec<f64> {
    let (n, p) = xc.shape();
    let svd = xc.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let s = &svd.singular_values;
    let s_max = s.iter().copied().fold(0.0_f64, f64::max);
    let tol = s_max * (n.max(p) as f64) * f64::EPSILON;

    let mut b = DVector::zeros(p);
    for (k, &sigma) in s.iter().enumerate() {
        let scale = if lambda > 0.0 {
            sigma / (sigma * sigma + lambda)
        } else if sigma > tol {
            1.0 / sigma
        } else {
            0.0
        };
        if scale == 0.0 {
            continue;
        }
        let uty = u.column(k).dot(yc);
        b += v_t.row(k).transpose() * (scale * uty);
    }
    b.iter().copied().collect()
}

/// Root mean squared error between two equal-length, non-empty vectors.
pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64, RegressionError> {
    if predicted.len() != actual.len() {
        return Err(RegressionError::LengthMismatch(predicted.len(), actual.len()));
    }
    if predicted.is_empty() {
        return Err(RegressionError::Empty);
    }
    let sse: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a).powi(2)).sum();
    Ok((sse / predicted.len() as f64).sqrt())
}

/// Coefficient of determination. Returns `None` when the targets are constant.
pub fn r_squared(predicted: &[f64], actual: &[f64]) -> Result<Option<f64>, RegressionError> {
    if predicted.len() != actual.len() {
        return Err(RegressionError::LengthMismatch(predicted.len(), actual.len()));
    }
    if predicted.is_empty() {
        return Err(RegressionError::Empty);
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Ok(None);
    }
    let ss_res: f64 = predicted.iter().zip(actual).map(|(p, a)| (a - p).powi(2)).sum();
    Ok(Some(1.0 - ss_res / ss_tot))
}
