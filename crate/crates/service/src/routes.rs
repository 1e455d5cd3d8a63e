use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::multipart::{Multipart, MultipartRejection};
use axum::extract::rejection::BytesRejection;
use axum::extract::{Request, State};
use axum::http::{header, HeaderMap, Method, StatusCode, Uri};
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::{json, Map, Value};

use cypur_core::data::{CropRecord, CropState, Season};
use cypur_core::disease::RawImage;
use cypur_core::yield_model::{SensorReading, YieldError};

use crate::error::{ApiError, ErrorCode};
use crate::registry::Registry;
use crate::AppState;

pub const RELOAD_SECRET_HEADER: &str = "x-reload-secret";

/// Significant digits kept when serializing regression output.
const OUTPUT_DIGITS: usize = 12;

/// Rounds to [`OUTPUT_DIGITS`] significant digits so sums like
/// `0.874 + 1.019 + 0.035 + 0.041` print as `1.969`.
pub fn round_significant(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", OUTPUT_DIGITS - 1, x).parse().unwrap_or(x)
}

type ApiResult = Result<Json<Value>, ApiError>;

pub async fn health(State(app): State<AppState>) -> Json<Value> {
    let registry = app.snapshot();
    Json(json!({ "status": "ok", "models": registry.model_names() }))
}

fn json_object(headers: &HeaderMap, body: Result<Bytes, BytesRejection>, limit: usize) -> Result<Map<String, Value>, ApiError> {
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .map(|v| v.split(';').next().unwrap_or("").trim().eq_ignore_ascii_case("application/json"))
        .unwrap_or(false);
    if !is_json {
        return Err(ApiError::bad_request("Content-Type must be application/json"));
    }
    let body = body.map_err(|rejection| {
        if rejection.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::too_large(limit)
        } else {
            ApiError::bad_request(rejection.body_text())
        }
    })?;
    match serde_json::from_slice::<Value>(&body) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(ApiError::bad_request("request body must be a JSON object")),
        Err(e) => Err(ApiError::bad_request(format!("malformed JSON: {e}"))),
    }
}

fn number_field(obj: &Map<String, Value>, name: &str) -> Result<f64, ApiError> {
    match obj.get(name) {
        None | Some(Value::Null) => Err(ApiError::validation(name, format!("`{name}` is required"))),
        Some(v) => v
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| ApiError::validation(name, format!("`{name}` must be a number"))),
    }
}

fn string_field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a str, ApiError> {
    match obj.get(name) {
        None | Some(Value::Null) => Err(ApiError::validation(name, format!("`{name}` is required"))),
        Some(v) => v
            .as_str()
            .ok_or_else(|| ApiError::validation(name, format!("`{name}` must be a string"))),
    }
}

fn label_field<T: std::str::FromStr + Copy>(obj: &Map<String, Value>, name: &str, all: &[T], label: fn(T) -> &'static str) -> Result<T, ApiError> {
    let raw = string_field(obj, name)?;
    raw.parse().map_err(|_| {
        let valid: Vec<&str> = all.iter().map(|&v| label(v)).collect();
        ApiError::validation(name, format!("unknown {name} '{raw}'; expected one of: {}", valid.join(", ")))
    })
}

pub async fn predict_yield(State(app): State<AppState>, headers: HeaderMap, body: Result<Bytes, BytesRejection>) -> ApiResult {
    let obj = json_object(&headers, body, app.config.max_upload_bytes)?;
    let area = number_field(&obj, "area")?;
    if area < 0.0 {
        return Err(ApiError::validation("area", "`area` must be >= 0"));
    }
    let state = label_field(&obj, "state", CropState::ALL, CropState::label)?;
    let season = label_field(&obj, "season", Season::ALL, Season::label)?;

    let registry = app.snapshot();
    let y = registry
        .mlr
        .predict(&CropRecord::new(area, state, season))
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(json!({
        "predicted_yield": round_significant(y),
        "model_version": registry.mlr.version(),
    })))
}

pub async fn predict_impact(State(app): State<AppState>, headers: HeaderMap, body: Result<Bytes, BytesRejection>) -> ApiResult {
    let obj = json_object(&headers, body, app.config.max_upload_bytes)?;
    let t = number_field(&obj, "temperature_c")?;
    let h = number_field(&obj, "humidity_pct")?;
    let p = number_field(&obj, "pressure_mbar")?;
    let reading = SensorReading::new(t, h, p).map_err(|e| match e {
        YieldError::OutOfRange { field, .. } => ApiError::validation(field, e.to_string()),
        other => ApiError::internal(other.to_string()),
    })?;

    let registry = app.snapshot();
    let model = registry.yield_model.as_ref().ok_or_else(|| ApiError::model_missing("yield"))?;
    let prediction = model.predict(&reading).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(json!({
        "expected_yield_pct": prediction.expected_yield_pct,
        "impact": prediction.impact.label(),
    })))
}

fn multipart_error(status: StatusCode, text: String, limit: usize) -> ApiError {
    if status == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::too_large(limit)
    } else {
        ApiError::bad_request(text)
    }
}

pub async fn classify_leaf(State(app): State<AppState>, multipart: Result<Multipart, MultipartRejection>) -> ApiResult {
    let limit = app.config.max_upload_bytes;
    let mut multipart = multipart.map_err(|r| multipart_error(r.status(), r.body_text(), limit))?;

    let registry = app.snapshot();
    if registry.disease.is_none() {
        return Err(ApiError::model_missing("disease"));
    }

    let mut image = None;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| multipart_error(e.status(), e.body_text(), limit))?
    {
        if field.name() == Some("image") {
            let bytes = field.bytes().await.map_err(|e| multipart_error(e.status(), e.body_text(), limit))?;
            image = Some(bytes);
            break;
        }
    }
    let bytes = image.ok_or_else(|| ApiError::validation("image", "multipart field `image` is required"))?;

    let diagnosis = tokio::task::spawn_blocking(move || {
        let raw = RawImage::decode(&bytes).map_err(|e| ApiError::validation("image", e.to_string()))?;
        let model = registry.disease.as_ref().expect("checked above");
        model.classify_raw(&raw).map_err(|e| ApiError::validation("image", e.to_string()))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;

    Ok(Json(json!({
        "class": diagnosis.predicted_class.name(),
        "confidence_pct": diagnosis.confidence_pct,
        "species": diagnosis.species,
        "category": diagnosis.category,
        "ailment": diagnosis.ailment_text,
    })))
}

fn secrets_match(given: &[u8], expected: &[u8]) -> bool {
    given.len() == expected.len() && given.iter().zip(expected).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
}

/// Reloads every model from the configured directory. Without a configured
/// secret, or with a wrong one, the endpoint answers as if it did not exist.
pub async fn reload(State(app): State<AppState>, headers: HeaderMap) -> ApiResult {
    let hidden = || ApiError::not_found("no route for POST /api/v1/reload");
    let expected = app.config.reload_secret.as_deref().ok_or_else(hidden)?;
    let given = headers.get(RELOAD_SECRET_HEADER).map(|v| v.as_bytes()).unwrap_or_default();
    if !secrets_match(given, expected.as_bytes()) {
        return Err(hidden());
    }

    let dir = app.config.model_dir.clone();
    let fresh = tokio::task::spawn_blocking(move || Registry::load(dir.as_deref()))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(|e| ApiError::internal(format!("reload failed, previous models kept: {e}")))?;
    let names = fresh.model_names();
    app.swap(fresh);
    log::info!("models reloaded: {names:?}");
    Ok(Json(json!({ "status": "reloaded", "models": names })))
}

pub async fn not_found(method: Method, uri: Uri) -> ApiError {
    ApiError::not_found(format!("no route for {method} {}", uri.path()))
}

/// Rejects oversized requests from their `Content-Length` before any body is read.
pub async fn enforce_limits(State(app): State<AppState>, request: Request, next: Next) -> Response {
    let limit = app.config.max_upload_bytes;
    let declared = request
        .headers()
        .get(header::CONTENT_LENGTH)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<u64>().ok());
    if declared.is_some_and(|n| n > limit as u64) {
        return ApiError::too_large(limit).into_response();
    }
    match tokio::time::timeout(app.config.timeout(), next.run(request)).await {
        Ok(response) => response,
        Err(_) => ApiError::new(ErrorCode::Timeout, "request timed out").into_response(),
    }
}

pub fn panic_response(_: Box<dyn std::any::Any + Send + 'static>) -> Response {
    ApiError::internal("internal error").into_response()
}

pub(crate) fn shared(registry: Registry) -> Arc<std::sync::RwLock<Arc<Registry>>> {
    Arc::new(std::sync::RwLock::new(Arc::new(registry)))
}
