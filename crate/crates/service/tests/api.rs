use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use cypur_core::data::fixture_samples;
use cypur_core::disease::{prepare, synthetic_leaf, synthetic_split, train_cnn, DiseaseClass};
use cypur_core::nnet::TrainConfig;
use cypur_core::yield_model::{default_train_config, train_yield_model};
use cypur_service::{serve, Registry, ServiceConfig, ServiceError, ServiceHandle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reqwest::multipart::{Form, Part};
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};

const IMAGE_SIZE: usize = 16;

/// Directory with a fixture-trained yield model and a small synthetic-trained disease model.
fn model_dir() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let (yield_model, _) = train_yield_model(&fixture_samples(), &default_train_config(2000, 1)).unwrap();
        yield_model.save(dir.path()).unwrap();
        let (train, _) = synthetic_split(12, 0, IMAGE_SIZE, 1);
        let train = prepare(&train, IMAGE_SIZE).unwrap();
        let cfg = TrainConfig {
            epochs: 40,
            ..TrainConfig::default()
        };
        let (disease, _) = train_cnn(&train, &cfg, None).unwrap();
        disease.save(dir.path()).unwrap();
        dir
    })
    .path()
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn config(dir: Option<&Path>) -> ServiceConfig {
    ServiceConfig {
        port: free_port(),
        model_dir: dir.map(Path::to_path_buf),
        ..ServiceConfig::default()
    }
}

async fn start(config: ServiceConfig) -> (ServiceHandle, String) {
    let registry = Registry::load(config.model_dir.as_deref()).unwrap();
    let handle = serve(config, registry).await.unwrap();
    let base = format!("http://{}/api/v1", handle.local_addr());
    (handle, base)
}

async fn start_full() -> (ServiceHandle, String) {
    start(config(Some(model_dir()))).await
}

async fn post_json(base: &str, path: &str, body: Value) -> (StatusCode, Value) {
    let resp = Client::new().post(format!("{base}{path}")).json(&body).send().await.unwrap();
    let status = resp.status();
    (status, resp.json().await.unwrap())
}

fn leaf_png(class: DiseaseClass, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synthetic_leaf(class, IMAGE_SIZE, &mut rng).encode_png().unwrap()
}

async fn upload(base: &str, field: &str, bytes: Vec<u8>, mime: &str) -> (StatusCode, Value) {
    let part = Part::bytes(bytes).file_name("leaf").mime_str(mime).unwrap();
    let form = Form::new().part(field.to_string(), part);
    let resp = Client::new().post(format!("{base}/classify/leaf")).multipart(form).send().await.unwrap();
    let status = resp.status();
    (status, resp.json().await.unwrap())
}

fn assert_error(body: &Value, code: &str) {
    assert_eq!(body["code"], code, "{body}");
    assert!(body["message"].as_str().is_some_and(|m| !m.is_empty()), "{body}");
}

#[tokio::test]
async fn health_lists_all_models() {
    let (handle, base) = start_full().await;
    let body: Value = reqwest::get(format!("{base}/health")).await.unwrap().json().await.unwrap();
    assert_eq!(body, json!({"status": "ok", "models": ["mlr", "yield", "disease"]}));
    handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn health_without_model_dir() {
    let (handle, base) = start(config(None)).await;
    let body: Value = reqwest::get(format!("{base}/health")).await.unwrap().json().await.unwrap();
    assert_eq!(body, json!({"status": "ok", "models": ["mlr"]}));
    handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn predict_yield_examples() {
    let (handle, base) = start_full().await;
    let resp = Client::new()
        .post(format!("{base}/predict/yield"))
        .json(&json!({"area": 1, "state": "Andhra Pradesh", "season": "Autumn"}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("application/json"));
    let text = resp.text().await.unwrap();
    assert!(text.contains("\"predicted_yield\":1.969"), "{text}");
    let body: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(body, json!({"predicted_yield": 1.969, "model_version": "paper-mlr-v1"}));

    for (area, state, season, want) in [(0.0, "Kerala", "Kharif", 0.408), (2.0, "Tamil Nadu", "Summer", 3.283)] {
        let (status, body) = post_json(&base, "/predict/yield", json!({"area": area, "state": state, "season": season})).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body["predicted_yield"], json!(want));
    }
    handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn predict_yield_validation() {
    let (handle, base) = start_full().await;
    let cases = [
        (json!({"area": -1, "state": "Andhra Pradesh", "season": "Autumn"}), "area"),
        (json!({"area": 1, "state": "Goa", "season": "Autumn"}), "state"),
        (json!({"area": 1, "state": "Kerala", "season": "Monsoon"}), "season"),
        (json!({"area": "one", "state": "Kerala", "season": "Rabi"}), "area"),
        (json!({"state": "Kerala", "season": "Rabi"}), "area"),
        (json!({"area": 1, "state": 3, "season": "Rabi"}), "state"),
    ];
    for (body, field) in cases {
        let (status, err) = post_json(&base, "/predict/yield", body).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
        assert_error(&err, "VALIDATION");
        assert_eq!(err["field"], field);
    }
    let (_, err) = post_json(&base, "/predict/yield", json!({"area": 1, "state": "Goa", "season": "Autumn"})).await;
    assert!(err["message"].as_str().unwrap().contains("Andhra Pradesh"));
    handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn malformed_requests_are_400() {
    let (handle, base) = start_full().await;
    let client = Client::new();
    let resp = client
        .post(format!("{base}/predict/yield"))
        .header("content-type", "application/json")
        .body("{\"area\": 1,")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    assert_error(&resp.json().await.unwrap(), "BAD_REQUEST");

    let resp = client.post(format!("{base}/predict/impact")).body("{}").send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);

    let (status, err) = post_json(&base, "/predict/impact", json!([1, 2, 3])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&err, "BAD_REQUEST");
    handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn predict_impact_examples() {
    let (handle, base) = start_full().await;
    let (status, body) = post_json(
        &base,
        "/predict/impact",
        json!({"temperature_c": 29, "humidity_pct": 78, "pressure_mbar": 115.78}),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["impact"], "Positive");

    let (_, body) = post_json(
        &base,
        "/predict/impact",
        json!({"temperature_c": 14, "humidity_pct": 38, "pressure_mbar": 138.24}),
    )
    .await;
    assert_eq!(body["impact"], "Negative");

    for s in fixture_samples() {
        let (status, body) = post_json(
            &base,
            "/predict/impact",
            json!({"temperature_c": s.temperature_c, "humidity_pct": s.humidity_pct, "pressure_mbar": s.pressure_mbar}),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        let y = body["expected_yield_pct"].as_f64().unwrap();
        assert!((0.0..=100.0).contains(&y));
        assert_eq!(body["impact"] == "Negative", y < 50.0);
    }

    let (status, err) = post_json(
        &base,
        "/predict/impact",
        json!({"temperature_c": 29, "humidity_pct": 140, "pressure_mbar": 115.78}),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&err, "VALIDATION");
    assert_eq!(err["field"], "humidity_pct");

    let (status, err) = post_json(
        &base,
        "/predict/impact",
        json!({"temperature_c": 29, "humidity_pct": 50, "pressure_mbar": -2}),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["field"], "pressure_mbar");
    handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn missing_models_are_404() {
    let (handle, base) = start(config(None)).await;
    let (status, err) = post_json(
        &base,
        "/predict/impact",
        json!({"temperature_c": 29, "humidity_pct": 78, "pressure_mbar": 115.78}),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&err, "MODEL_MISSING");

    let (status, err) = upload(&base, "image", leaf_png(DiseaseClass::Healthy, 1), "image/png").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&err, "MODEL_MISSING");
    handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn classify_healthy_leaf() {
    let (handle, base) = start_full().await;
    let (status, body) = upload(&base, "image", leaf_png(DiseaseClass::Healthy, 77), "image/png").await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["class"], "Healthy");
    assert_eq!(body["ailment"], "No ailment detected in given sample");
    assert_eq!(body["species"], "Oryza sativa");
    assert_eq!(body["category"], "Non-leguminous plant");
    let conf = body["confidence_pct"].as_f64().unwrap();
    assert!(conf > 50.0 && conf <= 100.0);
    handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn classify_accepts_jpeg() {
    let (handle, base) = start_full().await;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let leaf = synthetic_leaf(DiseaseClass::Hispa, 32, &mut rng);
    let buf = image::RgbImage::from_raw(32, 32, leaf.pixels().to_vec()).unwrap();
    let mut jpeg = std::io::Cursor::new(Vec::new());
    image::DynamicImage::ImageRgb8(buf).write_to(&mut jpeg, image::ImageFormat::Jpeg).unwrap();
    let (status, body) = upload(&base, "image", jpeg.into_inner(), "image/jpeg").await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let class: DiseaseClass = body["class"].as_str().unwrap().parse().unwrap();
    assert_eq!(body["ailment"], cypur_core::disease::ailment_text(class));
    handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn classify_rejections() {
    let (handle, base) = start_full().await;
    let (status, err) = upload(&base, "image", b"this is not an image".to_vec(), "text/plain").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&err, "VALIDATION");
    assert_eq!(err["field"], "image");

    let (status, err) = upload(&base, "photo", leaf_png(DiseaseClass::Healthy, 1), "image/png").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["field"], "image");

    let big = vec![0u8; 6 * 1024 * 1024];
    let (status, err) = upload(&base, "image", big, "image/png").await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_error(&err, "PAYLOAD_TOO_LARGE");

    let resp = Client::new()
        .post(format!("{base}/classify/leaf"))
        .json(&json!({"image": "abc"}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn upload_cap_is_configurable() {
    let cfg = ServiceConfig {
        max_upload_bytes: 64 * 1024,
        ..config(Some(model_dir()))
    };
    let (handle, base) = start(cfg).await;
    let (status, _) = upload(&base, "image", leaf_png(DiseaseClass::Healthy, 1), "image/png").await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = upload(&base, "image", vec![7u8; 100 * 1024], "image/png").await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    let padded = json!({"area": 1, "state": "Kerala", "season": "Rabi", "pad": "x".repeat(80 * 1024)});
    let (status, err) = post_json(&base, "/predict/yield", padded).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_error(&err, "PAYLOAD_TOO_LARGE");
    handle.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_identical_requests_agree() {
    let (handle, base) = start_full().await;
    let client = Client::new();
    let png = leaf_png(DiseaseClass::BrownSpot, 3);

    let mut tasks = tokio::task::JoinSet::new();
    for i in 0..32 {
        let client = client.clone();
        let base = base.clone();
        let png = png.clone();
        tasks.spawn(async move {
            let yield_body = client
                .post(format!("{base}/predict/yield"))
                .json(&json!({"area": 1, "state": "Andhra Pradesh", "season": "Autumn"}))
                .send()
                .await
                .unwrap()
                .text()
                .await
                .unwrap();
            let impact_body = client
                .post(format!("{base}/predict/impact"))
                .json(&json!({"temperature_c": 29, "humidity_pct": 78, "pressure_mbar": 115.78}))
                .send()
                .await
                .unwrap()
                .text()
                .await
                .unwrap();
            let form = Form::new().part("image", Part::bytes(png).file_name("leaf.png"));
            let leaf = client.post(format!("{base}/classify/leaf")).multipart(form).send().await.unwrap();
            assert_eq!(leaf.status(), StatusCode::OK);
            (i, yield_body, impact_body, leaf.text().await.unwrap())
        });
    }
    let mut results = Vec::new();
    while let Some(r) = tasks.join_next().await {
        results.push(r.unwrap());
    }
    assert_eq!(results.len(), 32);
    let (_, y0, i0, l0) = &results[0];
    for (i, y, imp, l) in &results {
        assert_eq!(y, y0, "request {i}");
        assert_eq!(imp, i0, "request {i}");
        assert_eq!(l, l0, "request {i}");
    }
    handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn unknown_routes_and_methods() {
    let (handle, base) = start_full().await;
    let resp = reqwest::get(format!("{base}/nope")).await.unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
    assert_error(&resp.json().await.unwrap(), "NOT_FOUND");
    let resp = reqwest::get(format!("{base}/predict/yield")).await.unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
    assert_error(&resp.json().await.unwrap(), "NOT_FOUND");
    handle.shutdown().await.unwrap();
}

fn copy_models(from: &Path, to: &Path) {
    for entry in std::fs::read_dir(from).unwrap() {
        let path: PathBuf = entry.unwrap().path();
        std::fs::copy(&path, to.join(path.file_name().unwrap())).unwrap();
    }
}

#[tokio::test]
async fn reload_requires_secret_and_swaps_models() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServiceConfig {
        reload_secret: Some("s3cret".into()),
        ..config(Some(dir.path()))
    };
    let (handle, base) = start(cfg).await;
    let client = Client::new();
    let health = || async { reqwest::get(format!("{base}/health")).await.unwrap().json::<Value>().await.unwrap() };
    assert_eq!(health().await["models"], json!(["mlr"]));

    let resp = client.post(format!("{base}/reload")).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
    let resp = client.post(format!("{base}/reload")).header("X-Reload-Secret", "nope").send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
    assert_error(&resp.json().await.unwrap(), "NOT_FOUND");

    copy_models(model_dir(), dir.path());
    let resp = client.post(format!("{base}/reload")).header("X-Reload-Secret", "s3cret").send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.json::<Value>().await.unwrap()["models"], json!(["mlr", "yield", "disease"]));
    assert_eq!(health().await["models"], json!(["mlr", "yield", "disease"]));

    // A broken model file keeps the previous snapshot.
    std::fs::write(dir.path().join("yield_model.json"), "{").unwrap();
    let resp = client.post(format!("{base}/reload")).header("X-Reload-Secret", "s3cret").send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::INTERNAL_SERVER_ERROR);
    assert_error(&resp.json().await.unwrap(), "INTERNAL");
    assert_eq!(health().await["models"], json!(["mlr", "yield", "disease"]));
    handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn reload_disabled_without_secret() {
    let (handle, base) = start_full().await;
    let resp = Client::new()
        .post(format!("{base}/reload"))
        .header("X-Reload-Secret", "")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
    handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn fitted_mlr_file_replaces_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let m = cypur_core::regression::MlrModel::new(
        "fitted-test",
        1.0,
        cypur_core::data::FeatureSchema::crop().names().to_vec(),
        vec![2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    )
    .unwrap();
    m.save(dir.path().join("mlr.json")).unwrap();
    let (handle, base) = start(config(Some(dir.path()))).await;
    let (_, body) = post_json(&base, "/predict/yield", json!({"area": 3, "state": "Kerala", "season": "Rabi"})).await;
    assert_eq!(body, json!({"predicted_yield": 7.0, "model_version": "fitted-test"}));
    handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn startup_errors() {
    let bad_port = ServiceConfig {
        port: 0,
        ..ServiceConfig::default()
    };
    assert!(matches!(serve(bad_port, Registry::builtin()).await, Err(ServiceError::Config(_))));

    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let busy = ServiceConfig {
        port: taken.local_addr().unwrap().port(),
        ..ServiceConfig::default()
    };
    assert!(matches!(serve(busy, Registry::builtin()).await, Err(ServiceError::Bind { .. })));

    assert!(matches!(
        Registry::load(Some(Path::new("/definitely/not/here"))),
        Err(ServiceError::ModelDir(_))
    ));
}
