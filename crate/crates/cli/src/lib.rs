//! `cypur` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
//! Human-readable output goes to stdout with three decimals; `--json`
//! switches stdout to a single JSON document with full precision.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use thiserror::Error;

use cypur_core::data::{self, CropRecord, CropState, Season};
use cypur_core::disease::{self, DiseaseModel, RawImage};
use cypur_core::nnet::{TrainConfig, TrainingHistory};
use cypur_core::regression::{self, MlrModel};
use cypur_core::yield_model::{self, SensorReading, YieldError, YieldModel};
use cypur_service::ServiceConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "cypur", version, about = "Rice crop-yield prediction and leaf-disease classification")]
pub struct Cli {
    /// Print a single JSON document on stdout instead of text.
    #[arg(long, global = true)]
    pub json: bool,

    /// JSON file with service settings (host, port, model_dir, max_upload_bytes, request_timeout_secs, reload_secret).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Predict crop yield with the regression model.
    PredictYield(PredictYieldArgs),
    /// Train the sensor yield network on a sensor-trial CSV.
    TrainYield(TrainYieldArgs),
    /// Predict expected yield % and impact from sensor readings.
    PredictImpact(PredictImpactArgs),
    /// Train the leaf-disease CNN on a labelled image directory.
    TrainDisease(TrainDiseaseArgs),
    /// Classify one leaf image.
    Classify(ClassifyArgs),
    /// Evaluate a trained model on a dataset.
    Eval(EvalArgs),
    /// Run the HTTP service until interrupted.
    Serve(ServeArgs),
    /// Write the synthetic leaf dataset.
    GenSynthetic(GenSyntheticArgs),
}

fn parse_crop_state(s: &str) -> Result<CropState, String> {
    s.parse().map_err(|_| {
        let valid: Vec<&str> = CropState::ALL.iter().map(|v| v.label()).collect();
        format!("unknown state '{s}'; valid states: {}", valid.join(", "))
    })
}

fn parse_season(s: &str) -> Result<Season, String> {
    s.parse().map_err(|_| {
        let valid: Vec<&str> = Season::ALL.iter().map(|v| v.label()).collect();
        format!("unknown season '{s}'; valid seasons: {}", valid.join(", "))
    })
}

#[derive(Debug, Args)]
pub struct PredictYieldArgs {
    #[arg(long)]
    pub area: f64,
    #[arg(long, value_parser = parse_crop_state)]
    pub state: CropState,
    #[arg(long, value_parser = parse_season)]
    pub season: Season,
    /// Fitted regression model JSON; defaults to the published coefficients.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainYieldArgs {
    #[arg(long, value_name = "CSV")]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub epochs: usize,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictImpactArgs {
    #[arg(long)]
    pub temperature: f64,
    #[arg(long)]
    pub humidity: f64,
    #[arg(long)]
    pub pressure: f64,
    #[arg(long, value_name = "DIR")]
    pub model_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainDiseaseArgs {
    /// Directory with `labels.csv` and images.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Optional held-out directory in the same layout.
    #[arg(long, value_name = "DIR")]
    pub test_data: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 180)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    /// Square input resolution in pixels.
    #[arg(long, default_value_t = disease::DEFAULT_INPUT_SIZE)]
    pub size: usize,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long, value_name = "PATH")]
    pub image: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub model_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "DIR")]
    pub model_dir: PathBuf,
    /// Sensor CSV (yield model), crop CSV (regression) or labelled image directory (disease model).
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Copy the training history CSV (`epoch,loss,accuracy`) here.
    #[arg(long, value_name = "PATH")]
    pub history_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub host: Option<std::net::IpAddr>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, value_name = "DIR")]
    pub model_dir: Option<PathBuf>,
    #[arg(long)]
    pub max_upload_bytes: Option<usize>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    /// Enables `POST /api/v1/reload` guarded by this secret.
    #[arg(long)]
    pub reload_secret: Option<String>,
}

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 40)]
    pub per_class: usize,
    #[arg(long, default_value_t = 10)]
    pub test_per_class: usize,
    #[arg(long, default_value_t = disease::DEFAULT_INPUT_SIZE)]
    pub size: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Everything a command prints: the JSON document and its text rendering.
struct Report {
    json: Value,
    text: String,
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{rendered}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{rendered}");
                    1
                }
            };
        }
    };
    let as_json = cli.json;
    match execute(cli) {
        Ok(report) => {
            let out = if as_json {
                writeln!(stdout, "{}", report.json)
            } else {
                write!(stdout, "{}", report.text)
            };
            if out.is_err() {
                return 2;
            }
            0
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ServiceConfig, CliError> {
    let base = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
            ServiceConfig::from_json(&text).map_err(|e| CliError::Usage(e.to_string()))?
        }
        None => ServiceConfig::default(),
    };
    base.apply_env().map_err(|e| CliError::Usage(e.to_string()))
}

/// `--model-dir`, else the configured model directory.
fn model_dir(flag: Option<PathBuf>, config: &ServiceConfig) -> Result<PathBuf, CliError> {
    flag.or_else(|| config.model_dir.clone())
        .ok_or_else(|| CliError::Usage("no model directory: pass --model-dir or set CYPUR_MODEL_DIR".into()))
}

fn execute(cli: Cli) -> Result<Report, CliError> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::PredictYield(a) => predict_yield(a),
        Command::TrainYield(a) => train_yield(a),
        Command::PredictImpact(a) => {
            let dir = model_dir(a.model_dir.clone(), &config)?;
            predict_impact(a, &dir)
        }
        Command::TrainDisease(a) => train_disease(a),
        Command::Classify(a) => {
            let dir = model_dir(a.model_dir.clone(), &config)?;
            classify(a, &dir)
        }
        Command::Eval(a) => eval(a),
        Command::Serve(a) => serve(a, config),
        Command::GenSynthetic(a) => gen_synthetic(a),
    }
}

fn predict_yield(a: PredictYieldArgs) -> Result<Report, CliError> {
    if !(a.area.is_finite() && a.area >= 0.0) {
        return Err(CliError::Usage(format!("--area must be a finite number >= 0, got {}", a.area)));
    }
    let model = match &a.model {
        Some(p) => MlrModel::load(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?,
        None => regression::paper_model(),
    };
    let y = model
        .predict(&CropRecord::new(a.area, a.state, a.season))
        .map_err(runtime)?;
    Ok(Report {
        json: json!({ "predicted_yield": y, "model_version": model.version() }),
        text: format!("Predicted Yield is {y:.3}\n"),
    })
}

fn history_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.history.csv"))
}

fn write_history(dir: &Path, stem: &str, history: &TrainingHistory) -> Result<(), CliError> {
    let path = history_path(dir, stem);
    std::fs::write(&path, history.to_csv()).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))
}

fn train_yield(a: TrainYieldArgs) -> Result<Report, CliError> {
    let samples = data::load_sensor_samples(&a.data).map_err(runtime)?;
    let mut cfg = yield_model::default_train_config(a.epochs, a.seed);
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    if let Some(lr) = a.lr {
        cfg.lr = lr;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let (model, history) = yield_model::train_yield_model(&samples, &cfg).map_err(runtime)?;
    create_dir(&a.out)?;
    model.save(&a.out).map_err(runtime)?;
    write_history(&a.out, yield_model::MODEL_STEM, &history)?;

    let rmse = yield_model::rmse_on(&model, &samples).map_err(runtime)?;
    let mut matches = 0;
    for s in &samples {
        if model.predict(&SensorReading::from(s)).map_err(runtime)?.impact == s.impact {
            matches += 1;
        }
    }
    let final_loss = history.last().map(|r| r.loss).unwrap_or(f64::NAN);
    Ok(Report {
        json: json!({
            "model_dir": a.out.display().to_string(),
            "samples": samples.len(),
            "epochs": cfg.epochs,
            "seed": cfg.seed,
            "final_loss": final_loss,
            "rmse": rmse,
            "impact_matches": matches,
        }),
        text: format!(
            "Trained yield model on {} samples for {} epochs (seed {})\nFinal loss {final_loss:.3}\nTraining RMSE is {rmse:.3}\nImpact matches {matches}/{}\nSaved to {}\n",
            samples.len(),
            cfg.epochs,
            cfg.seed,
            samples.len(),
            a.out.display()
        ),
    })
}

fn load_yield_model(dir: &Path) -> Result<YieldModel, CliError> {
    if !YieldModel::exists_in(dir) {
        return Err(runtime(format!("no yield model in {}", dir.display())));
    }
    YieldModel::load(dir).map_err(runtime)
}

fn predict_impact(a: PredictImpactArgs, dir: &Path) -> Result<Report, CliError> {
    let reading = SensorReading::new(a.temperature, a.humidity, a.pressure).map_err(|e| match e {
        YieldError::OutOfRange { .. } => CliError::Usage(e.to_string()),
        other => runtime(other),
    })?;
    let model = load_yield_model(dir)?;
    let p = model.predict(&reading).map_err(runtime)?;
    Ok(Report {
        json: json!({ "expected_yield_pct": p.expected_yield_pct, "impact": p.impact.label() }),
        text: format!("Expected Yield is {:.3}%\nImpact is {}\n", p.expected_yield_pct, p.impact),
    })
}

fn load_images(dir: &Path, size: usize) -> Result<Vec<disease::LabeledImage>, CliError> {
    let items = disease::read_dataset(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    disease::prepare(&items, size).map_err(runtime)
}

fn train_disease(a: TrainDiseaseArgs) -> Result<Report, CliError> {
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        seed: a.seed,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    disease::default_architecture(a.size).map_err(|e| CliError::Usage(e.to_string()))?;

    let train = load_images(&a.data, a.size)?;
    let test = a.test_data.as_deref().map(|d| load_images(d, a.size)).transpose()?;
    let (model, history) = disease::train_cnn(&train, &cfg, test.as_deref()).map_err(runtime)?;
    create_dir(&a.out)?;
    model.save(&a.out).map_err(runtime)?;
    write_history(&a.out, disease::MODEL_STEM, &history)?;

    let train_acc = disease::accuracy_on(&model, &train).map_err(runtime)?;
    let test_acc = test.as_deref().map(|t| disease::accuracy_on(&model, t)).transpose().map_err(runtime)?;
    let first = history.first().map(|r| r.loss).unwrap_or(f64::NAN);
    let last = history.last().map(|r| r.loss).unwrap_or(f64::NAN);
    let mut text = format!(
        "Trained disease model on {} images for {} epochs (seed {})\nLoss {first:.3} -> {last:.3}\nTraining accuracy is {train_acc:.3}\n",
        train.len(),
        cfg.epochs,
        cfg.seed
    );
    if let Some(t) = test_acc {
        text.push_str(&format!("Test accuracy is {t:.3}\n"));
    }
    text.push_str(&format!("Saved to {}\n", a.out.display()));
    Ok(Report {
        json: json!({
            "model_dir": a.out.display().to_string(),
            "images": train.len(),
            "epochs": cfg.epochs,
            "seed": cfg.seed,
            "initial_loss": first,
            "final_loss": last,
            "train_accuracy": train_acc,
            "test_accuracy": test_acc,
        }),
        text,
    })
}

fn load_disease_model(dir: &Path) -> Result<DiseaseModel, CliError> {
    if !DiseaseModel::exists_in(dir) {
        return Err(runtime(format!("no disease model in {}", dir.display())));
    }
    DiseaseModel::load(dir).map_err(runtime)
}

fn classify(a: ClassifyArgs, dir: &Path) -> Result<Report, CliError> {
    let bytes = std::fs::read(&a.image).map_err(|e| runtime(format!("{}: {e}", a.image.display())))?;
    let raw = RawImage::decode(&bytes).map_err(|e| CliError::Usage(format!("{}: {e}", a.image.display())))?;
    let model = load_disease_model(dir)?;
    let d = model.classify_raw(&raw).map_err(runtime)?;
    Ok(Report {
        json: json!({
            "class": d.predicted_class.name(),
            "confidence_pct": d.confidence_pct,
            "species": d.species,
            "category": d.category,
            "ailment": d.ailment_text,
        }),
        text: format!(
            "Class: {}\nConfidence: {:.3}%\nSpecies: {}\nCategory: {}\nAilment: {}\n",
            d.predicted_class, d.confidence_pct, d.species, d.category, d.ailment_text
        ),
    })
}

fn copy_history(dir: &Path, stem: &str, out: Option<&Path>) -> Result<Option<usize>, CliError> {
    let Some(out) = out else {
        return Ok(None);
    };
    let src = history_path(dir, stem);
    let text = std::fs::read_to_string(&src).map_err(|e| runtime(format!("{}: {e}", src.display())))?;
    let history = TrainingHistory::from_csv(&text).map_err(runtime)?;
    std::fs::write(out, history.to_csv()).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    Ok(Some(history.len()))
}

fn first_line(path: &Path) -> Result<String, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    Ok(text.lines().next().unwrap_or("").trim().to_string())
}

fn eval(a: EvalArgs) -> Result<Report, CliError> {
    let (model_name, metric, value, n, epochs) = if a.data.is_dir() {
        let model = load_disease_model(&a.model_dir)?;
        let images = load_images(&a.data, model.input_size())?;
        let acc = disease::accuracy_on(&model, &images).map_err(runtime)?;
        let epochs = copy_history(&a.model_dir, disease::MODEL_STEM, a.history_out.as_deref())?;
        ("disease", "accuracy", acc, images.len(), epochs)
    } else if first_line(&a.data)?.starts_with("state,sample_id") {
        let model = load_yield_model(&a.model_dir)?;
        let samples = data::load_sensor_samples(&a.data).map_err(runtime)?;
        let rmse = yield_model::rmse_on(&model, &samples).map_err(runtime)?;
        let epochs = copy_history(&a.model_dir, yield_model::MODEL_STEM, a.history_out.as_deref())?;
        ("yield", "rmse", rmse, samples.len(), epochs)
    } else {
        let path = a.model_dir.join(regression::MODEL_FILE);
        let model = if path.exists() {
            MlrModel::load(&path).map_err(runtime)?
        } else {
            regression::paper_model()
        };
        if a.history_out.is_some() {
            return Err(CliError::Usage("the regression model has no training history".into()));
        }
        let records = data::load_crop_records(&a.data).map_err(runtime)?;
        let mut predicted = Vec::with_capacity(records.len());
        let mut actual = Vec::with_capacity(records.len());
        for r in &records {
            let y = r
                .yield_value
                .ok_or_else(|| runtime("crop records need a yield column for evaluation"))?;
            predicted.push(model.predict(r).map_err(runtime)?);
            actual.push(y);
        }
        let rmse = regression::rmse(&predicted, &actual).map_err(runtime)?;
        ("mlr", "rmse", rmse, records.len(), None)
    };
    let label = if metric == "rmse" { "RMSE" } else { "Accuracy" };
    let mut text = format!("{label} is {value:.3} on {n} samples\n");
    if let (Some(e), Some(out)) = (epochs, &a.history_out) {
        text.push_str(&format!("Wrote {e} history rows to {}\n", out.display()));
    }
    Ok(Report {
        json: json!({ "model": model_name, "metric": metric, "value": value, "samples": n, "history_rows": epochs }),
        text,
    })
}

fn serve(a: ServeArgs, mut config: ServiceConfig) -> Result<Report, CliError> {
    if let Some(h) = a.host {
        config.host = h;
    }
    if let Some(p) = a.port {
        config.port = p;
    }
    if let Some(d) = a.model_dir {
        config.model_dir = Some(d);
    }
    if let Some(m) = a.max_upload_bytes {
        config.max_upload_bytes = m;
    }
    if let Some(t) = a.timeout_secs {
        config.request_timeout_secs = t;
    }
    if let Some(s) = a.reload_secret {
        config.reload_secret = Some(s);
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let addr = config.addr();
    let runtime_handle = tokio::runtime::Runtime::new().map_err(runtime)?;
    runtime_handle
        .block_on(cypur_service::run_until_signal(config))
        .map_err(runtime)?;
    Ok(Report {
        json: json!({ "status": "stopped", "address": addr.to_string() }),
        text: format!("Service on {addr} stopped\n"),
    })
}

fn gen_synthetic(a: GenSyntheticArgs) -> Result<Report, CliError> {
    if a.per_class == 0 || a.size == 0 {
        return Err(CliError::Usage("--per-class and --size must be >= 1".into()));
    }
    let (train, test) = disease::synthetic_split(a.per_class, a.test_per_class, a.size, a.seed);
    let train_dir = a.out.join("train");
    disease::write_dataset(&train_dir, &train).map_err(runtime)?;
    let mut dirs = vec![train_dir.display().to_string()];
    if !test.is_empty() {
        let test_dir = a.out.join("test");
        disease::write_dataset(&test_dir, &test).map_err(runtime)?;
        dirs.push(test_dir.display().to_string());
    }
    Ok(Report {
        json: json!({ "train": train.len(), "test": test.len(), "size": a.size, "seed": a.seed, "dirs": dirs }),
        text: format!(
            "Wrote {} training and {} test images ({}x{} px, seed {}) to {}\n",
            train.len(),
            test.len(),
            a.size,
            a.size,
            a.seed,
            a.out.display()
        ),
    })
}
