//! Sensor-based yield predictor.
//!
//! A small dense network maps standardised (temperature, humidity, pressure)
//! readings to a sigmoid output that is scaled by 100, so predicted yields
//! always lie in `[0, 100]`. Area is not a feature: every sensor trial used
//! the same 100 m² plot.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Impact, SensorSample, IMPACT_THRESHOLD_PCT};
use crate::nnet::{
    self, Example, LayerSpec, Loss, Network, NetworkFiles, NnError, Target, Tensor, TrainConfig,
    TrainingHistory,
};

pub const FEATURE_ORDER: [&str; 3] = ["temperature_c", "humidity_pct", "pressure_mbar"];
pub const MODEL_STEM: &str = "yield_model";
/// Upper bound on the number of grid points [`best_conditions`] will visit.
pub const MAX_GRID_POINTS: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum YieldError {
    #[error("{field} = {value} is out of range")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("grid is empty")]
    EmptyGrid,
    #[error("grid has {0} points, limit is {MAX_GRID_POINTS}")]
    GridTooLarge(usize),
    #[error("invalid grid axis `{axis}`: {reason}")]
    InvalidAxis { axis: &'static str, reason: String },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub temperature_c: f64,
    pub humidity_pct: f64,
    pub pressure_mbar: f64,
}

impl SensorReading {
    pub fn new(temperature_c: f64, humidity_pct: f64, pressure_mbar: f64) -> Result<Self, YieldError> {
        let r = SensorReading {
            temperature_c,
            humidity_pct,
            pressure_mbar,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), YieldError> {
        if !self.temperature_c.is_finite() {
            return Err(YieldError::OutOfRange {
                field: "temperature_c",
                value: self.temperature_c,
            });
        }
        if !(0.0..=100.0).contains(&self.humidity_pct) {
            return Err(YieldError::OutOfRange {
                field: "humidity_pct",
                value: self.humidity_pct,
            });
        }
        if !(self.pressure_mbar.is_finite() && self.pressure_mbar > 0.0) {
            return Err(YieldError::OutOfRange {
                field: "pressure_mbar",
                value: self.pressure_mbar,
            });
        }
        Ok(())
    }

    fn features(&self) -> [f64; 3] {
        [self.temperature_c, self.humidity_pct, self.pressure_mbar]
    }
}

impl From<&SensorSample> for SensorReading {
    fn from(s: &SensorSample) -> Self {
        SensorReading {
            temperature_c: s.temperature_c,
            humidity_pct: s.humidity_pct,
            pressure_mbar: s.pressure_mbar,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YieldPrediction {
    pub expected_yield_pct: f64,
    pub impact: Impact,
}

/// `Negative` strictly below 50%, `Positive` otherwise.
pub fn impact_from_yield(yield_pct: f64) -> Result<Impact, YieldError> {
    if !(0.0..=100.0).contains(&yield_pct) {
        return Err(YieldError::OutOfRange {
            field: "yield_pct",
            value: yield_pct,
        });
    }
    Ok(if yield_pct < IMPACT_THRESHOLD_PCT {
        Impact::Negative
    } else {
        Impact::Positive
    })
}

/// Per-feature standardisation fitted on training inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub means: [f64; 3],
    pub scales: [f64; 3],
}

impl Normalization {
    pub fn fit(readings: &[SensorReading]) -> Self {
        let n = readings.len() as f64;
        let mut means = [0.0; 3];
        let mut scales = [1.0; 3];
        for j in 0..3 {
            let mean = readings.iter().map(|r| r.features()[j]).sum::<f64>() / n;
            let var = readings
                .iter()
                .map(|r| (r.features()[j] - mean).powi(2))
                .sum::<f64>()
                / n;
            means[j] = mean;
            scales[j] = if var > 0.0 {
                var.sqrt()
            } else {
                log::warn!("feature {} is constant; using unit scale", FEATURE_ORDER[j]);
                1.0
            };
        }
        Normalization { means, scales }
    }

    pub fn normalize(&self, r: &SensorReading) -> [f64; 3] {
        let f = r.features();
        std::array::from_fn(|j| (f[j] - self.means[j]) / self.scales[j])
    }

    pub fn denormalize(&self, z: &[f64; 3]) -> SensorReading {
        let f: [f64; 3] = std::array::from_fn(|j| z[j] * self.scales[j] + self.means[j]);
        SensorReading {
            temperature_c: f[0],
            humidity_pct: f[1],
            pressure_mbar: f[2],
        }
    }
}

/// Anything that maps a reading to an expected yield percentage.
pub trait YieldEstimator {
    fn estimate_pct(&self, reading: &SensorReading) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct YieldModel {
    network: Network,
    normalization: Normalization,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    feature_order: Vec<String>,
    means: [f64; 3],
    scales: [f64; 3],
}

/// 3 → 16 → 8 → 1 with ReLU hidden layers and a sigmoid head.
pub fn default_architecture() -> Vec<LayerSpec> {
    vec![
        LayerSpec::dense(3, 16),
        LayerSpec::Relu,
        LayerSpec::dense(16, 8),
        LayerSpec::Relu,
        LayerSpec::dense(8, 1),
        LayerSpec::Sigmoid,
    ]
}

/// Training defaults for the sensor model: MSE loss, batches of 8, lr 0.01.
pub fn default_train_config(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        lr: 0.01,
        seed,
        loss: Loss::MeanSquaredError,
        ..TrainConfig::default()
    }
}

impl YieldModel {
    /// The network must take `[3]` and produce `[1]` in `[0, 1]`.
    pub fn from_parts(network: Network, normalization: Normalization) -> Result<Self, YieldError> {
        if network.input_shape() != [3] || network.output_shape() != [1] {
            return Err(YieldError::InvalidModel(format!(
                "network maps {:?} -> {:?}, expected [3] -> [1]",
                network.input_shape(),
                network.output_shape()
            )));
        }
        if !matches!(network.layers().last(), Some(LayerSpec::Sigmoid)) {
            return Err(YieldError::InvalidModel("network must end in a sigmoid".into()));
        }
        Ok(YieldModel {
            network,
            normalization,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn predict(&self, reading: &SensorReading) -> Result<YieldPrediction, YieldError> {
        reading.validate()?;
        let expected_yield_pct = self.estimate_pct(reading);
        Ok(YieldPrediction {
            expected_yield_pct,
            impact: impact_from_yield(expected_yield_pct)?,
        })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), YieldError> {
        let dir = dir.as_ref();
        NetworkFiles::new(dir, MODEL_STEM).save(&self.network)?;
        let sidecar = Sidecar {
            feature_order: FEATURE_ORDER.iter().map(|s| s.to_string()).collect(),
            means: self.normalization.means,
            scales: self.normalization.scales,
        };
        std::fs::write(sidecar_path(dir), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, YieldError> {
        let dir = dir.as_ref();
        let network = NetworkFiles::new(dir, MODEL_STEM).load()?;
        let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(dir))?)?;
        if sidecar.feature_order != FEATURE_ORDER {
            return Err(YieldError::InvalidModel(format!(
                "unexpected feature order {:?}",
                sidecar.feature_order
            )));
        }
        if sidecar.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(YieldError::InvalidModel("scales must be positive".into()));
        }
        Self::from_parts(
            network,
            Normalization {
                means: sidecar.means,
                scales: sidecar.scales,
            },
        )
    }

    /// `true` when a saved model is present in `dir`.
    pub fn exists_in(dir: impl AsRef<Path>) -> bool {
        let dir = dir.as_ref();
        NetworkFiles::new(dir, MODEL_STEM).exists() && sidecar_path(dir).exists()
    }
}

fn sidecar_path(dir: &Path) -> std::path::PathBuf {
    dir.join(format!("{MODEL_STEM}.meta.json"))
}

impl YieldEstimator for YieldModel {
    fn estimate_pct(&self, reading: &SensorReading) -> f64 {
        let z = self.normalization.normalize(reading);
        let out = self
            .network
            .predict(&Tensor::vector(&z))
            .expect("shape checked at construction");
        100.0 * out.data()[0]
    }
}

pub fn predict_yield(model: &YieldModel, reading: &SensorReading) -> Result<YieldPrediction, YieldError> {
    model.predict(reading)
}

/// Fits normalisation on `samples`, then trains the default architecture
/// against `expected_yield_pct / 100`.
pub fn train_yield_model(
    samples: &[SensorSample],
    config: &TrainConfig,
) -> Result<(YieldModel, TrainingHistory), YieldError> {
    if samples.len() < 2 {
        return Err(YieldError::TooFewSamples(samples.len()));
    }
    let readings: Vec<SensorReading> = samples.iter().map(SensorReading::from).collect();
    let normalization = Normalization::fit(&readings);
    let examples: Vec<Example> = samples
        .iter()
        .zip(&readings)
        .map(|(s, r)| {
            Example::new(
                Tensor::vector(&normalization.normalize(r)),
                Target::Values(vec![s.expected_yield_pct / 100.0]),
            )
        })
        .collect();
    let mut network = Network::new(&[3], default_architecture(), config.seed)?;
    let history = nnet::train(&mut network, &examples, config, None)?;
    Ok((YieldModel::from_parts(network, normalization)?, history))
}

/// Training-set RMSE in yield percentage points.
pub fn rmse_on(model: &YieldModel, samples: &[SensorSample]) -> Result<f64, YieldError> {
    let predicted: Vec<f64> = samples
        .iter()
        .map(|s| model.estimate_pct(&SensorReading::from(s)))
        .collect();
    let actual: Vec<f64> = samples.iter().map(|s| s.expected_yield_pct).collect();
    crate::regression::rmse(&predicted, &actual)
        .map_err(|e| YieldError::InvalidModel(e.to_string()))
}

/// Evenly spaced values from `min` to `max` inclusive. One step means `min` only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl GridAxis {
    pub fn new(min: f64, max: f64, steps: usize) -> Self {
        GridAxis { min, max, steps }
    }

    pub fn point(min: f64) -> Self {
        GridAxis { min, max: min, steps: 1 }
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.steps <= 1 || i == 0 {
            self.min
        } else if i + 1 == self.steps {
            self.max
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.steps - 1) as f64
        }
    }

    fn check(&self, axis: &'static str) -> Result<(), YieldError> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(YieldError::InvalidAxis {
                axis,
                reason: format!("need finite min <= max, got [{}, {}]", self.min, self.max),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionGrid {
    pub temperature_c: GridAxis,
    pub humidity_pct: GridAxis,
    pub pressure_mbar: GridAxis,
}

impl ConditionGrid {
    pub fn len(&self) -> usize {
        self.temperature_c
            .steps
            .saturating_mul(self.humidity_pct.steps)
            .saturating_mul(self.pressure_mbar.steps)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Grid point with the highest estimated yield. Axes are scanned in
/// ascending (temperature, humidity, pressure) order and only a strictly
/// better value replaces the incumbent, so ties go to the lexicographically
/// smallest reading.
pub fn best_conditions<E: YieldEstimator + ?Sized>(
    model: &E,
    grid: &ConditionGrid,
) -> Result<(SensorReading, f64), YieldError> {
    if grid.is_empty() {
        return Err(YieldError::EmptyGrid);
    }
    let n = grid.len();
    if n > MAX_GRID_POINTS {
        return Err(YieldError::GridTooLarge(n));
    }
    grid.temperature_c.check("temperature_c")?;
    grid.humidity_pct.check("humidity_pct")?;
    grid.pressure_mbar.check("pressure_mbar")?;
    // Extremes of each axis must be valid readings.
    SensorReading::new(grid.temperature_c.min, grid.humidity_pct.min, grid.pressure_mbar.min)?;
    SensorReading::new(grid.temperature_c.max, grid.humidity_pct.max, grid.pressure_mbar.max)?;

    let mut best: Option<(SensorReading, f64)> = None;
    for i in 0..grid.temperature_c.steps {
        let t = grid.temperature_c.value(i);
        for j in 0..grid.humidity_pct.steps {
            let h = grid.humidity_pct.value(j);
            for k in 0..grid.pressure_mbar.steps {
                let reading = SensorReading {
                    temperature_c: t,
                    humidity_pct: h,
                    pressure_mbar: grid.pressure_mbar.value(k),
                };
                let y = model.estimate_pct(&reading);
                if best.as_ref().is_none_or(|(_, b)| y > *b) {
                    best = Some((reading, y));
                }
            }
        }
    }
    Ok(best.expect("grid is non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct HumidityStub;

    impl YieldEstimator for HumidityStub {
        fn estimate_pct(&self, r: &SensorReading) -> f64 {
            r.humidity_pct
        }
    }

    #[test]
    fn impact_threshold() {
        assert_eq!(impact_from_yield(43.0).unwrap(), Impact::Negative);
        assert_eq!(impact_from_yield(91.0).unwrap(), Impact::Positive);
        assert_eq!(impact_from_yield(50.0).unwrap(), Impact::Positive);
        assert_eq!(impact_from_yield(49.999).unwrap(), Impact::Negative);
        assert!(impact_from_yield(100.5).is_err());
        assert!(impact_from_yield(-0.1).is_err());
    }

    #[test]
    fn reading_validation() {
        assert!(SensorReading::new(26.0, 75.0, 109.56).is_ok());
        assert!(matches!(
            SensorReading::new(26.0, 140.0, 109.56),
            Err(YieldError::OutOfRange { field: "humidity_pct", .. })
        ));
        assert!(SensorReading::new(26.0, 75.0, 0.0).is_err());
        assert!(SensorReading::new(f64::NAN, 75.0, 100.0).is_err());
    }

    #[test]
    fn normalization_roundtrip() {
        let samples = crate::data::fixture_samples();
        let readings: Vec<SensorReading> = samples.iter().map(SensorReading::from).collect();
        let norm = Normalization::fit(&readings);
        for r in &readings {
            let back = norm.denormalize(&norm.normalize(r));
            assert!((back.temperature_c - r.temperature_c).abs() < 1e-9);
            assert!((back.humidity_pct - r.humidity_pct).abs() < 1e-9);
            assert!((back.pressure_mbar - r.pressure_mbar).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_feature_gets_unit_scale() {
        let readings = vec![
            SensorReading::new(20.0, 50.0, 100.0).unwrap(),
            SensorReading::new(30.0, 50.0, 110.0).unwrap(),
        ];
        let norm = Normalization::fit(&readings);
        assert_eq!(norm.scales[1], 1.0);
        assert_eq!(norm.means[1], 50.0);
    }

    #[test]
    fn single_point_grid() {
        let grid = ConditionGrid {
            temperature_c: GridAxis::point(26.0),
            humidity_pct: GridAxis::point(75.0),
            pressure_mbar: GridAxis::point(109.56),
        };
        let (r, y) = best_conditions(&HumidityStub, &grid).unwrap();
        assert_eq!(r, SensorReading::new(26.0, 75.0, 109.56).unwrap());
        assert_eq!(y, 75.0);
    }

    #[test]
    fn humidity_stub_picks_max_humidity_lowest_rest() {
        let grid = ConditionGrid {
            temperature_c: GridAxis::new(10.0, 40.0, 4),
            humidity_pct: GridAxis::new(20.0, 90.0, 8),
            pressure_mbar: GridAxis::new(80.0, 140.0, 3),
        };
        let (r, y) = best_conditions(&HumidityStub, &grid).unwrap();
        assert_eq!(y, 90.0);
        assert_eq!((r.temperature_c, r.humidity_pct, r.pressure_mbar), (10.0, 90.0, 80.0));
    }

    #[test]
    fn grid_errors() {
        let mut grid = ConditionGrid {
            temperature_c: GridAxis::new(10.0, 40.0, 0),
            humidity_pct: GridAxis::point(50.0),
            pressure_mbar: GridAxis::point(100.0),
        };
        assert!(matches!(best_conditions(&HumidityStub, &grid), Err(YieldError::EmptyGrid)));
        grid.temperature_c.steps = 1001;
        grid.humidity_pct = GridAxis::new(0.0, 100.0, 1001);
        assert!(matches!(best_conditions(&HumidityStub, &grid), Err(YieldError::GridTooLarge(_))));
        grid.temperature_c = GridAxis::new(40.0, 10.0, 2);
        grid.humidity_pct = GridAxis::point(50.0);
        assert!(matches!(best_conditions(&HumidityStub, &grid), Err(YieldError::InvalidAxis { .. })));
        grid.temperature_c = GridAxis::point(20.0);
        grid.humidity_pct = GridAxis::new(50.0, 120.0, 3);
        assert!(matches!(best_conditions(&HumidityStub, &grid), Err(YieldError::OutOfRange { .. })));
    }

    #[test]
    fn from_parts_checks_shape() {
        let net = Network::new(&[3], vec![LayerSpec::dense(3, 2), LayerSpec::Sigmoid], 0).unwrap();
        let norm = Normalization { means: [0.0; 3], scales: [1.0; 3] };
        assert!(YieldModel::from_parts(net, norm.clone()).is_err());
        let net = Network::new(&[3], vec![LayerSpec::dense(3, 1)], 0).unwrap();
        assert!(YieldModel::from_parts(net, norm).is_err());
    }

    #[test]
    fn too_few_samples() {
        let s = crate::data::fixture_samples();
        assert!(matches!(
            train_yield_model(&s[..1], &default_train_config(1, 1)),
            Err(YieldError::TooFewSamples(1))
        ));
    }
}
