//! Dataset ingestion: crop records for the regression path, sensor-trial
//! samples for the yield network, one-hot feature encoding and a
//! seeded train/test split.
//!
//! The crop-record and sensor-sample paths use *different* state
//! enumerations. The regression data covers five southern states while the
//! sensor trials cover six states with partial overlap, so [`CropState`] and
//! [`SensorState`] are kept apart.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Yield percentage below which a sample is considered sub-optimal.
pub const IMPACT_THRESHOLD_PCT: f64 = 50.0;

const SENSOR_FIXTURE_CSV: &str = include_str!("../../../fixtures/table1_sensor_samples.csv");
const STATE_PROFILES_CSV: &str = include_str!("../../../fixtures/state_profiles.csv");

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("malformed row at line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("unknown state '{label}' at line {line}")]
    UnknownState { label: String, line: u64 },
    #[error("unknown season '{label}' at line {line}")]
    UnknownSeason { label: String, line: u64 },
    #[error("unknown impact '{label}' at line {line}")]
    UnknownImpact { label: String, line: u64 },
    #[error("negative area {value} at line {line}")]
    NegativeArea { value: f64, line: u64 },
    #[error("{field} = {value} out of range at line {line}")]
    OutOfRange {
        field: &'static str,
        value: f64,
        line: u64,
    },
    #[error("test fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("cannot split an empty set")]
    EmptySet,
}

/// Error produced when parsing one of the label enumerations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {kind} '{label}'")]
pub struct LabelError {
    pub kind: &'static str,
    pub label: String,
}

macro_rules! labelled_enum {
    ($(#[$meta:meta])* $name:ident, $kind:literal, { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }

            /// Position of the variant in [`Self::ALL`].
            pub fn index(self) -> usize {
                self as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }

        impl FromStr for $name {
            type Err = LabelError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let s = s.trim();
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.label() == s)
                    .ok_or_else(|| LabelError { kind: $kind, label: s.to_string() })
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(self.label())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

labelled_enum!(
    /// States covered by the regression data set, in feature-schema order.
    CropState, "state", {
        AndhraPradesh => "Andhra Pradesh",
        Karnataka => "Karnataka",
        Kerala => "Kerala",
        Pondicherry => "Pondicherry",
        TamilNadu => "Tamil Nadu",
    }
);

labelled_enum!(
    /// Cropping seasons, in feature-schema order.
    Season, "season", {
        Autumn => "Autumn",
        Kharif => "Kharif",
        Rabi => "Rabi",
        Summer => "Summer",
        Winter => "Winter",
    }
);

labelled_enum!(
    /// States in which the sensor trials were simulated.
    SensorState, "state", {
        Punjab => "Punjab",
        TamilNadu => "Tamil Nadu",
        WestBengal => "West Bengal",
        AndhraPradesh => "Andhra Pradesh",
        Bihar => "Bihar",
        Karnataka => "Karnataka",
    }
);

labelled_enum!(
    /// Outcome of a sensor trial relative to the 50% yield threshold.
    Impact, "impact", {
        Positive => "Positive",
        Negative => "Negative",
    }
);

/// One observation for the regression path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropRecord {
    /// Cultivated area in hectares.
    pub area: f64,
    pub state: CropState,
    pub season: Season,
    /// Observed yield; absent for pure prediction inputs.
    #[serde(rename = "yield")]
    pub yield_value: Option<f64>,
}

impl CropRecord {
    pub fn new(area: f64, state: CropState, season: Season) -> Self {
        CropRecord {
            area,
            state,
            season,
            yield_value: None,
        }
    }

    pub fn with_yield(mut self, value: f64) -> Self {
        self.yield_value = Some(value);
        self
    }
}

/// One sensor trial row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSample {
    pub state: SensorState,
    pub sample_id: String,
    pub area_sq_m: f64,
    pub temperature_c: f64,
    pub humidity_pct: f64,
    pub pressure_mbar: f64,
    pub impact: Impact,
    pub expected_yield_pct: f64,
}

impl SensorSample {
    /// `true` when the recorded impact agrees with the 50% threshold rule.
    pub fn impact_is_consistent(&self) -> bool {
        (self.impact == Impact::Negative) == (self.expected_yield_pct < IMPACT_THRESHOLD_PCT)
    }
}

/// Soil pH metadata for a sensor-trial state. Not used as a model input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateProfile {
    pub state: SensorState,
    pub soil_ph: f64,
}

/// Column layout of the encoded regression design matrix:
/// `area`, then one indicator per [`CropState`], then one per [`Season`],
/// each group in enumeration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    names: Vec<String>,
}

impl Default for FeatureSchema {
    fn default() -> Self {
        Self::crop()
    }
}

impl FeatureSchema {
    pub const AREA: &'static str = "Area";
    pub const WIDTH: usize = 1 + 5 + 5;
    const STATE_OFFSET: usize = 1;
    const SEASON_OFFSET: usize = 6;

    /// The canonical eleven-column crop schema.
    pub fn crop() -> Self {
        let names = std::iter::once(Self::AREA.to_string())
            .chain(CropState::ALL.iter().map(|s| s.label().to_string()))
            .chain(Season::ALL.iter().map(|s| s.label().to_string()))
            .collect();
        FeatureSchema { names }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Encodes one record into its eleven-column row.
    pub fn encode_row(&self, record: &CropRecord) -> [f64; Self::WIDTH] {
        let mut row = [0.0; Self::WIDTH];
        row[0] = record.area;
        row[Self::STATE_OFFSET + record.state.index()] = 1.0;
        row[Self::SEASON_OFFSET + record.season.index()] = 1.0;
        row
    }
}

/// Dense row-major design matrix with named columns and optional targets.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    columns: Vec<String>,
    values: Vec<f64>,
    targets: Option<Vec<f64>>,
}

impl DesignMatrix {
    /// Builds a matrix from rows; every row must have `columns.len()` entries.
    pub fn from_rows(
        columns: Vec<String>,
        rows: &[Vec<f64>],
        targets: Option<Vec<f64>>,
    ) -> Result<Self, String> {
        let width = columns.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != width) {
            return Err(format!(
                "row {bad} has {} values, expected {width}",
                rows[bad].len()
            ));
        }
        if let Some(t) = &targets {
            if t.len() != rows.len() {
                return Err(format!(
                    "{} targets for {} rows",
                    t.len(),
                    rows.len()
                ));
            }
        }
        Ok(DesignMatrix {
            columns,
            values: rows.iter().flatten().copied().collect(),
            targets,
        })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        if self.columns.is_empty() {
            self.targets.as_ref().map_or(0, Vec::len)
        } else {
            self.values.len() / self.columns.len()
        }
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.columns.len();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn targets(&self) -> Option<&[f64]> {
        self.targets.as_deref()
    }
}

/// One-hot encodes records under `schema`. Targets are copied only when every
/// record carries a yield.
pub fn encode_features(records: &[CropRecord], schema: &FeatureSchema) -> DesignMatrix {
    let mut values = Vec::with_capacity(records.len() * FeatureSchema::WIDTH);
    for r in records {
        values.extend_from_slice(&schema.encode_row(r));
    }
    let targets = records
        .iter()
        .map(|r| r.yield_value)
        .collect::<Option<Vec<f64>>>()
        .filter(|t| !t.is_empty());
    DesignMatrix {
        columns: schema.names().to_vec(),
        values,
        targets,
    }
}

fn open(path: &Path) -> Result<File, DataError> {
    File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_number(field: &str, line: u64, name: &str) -> Result<f64, DataError> {
    let v: f64 = field.trim().parse().map_err(|_| DataError::Malformed {
        line,
        reason: format!("{name} `{field}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(DataError::Malformed {
            line,
            reason: format!("{name} is not finite"),
        });
    }
    Ok(v)
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader)
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<(), DataError> {
    let found: Vec<&str> = found.iter().map(str::trim).collect();
    if found != expected {
        return Err(DataError::Header {
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(())
}

/// Loads crop records from a CSV file with header `area,state,season[,yield]`.
pub fn load_crop_records(path: impl AsRef<Path>) -> Result<Vec<CropRecord>, DataError> {
    read_crop_records(open(path.as_ref())?)
}

pub fn read_crop_records<R: Read>(reader: R) -> Result<Vec<CropRecord>, DataError> {
    let mut rdr = csv_reader(reader);
    let header = rdr.headers()?.clone();
    let with_yield = header.len() == 4;
    if with_yield {
        check_header(&header, &["area", "state", "season", "yield"])?;
    } else {
        check_header(&header, &["area", "state", "season"])?;
    }
    let width = header.len();

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(DataError::Malformed {
                line,
                reason: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let area = parse_number(&rec[0], line, "area")?;
        if area < 0.0 {
            return Err(DataError::NegativeArea { value: area, line });
        }
        let state = rec[1].parse().map_err(|e: LabelError| DataError::UnknownState {
            label: e.label,
            line,
        })?;
        let season = rec[2].parse().map_err(|e: LabelError| DataError::UnknownSeason {
            label: e.label,
            line,
        })?;
        let yield_value = if with_yield && !rec[3].trim().is_empty() {
            Some(parse_number(&rec[3], line, "yield")?)
        } else {
            None
        };
        out.push(CropRecord {
            area,
            state,
            season,
            yield_value,
        });
    }
    Ok(out)
}

const SENSOR_HEADER: [&str; 8] = [
    "state",
    "sample_id",
    "area_sq_m",
    "temperature_c",
    "humidity_pct",
    "pressure_mbar",
    "impact",
    "expected_yield_pct",
];

fn check_percent(field: &'static str, value: f64, line: u64) -> Result<f64, DataError> {
    if (0.0..=100.0).contains(&value) {
        Ok(value)
    } else {
        Err(DataError::OutOfRange { field, value, line })
    }
}

pub fn load_sensor_samples(path: impl AsRef<Path>) -> Result<Vec<SensorSample>, DataError> {
    read_sensor_samples(open(path.as_ref())?)
}

pub fn read_sensor_samples<R: Read>(reader: R) -> Result<Vec<SensorSample>, DataError> {
    let mut rdr = csv_reader(reader);
    check_header(rdr.headers()?, &SENSOR_HEADER)?;

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != SENSOR_HEADER.len() {
            return Err(DataError::Malformed {
                line,
                reason: format!("expected {} fields, found {}", SENSOR_HEADER.len(), rec.len()),
            });
        }
        let state = rec[0].parse().map_err(|e: LabelError| DataError::UnknownState {
            label: e.label,
            line,
        })?;
        let sample_id = rec[1].trim().to_string();
        if sample_id.is_empty() {
            return Err(DataError::Malformed {
                line,
                reason: "empty sample_id".into(),
            });
        }
        let area_sq_m = parse_number(&rec[2], line, "area_sq_m")?;
        if area_sq_m < 0.0 {
            return Err(DataError::NegativeArea {
                value: area_sq_m,
                line,
            });
        }
        let temperature_c = parse_number(&rec[3], line, "temperature_c")?;
        let humidity_pct = check_percent(
            "humidity_pct",
            parse_number(&rec[4], line, "humidity_pct")?,
            line,
        )?;
        let pressure_mbar = parse_number(&rec[5], line, "pressure_mbar")?;
        if pressure_mbar <= 0.0 {
            return Err(DataError::OutOfRange {
                field: "pressure_mbar",
                value: pressure_mbar,
                line,
            });
        }
        let impact = rec[6].parse().map_err(|e: LabelError| DataError::UnknownImpact {
            label: e.label,
            line,
        })?;
        let expected_yield_pct = check_percent(
            "expected_yield_pct",
            parse_number(&rec[7], line, "expected_yield_pct")?,
            line,
        )?;
        out.push(SensorSample {
            state,
            sample_id,
            area_sq_m,
            temperature_c,
            humidity_pct,
            pressure_mbar,
            impact,
            expected_yield_pct,
        });
    }
    Ok(out)
}

/// Writes samples in the same CSV layout [`read_sensor_samples`] accepts.
pub fn write_sensor_samples<W: Write>(writer: W, samples: &[SensorSample]) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SENSOR_HEADER)?;
    for s in samples {
        w.write_record([
            s.state.label().to_string(),
            s.sample_id.clone(),
            s.area_sq_m.to_string(),
            s.temperature_c.to_string(),
            s.humidity_pct.to_string(),
            s.pressure_mbar.to_string(),
            s.impact.label().to_string(),
            s.expected_yield_pct.to_string(),
        ])?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

/// The 30 sensor trials shipped in `fixtures/table1_sensor_samples.csv`.
pub fn fixture_samples() -> Vec<SensorSample> {
    read_sensor_samples(SENSOR_FIXTURE_CSV.as_bytes()).expect("bundled sensor fixture is valid")
}

pub fn load_state_profiles(path: impl AsRef<Path>) -> Result<Vec<StateProfile>, DataError> {
    read_state_profiles(open(path.as_ref())?)
}

pub fn read_state_profiles<R: Read>(reader: R) -> Result<Vec<StateProfile>, DataError> {
    let mut rdr = csv_reader(reader);
    check_header(rdr.headers()?, &["state", "soil_ph"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(DataError::Malformed {
                line,
                reason: format!("expected 2 fields, found {}", rec.len()),
            });
        }
        let state = rec[0].parse().map_err(|e: LabelError| DataError::UnknownState {
            label: e.label,
            line,
        })?;
        let soil_ph = parse_number(&rec[1], line, "soil_ph")?;
        if !(soil_ph > 0.0 && soil_ph < 14.0) {
            return Err(DataError::OutOfRange {
                field: "soil_ph",
                value: soil_ph,
                line,
            });
        }
        out.push(StateProfile { state, soil_ph });
    }
    Ok(out)
}

/// Soil pH per sensor-trial state, from `fixtures/state_profiles.csv`.
pub fn state_profiles() -> Vec<StateProfile> {
    read_state_profiles(STATE_PROFILES_CSV.as_bytes()).expect("bundled state profiles are valid")
}

/// Seeded shuffle-and-cut split. The test part has `round(n * test_fraction)`
/// items; both parts keep the shuffled order.
pub fn train_test_split<T: Clone>(
    items: &[T],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::InvalidFraction(test_fraction));
    }
    if items.is_empty() {
        return Err(DataError::EmptySet);
    }
    let n = items.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = order[..n_test].iter().map(|&i| items[i].clone()).collect();
    let train = order[n_test..].iter().map(|&i| items[i].clone()).collect();
    Ok((train, test))
}
