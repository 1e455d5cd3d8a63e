//! Four-class rice-leaf disease classifier.

pub mod synthetic;

use std::fmt;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nnet::{
    self, Example, LayerSpec, Network, NetworkFiles, NnError, Target, Tensor, TrainConfig,
    TrainingHistory,
};

pub use synthetic::{synthetic_dataset, synthetic_leaf, synthetic_split};

pub const SPECIES: &str = "Oryza sativa";
pub const CATEGORY: &str = "Non-leguminous plant";
pub const DEFAULT_INPUT_SIZE: usize = 64;
pub const MODEL_STEM: &str = "disease_model";
pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug, Error)]
pub enum DiseaseError {
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("empty image")]
    EmptyImage,
    #[error("unsupported channel count {0}")]
    UnsupportedChannels(u8),
    #[error("pixel buffer has {found} bytes, expected {expected}")]
    BufferSize { expected: usize, found: usize },
    #[error("image is {found:?}, model expects {expected:?}")]
    SizeMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("label {0} out of range")]
    LabelOutOfRange(usize),
    #[error("unknown class '{0}'")]
    UnknownClass(String),
    #[error("training set is empty")]
    EmptySet,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DiseaseClass {
    Healthy,
    Hispa,
    LeafBlast,
    BrownSpot,
}

impl DiseaseClass {
    pub const ALL: [DiseaseClass; 4] = [
        DiseaseClass::Healthy,
        DiseaseClass::Hispa,
        DiseaseClass::LeafBlast,
        DiseaseClass::BrownSpot,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Result<Self, DiseaseError> {
        Self::ALL
            .get(code)
            .copied()
            .ok_or(DiseaseError::LabelOutOfRange(code))
    }

    pub fn name(self) -> &'static str {
        match self {
            DiseaseClass::Healthy => "Healthy",
            DiseaseClass::Hispa => "Hispa",
            DiseaseClass::LeafBlast => "LeafBlast",
            DiseaseClass::BrownSpot => "BrownSpot",
        }
    }
}

impl fmt::Display for DiseaseClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DiseaseClass {
    type Err = DiseaseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| DiseaseError::UnknownClass(s.to_string()))
    }
}

impl Serialize for DiseaseClass {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for DiseaseClass {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

pub fn ailment_text(class: DiseaseClass) -> &'static str {
    match class {
        DiseaseClass::Healthy => "No ailment detected in given sample",
        DiseaseClass::Hispa => "Ailment detected in plant sample. Possible ailment- Hispa, Dryness",
        DiseaseClass::LeafBlast => {
            "Ailment detected in plant sample. Possible ailment- Fungal infection, Leaf Blast"
        }
        DiseaseClass::BrownSpot => {
            "Ailment detected in plant sample. Possible ailment- Black Spots, Brown Spots"
        }
    }
}

/// Decoded 8-bit image, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    width: u32,
    height: u32,
    channels: u8,
    pixels: Vec<u8>,
}

impl RawImage {
    pub fn new(width: u32, height: u32, channels: u8, pixels: Vec<u8>) -> Result<Self, DiseaseError> {
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(DiseaseError::BufferSize {
                expected,
                found: pixels.len(),
            });
        }
        Ok(RawImage {
            width,
            height,
            channels,
            pixels,
        })
    }

    /// Decodes PNG or JPEG bytes.
    pub fn decode(bytes: &[u8]) -> Result<Self, DiseaseError> {
        let format = image::guess_format(bytes).map_err(|e| DiseaseError::Decode(e.to_string()))?;
        if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Jpeg) {
            return Err(DiseaseError::Decode(format!("unsupported format {format:?}")));
        }
        let img = image::load_from_memory_with_format(bytes, format)
            .map_err(|e| DiseaseError::Decode(e.to_string()))?;
        Ok(Self::from_dynamic(img))
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, DiseaseError> {
        Self::decode(&std::fs::read(path)?)
    }

    fn from_dynamic(img: image::DynamicImage) -> Self {
        use image::DynamicImage as D;
        let (width, height) = (img.width(), img.height());
        let (channels, pixels) = match img {
            D::ImageLuma8(b) => (1, b.into_raw()),
            D::ImageRgb8(b) => (3, b.into_raw()),
            D::ImageRgba8(b) => (4, b.into_raw()),
            D::ImageLumaA8(_) => (4, img.to_rgba8().into_raw()),
            other => (3, other.to_rgb8().into_raw()),
        };
        RawImage {
            width,
            height,
            channels,
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// PNG bytes of an RGB image.
    pub fn encode_png(&self) -> Result<Vec<u8>, DiseaseError> {
        let color = match self.channels {
            1 => image::ExtendedColorType::L8,
            3 => image::ExtendedColorType::Rgb8,
            4 => image::ExtendedColorType::Rgba8,
            c => return Err(DiseaseError::UnsupportedChannels(c)),
        };
        let mut out = Cursor::new(Vec::new());
        image::write_buffer_with_format(
            &mut out,
            &self.pixels,
            self.width,
            self.height,
            color,
            image::ImageFormat::Png,
        )
        .map_err(|e| DiseaseError::Decode(e.to_string()))?;
        Ok(out.into_inner())
    }
}

/// Nearest-neighbour resize to `target_size²` and scale to `[0, 1]`, giving
/// a `[3, S, S]` tensor. Grayscale is replicated to three channels; an alpha
/// channel is dropped.
pub fn preprocess_image(raw: &RawImage, target_size: usize) -> Result<Tensor, DiseaseError> {
    if raw.width == 0 || raw.height == 0 || target_size == 0 {
        return Err(DiseaseError::EmptyImage);
    }
    let ch = raw.channels as usize;
    if !matches!(ch, 1 | 3 | 4) {
        return Err(DiseaseError::UnsupportedChannels(raw.channels));
    }
    let (w, h) = (raw.width as usize, raw.height as usize);
    let s = target_size;
    let mut data = vec![0.0; 3 * s * s];
    for y in 0..s {
        let sy = y * h / s;
        for x in 0..s {
            let sx = x * w / s;
            let px = &raw.pixels[(sy * w + sx) * ch..];
            for c in 0..3 {
                let v = if ch == 1 { px[0] } else { px[c] };
                data[(c * s + y) * s + x] = f64::from(v) / 255.0;
            }
        }
    }
    Ok(Tensor::new(vec![3, s, s], data)?)
}

/// input 3×S×S → Conv(3→8) → ReLU → MaxPool → Conv(8→16) → ReLU → MaxPool
/// → Flatten → Dense(→64) → ReLU → Dense(→4) → Softmax.
pub fn default_architecture(input_size: usize) -> Result<Vec<LayerSpec>, DiseaseError> {
    let conv_out = |s: usize| s.checked_sub(2);
    let flat_side = conv_out(input_size)
        .map(|s| s / 2)
        .and_then(conv_out)
        .map(|s| s / 2)
        .filter(|&s| s > 0)
        .ok_or_else(|| DiseaseError::InvalidModel(format!("input size {input_size} too small")))?;
    Ok(vec![
        LayerSpec::conv2d(3, 8),
        LayerSpec::Relu,
        LayerSpec::max_pool(),
        LayerSpec::conv2d(8, 16),
        LayerSpec::Relu,
        LayerSpec::max_pool(),
        LayerSpec::Flatten,
        LayerSpec::dense(16 * flat_side * flat_side, 64),
        LayerSpec::Relu,
        LayerSpec::dense(64, 4),
        LayerSpec::Softmax,
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: Tensor,
    pub class: DiseaseClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiseaseModel {
    network: Network,
    input_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnosis {
    pub predicted_class: DiseaseClass,
    pub confidence_pct: f64,
    pub probabilities: [f64; 4],
    pub species: &'static str,
    pub category: &'static str,
    pub ailment_text: &'static str,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    input_size: usize,
    class_names: Vec<String>,
}

impl DiseaseModel {
    pub fn from_network(network: Network) -> Result<Self, DiseaseError> {
        let input_size = match *network.input_shape() {
            [3, h, w] if h == w => h,
            ref other => {
                return Err(DiseaseError::InvalidModel(format!(
                    "input shape {other:?} is not [3, S, S]"
                )))
            }
        };
        if network.output_shape() != [4] || !matches!(network.layers().last(), Some(LayerSpec::Softmax)) {
            return Err(DiseaseError::InvalidModel(
                "network must end in a 4-way softmax".into(),
            ));
        }
        Ok(DiseaseModel {
            network,
            input_size,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn classify(&self, image: &Tensor) -> Result<Diagnosis, DiseaseError> {
        let expected = [3, self.input_size, self.input_size];
        if image.shape() != expected {
            return Err(DiseaseError::SizeMismatch {
                expected: expected.to_vec(),
                found: image.shape().to_vec(),
            });
        }
        let probs = self.network.predict(image)?;
        let probabilities: [f64; 4] = probs.data().try_into().expect("4-way softmax");
        let code = probs.argmax().expect("non-empty");
        let predicted_class = DiseaseClass::from_code(code)?;
        Ok(Diagnosis {
            predicted_class,
            confidence_pct: 100.0 * probabilities[code],
            probabilities,
            species: SPECIES,
            category: CATEGORY,
            ailment_text: ailment_text(predicted_class),
        })
    }

    /// Preprocesses a decoded image to the model's input size, then classifies.
    pub fn classify_raw(&self, raw: &RawImage) -> Result<Diagnosis, DiseaseError> {
        self.classify(&preprocess_image(raw, self.input_size)?)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), DiseaseError> {
        let dir = dir.as_ref();
        NetworkFiles::new(dir, MODEL_STEM).save(&self.network)?;
        let sidecar = Sidecar {
            input_size: self.input_size,
            class_names: DiseaseClass::ALL.iter().map(|c| c.name().to_string()).collect(),
        };
        std::fs::write(sidecar_path(dir), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, DiseaseError> {
        let dir = dir.as_ref();
        let network = NetworkFiles::new(dir, MODEL_STEM).load()?;
        let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(dir))?)?;
        let names: Vec<&str> = DiseaseClass::ALL.iter().map(|c| c.name()).collect();
        if sidecar.class_names != names {
            return Err(DiseaseError::InvalidModel(format!(
                "unexpected class names {:?}",
                sidecar.class_names
            )));
        }
        let model = Self::from_network(network)?;
        if model.input_size != sidecar.input_size {
            return Err(DiseaseError::InvalidModel("input_size disagrees with network".into()));
        }
        Ok(model)
    }

    pub fn exists_in(dir: impl AsRef<Path>) -> bool {
        let dir = dir.as_ref();
        NetworkFiles::new(dir, MODEL_STEM).exists() && sidecar_path(dir).exists()
    }
}

fn sidecar_path(dir: &Path) -> PathBuf {
    dir.join(format!("{MODEL_STEM}.meta.json"))
}

pub fn classify_leaf(model: &DiseaseModel, image: &Tensor) -> Result<Diagnosis, DiseaseError> {
    model.classify(image)
}

fn to_examples(images: &[LabeledImage]) -> Vec<Example> {
    images
        .iter()
        .map(|li| Example::new(li.image.clone(), Target::Class(li.class.code())))
        .collect()
}

/// Sorts by (class, pixels) so the result does not depend on caller order.
fn canonical_order(images: &[LabeledImage]) -> Vec<LabeledImage> {
    let mut sorted = images.to_vec();
    sorted.sort_by(|a, b| {
        a.class.cmp(&b.class).then_with(|| {
            a.image
                .data()
                .iter()
                .zip(b.image.data())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or_else(|| a.image.len().cmp(&b.image.len()))
        })
    });
    sorted
}

/// Trains the default CNN. Training data is put in a canonical order before
/// seeded shuffling, so permuting `images` does not change the model.
pub fn train_cnn(
    images: &[LabeledImage],
    config: &TrainConfig,
    validation: Option<&[LabeledImage]>,
) -> Result<(DiseaseModel, TrainingHistory), DiseaseError> {
    let first = images.first().ok_or(DiseaseError::EmptySet)?;
    let input_size = match *first.image.shape() {
        [3, h, w] if h == w => h,
        ref other => {
            return Err(DiseaseError::SizeMismatch {
                expected: vec![3, DEFAULT_INPUT_SIZE, DEFAULT_INPUT_SIZE],
                found: other.to_vec(),
            })
        }
    };
    let mut network = Network::new(&[3, input_size, input_size], default_architecture(input_size)?, config.seed)?;
    let train = to_examples(&canonical_order(images));
    let val = validation.map(to_examples);
    let history = nnet::train(&mut network, &train, config, val.as_deref())?;
    Ok((DiseaseModel::from_network(network)?, history))
}

/// Fraction of `images` whose predicted class matches the label.
pub fn accuracy_on(model: &DiseaseModel, images: &[LabeledImage]) -> Result<f64, DiseaseError> {
    let mut predicted = Vec::with_capacity(images.len());
    for li in images {
        predicted.push(model.classify(&li.image)?.predicted_class.code());
    }
    let truth: Vec<usize> = images.iter().map(|li| li.class.code()).collect();
    Ok(nnet::accuracy(&predicted, &truth)?)
}

/// Writes images as PNG files plus a `labels.csv` (`file,label`).
pub fn write_dataset(dir: impl AsRef<Path>, items: &[(RawImage, DiseaseClass)]) -> Result<(), DiseaseError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut labels = String::from("file,label\n");
    for (i, (img, class)) in items.iter().enumerate() {
        let name = format!("{i:05}_{}.png", class.name());
        std::fs::write(dir.join(&name), img.encode_png()?)?;
        labels.push_str(&format!("{name},{}\n", class.name()));
    }
    std::fs::write(dir.join(LABELS_FILE), labels)?;
    Ok(())
}

/// Reads a directory written by [`write_dataset`] (or laid out the same way).
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Vec<(RawImage, DiseaseClass)>, DiseaseError> {
    let dir = dir.as_ref();
    let text = std::fs::read_to_string(dir.join(LABELS_FILE))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("file,label") {
        return Err(DiseaseError::Dataset(format!("{LABELS_FILE} must start with `file,label`")));
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (file, label) = line
            .split_once(',')
            .ok_or_else(|| DiseaseError::Dataset(format!("line {}: expected `file,label`", n + 2)))?;
        let class: DiseaseClass = label.parse()?;
        out.push((RawImage::open(dir.join(file.trim()))?, class));
    }
    Ok(out)
}

/// Preprocesses raw labelled images to `size`.
pub fn prepare(items: &[(RawImage, DiseaseClass)], size: usize) -> Result<Vec<LabeledImage>, DiseaseError> {
    items
        .iter()
        .map(|(img, class)| {
            Ok(LabeledImage {
                image: preprocess_image(img, size)?,
                class: *class,
            })
        })
        .collect()
}
