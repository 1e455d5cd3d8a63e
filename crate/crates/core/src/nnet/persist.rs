//! Network persistence: a JSON manifest plus a flat little-endian `f64`
//! weight blob. The manifest records where each parameter tensor starts in
//! the blob (in values, not bytes).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::layer::LayerSpec;
use super::network::Network;
use super::{NnError, Tensor};

pub const NETWORK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub spec: LayerSpec,
    pub params: Vec<ParamEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkManifest {
    pub format_version: u32,
    pub seed: u64,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerEntry>,
    pub total_values: usize,
}

/// Serialises `net` into `(manifest json, weight blob)`.
pub fn encode_network(net: &Network) -> Result<(String, Vec<u8>), NnError> {
    let mut blob = Vec::with_capacity(net.num_params() * 8);
    let mut offset = 0;
    let mut layers = Vec::with_capacity(net.layers().len());
    for (i, spec) in net.layers().iter().enumerate() {
        let mut params = Vec::new();
        for t in net.layer_params(i) {
            params.push(ParamEntry {
                shape: t.shape().to_vec(),
                offset,
                len: t.len(),
            });
            offset += t.len();
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        layers.push(LayerEntry { spec: *spec, params });
    }
    let manifest = NetworkManifest {
        format_version: NETWORK_FORMAT_VERSION,
        seed: net.seed(),
        input_shape: net.input_shape().to_vec(),
        layers,
        total_values: offset,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| NnError::Persist(e.to_string()))?;
    Ok((text, blob))
}

pub fn decode_network(manifest: &str, blob: &[u8]) -> Result<Network, NnError> {
    let manifest: NetworkManifest =
        serde_json::from_str(manifest).map_err(|e| NnError::Persist(format!("manifest: {e}")))?;
    if manifest.format_version != NETWORK_FORMAT_VERSION {
        return Err(NnError::Persist(format!(
            "unsupported format_version {}",
            manifest.format_version
        )));
    }
    if blob.len() != manifest.total_values * 8 {
        return Err(NnError::Persist(format!(
            "weight blob has {} bytes, manifest expects {}",
            blob.len(),
            manifest.total_values * 8
        )));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let mut params = Vec::new();
    for entry in manifest.layers.iter().flat_map(|l| &l.params) {
        let end = entry
            .offset
            .checked_add(entry.len)
            .filter(|&e| e <= values.len())
            .ok_or_else(|| NnError::Persist("parameter offset out of range".into()))?;
        params.push(Tensor::new(entry.shape.clone(), values[entry.offset..end].to_vec())?);
    }
    let specs = manifest.layers.iter().map(|l| l.spec).collect();
    Network::from_parts(&manifest.input_shape, specs, params, manifest.seed)
}

/// Manifest and blob paths for a model stored as `<dir>/<stem>.json` and
/// `<dir>/<stem>.weights`.
#[derive(Debug, Clone)]
pub struct NetworkFiles {
    pub manifest: PathBuf,
    pub weights: PathBuf,
}

impl NetworkFiles {
    pub fn new(dir: impl AsRef<Path>, stem: &str) -> Self {
        let dir = dir.as_ref();
        NetworkFiles {
            manifest: dir.join(format!("{stem}.json")),
            weights: dir.join(format!("{stem}.weights")),
        }
    }

    pub fn exists(&self) -> bool {
        self.manifest.exists() && self.weights.exists()
    }

    pub fn save(&self, net: &Network) -> Result<(), NnError> {
        let (manifest, blob) = encode_network(net)?;
        std::fs::write(&self.manifest, manifest)?;
        std::fs::write(&self.weights, blob)?;
        Ok(())
    }

    pub fn load(&self) -> Result<Network, NnError> {
        let manifest = std::fs::read_to_string(&self.manifest)?;
        let blob = std::fs::read(&self.weights)?;
        decode_network(&manifest, &blob)
    }
}
