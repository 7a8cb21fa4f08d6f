//! Model files: `ATTB1` container whose JSON header carries the config, the
//! schema and a parameter manifest, followed by every parameter as
//! little-endian `f64`s in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container;
use crate::data::FeatureSchema;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::config::TabNetConfig;
use super::model::TabNet;

pub const MODEL_MAGIC: &[u8; 5] = b"ATTB1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelHeader {
    config: TabNetConfig,
    schema: FeatureSchema,
    schema_fingerprint: String,
    fitted: bool,
    #[serde(default)]
    metadata: serde_json::Value,
    params: Vec<ManifestEntry>,
}

impl TabNet {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = ModelHeader {
            config: self.config.clone(),
            schema: self.schema.clone(),
            schema_fingerprint: self.schema.fingerprint(),
            fitted: self.fitted,
            metadata: self.metadata.clone(),
            params: self
                .store
                .iter()
                .map(|(_, p)| ManifestEntry {
                    name: p.name.clone(),
                    shape: p.tensor.shape().to_vec(),
                    trainable: p.trainable,
                })
                .collect(),
        };
        let mut payload = Vec::with_capacity(self.store.total_values() * 8);
        for (_, p) in self.store.iter() {
            container::f64s_to_le(p.tensor.data(), &mut payload);
        }
        Ok(container::encode(MODEL_MAGIC, &serde_json::to_vec(&header)?, &payload))
    }

    /// Rebuilds the architecture from the stored config and schema, then
    /// overwrites every parameter with the stored values.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, payload) = container::decode(MODEL_MAGIC, bytes)?;
        let header: ModelHeader = serde_json::from_slice(header)?;
        if header.schema.fingerprint() != header.schema_fingerprint {
            return Err(Error::Format("schema fingerprint does not match stored schema".into()));
        }
        let mut model = TabNet::new(header.config, &header.schema)?;
        if header.params.len() != model.store.len() {
            return Err(Error::Format(format!(
                "manifest lists {} parameters, architecture has {}",
                header.params.len(),
                model.store.len()
            )));
        }
        let ids: Vec<_> = model.store.ids().collect();
        let mut rest = payload;
        for (id, entry) in ids.into_iter().zip(&header.params) {
            let p = model.store.get(id);
            if p.name != entry.name || p.tensor.shape() != entry.shape.as_slice() || p.trainable != entry.trainable {
                return Err(Error::Format(format!(
                    "manifest entry `{}` {:?} does not match parameter `{}` {:?}",
                    entry.name,
                    entry.shape,
                    p.name,
                    p.tensor.shape()
                )));
            }
            let (values, tail) = container::le_to_f64s(rest, p.tensor.len())?;
            *model.store.value_mut(id) = Tensor::new(entry.shape.clone(), values)?;
            rest = tail;
        }
        if !rest.is_empty() {
            return Err(Error::Format(format!("{} trailing payload bytes", rest.len())));
        }
        model.fitted = header.fitted;
        model.metadata = header.metadata;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        container::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&container::read(path)?)
    }
}
