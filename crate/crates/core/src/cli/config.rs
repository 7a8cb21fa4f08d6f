use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SchemaOptions;
use crate::error::{Error, Result};
use crate::tabnet::TabNetConfig;
use crate::train::TrainConfig;

/// Input locations, preprocessing options and the validation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Raw feature CSV.
    pub values: Option<PathBuf>,
    /// Optional label CSV joined to `values` on the first id column.
    pub labels: Option<PathBuf>,
    /// Encoded dataset container written by `preprocess`, read by the rest.
    pub dataset: Option<PathBuf>,
    /// Schema JSON written by `preprocess`.
    pub schema_out: Option<PathBuf>,
    pub delimiter: char,
    pub schema: SchemaOptions,
    pub val_fraction: f64,
    pub split_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            values: None,
            labels: None,
            dataset: None,
            schema_out: None,
            delimiter: ',',
            schema: SchemaOptions::default(),
            val_fraction: 0.2,
            split_seed: 42,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory receiving `model.attb`, `history.csv` and `metrics.json`.
    pub dir: Option<PathBuf>,
}

/// Everything a run needs, loadable from one JSON file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: TabNetConfig,
    pub train: TrainConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// File contents if a path is given, defaults otherwise.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        let d = &self.data;
        if !(d.val_fraction > 0.0 && d.val_fraction < 1.0) {
            return Err(Error::Config(format!("val_fraction must lie in (0, 1), got {}", d.val_fraction)));
        }
        if !d.delimiter.is_ascii() {
            return Err(Error::Config(format!("delimiter must be a single ASCII character, got {:?}", d.delimiter)));
        }
        if !(d.schema.drop_threshold >= 0.0 && d.schema.drop_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "drop_threshold must lie in [0, 1], got {}",
                d.schema.drop_threshold
            )));
        }
        Ok(())
    }
}
