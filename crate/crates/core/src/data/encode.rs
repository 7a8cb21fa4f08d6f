use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};

use super::schema::{ColumnKind, ColumnSchema, FeatureSchema};
use super::table::RawTable;

pub const DATASET_MAGIC: &[u8; 5] = b"ATTD1";

/// Feature matrix (row-major, `n_rows × n_features`) plus class labels.
/// Categorical cells hold their integer code as an `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub features: Vec<f64>,
    pub n_features: usize,
    pub labels: Vec<usize>,
    pub class_counts: Vec<usize>,
    pub schema: FeatureSchema,
}

impl EncodedDataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, schema: FeatureSchema) -> Result<Self> {
        let n_features = schema.n_features();
        let classes = schema.n_classes();
        if n_features == 0 || features.len() != labels.len() * n_features {
            return Err(Error::dim(
                "dataset",
                format!("{} values for {} rows of {n_features} features", features.len(), labels.len()),
            ));
        }
        let mut class_counts = vec![0; classes];
        for &y in &labels {
            *class_counts
                .get_mut(y)
                .ok_or_else(|| Error::Label(format!("label {y} out of range for {classes} classes")))? += 1;
        }
        Ok(Self {
            features,
            n_features,
            labels,
            class_counts,
            schema,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    /// Rows and labels at `indices`, in that order.
    pub fn gather(&self, indices: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let mut x = Vec::with_capacity(indices.len() * self.n_features);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(self.row(i));
            y.push(self.labels[i]);
        }
        (x, y)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = DatasetHeader {
            n_rows: self.n_rows(),
            n_features: self.n_features,
            schema: self.schema.clone(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut payload = Vec::with_capacity(self.features.len() * 8 + self.labels.len() * 4);
        container::f64s_to_le(&self.features, &mut payload);
        for &y in &self.labels {
            payload.extend_from_slice(&(y as u32).to_le_bytes());
        }
        Ok(container::encode(DATASET_MAGIC, &header, &payload))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, payload) = container::decode(DATASET_MAGIC, bytes)?;
        let header: DatasetHeader = serde_json::from_slice(header)?;
        let (features, rest) = container::le_to_f64s(payload, header.n_rows * header.n_features)?;
        if rest.len() != header.n_rows * 4 {
            return Err(Error::Format(format!(
                "expected {} label bytes, found {}",
                header.n_rows * 4,
                rest.len()
            )));
        }
        let labels = rest
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        if header.schema.n_features() != header.n_features {
            return Err(Error::Format("schema feature count disagrees with header".into()));
        }
        Self::new(features, labels, header.schema)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        container::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&container::read(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    n_rows: usize,
    n_features: usize,
    schema: FeatureSchema,
}

enum ColumnCodec<'a> {
    Categorical {
        schema: &'a ColumnSchema,
        codes: HashMap<&'a str, usize>,
    },
    Continuous {
        schema: &'a ColumnSchema,
    },
}

impl ColumnCodec<'_> {
    fn encode(&self, cell: Option<&str>, row: usize) -> Result<f64> {
        let schema = match self {
            ColumnCodec::Categorical { schema, .. } | ColumnCodec::Continuous { schema } => *schema,
        };
        let value = match cell.or(schema.imputation.as_deref()) {
            Some(v) => v,
            None => {
                return Err(Error::Encoding {
                    column: schema.name.clone(),
                    detail: format!("row {row} is missing and the column has no imputation value"),
                })
            }
        };
        match self {
            ColumnCodec::Categorical { codes, schema } => {
                Ok(codes.get(value).copied().unwrap_or_else(|| schema.unseen_code()) as f64)
            }
            ColumnCodec::Continuous { schema } => {
                value.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Encoding {
                    column: schema.name.clone(),
                    detail: format!("row {row}: `{value}` is not a finite number"),
                })
            }
        }
    }
}

/// Applies a fitted schema: imputes, label-encodes categoricals (unseen
/// values get the reserved code), parses continuous columns and maps the
/// target to class indices.
pub fn encode(table: &RawTable, schema: &FeatureSchema) -> Result<EncodedDataset> {
    let position = |name: &str| {
        table
            .column_index(name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` missing from table")))
    };
    let mut codecs = Vec::new();
    for col in schema.features() {
        let idx = position(&col.name)?;
        let codec = match col.kind {
            ColumnKind::Categorical => ColumnCodec::Categorical {
                schema: col,
                codes: col.encoding.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect(),
            },
            _ => ColumnCodec::Continuous { schema: col },
        };
        codecs.push((idx, codec));
    }
    let target = schema.target();
    let target_idx = position(&target.name)?;
    let classes: HashMap<&str, usize> = target
        .encoding
        .iter()
        .enumerate()
        .map(|(i, v)| (v.as_str(), i))
        .collect();

    let mut features = Vec::with_capacity(table.len() * codecs.len());
    let mut labels = Vec::with_capacity(table.len());
    for (r, row) in table.rows.iter().enumerate() {
        for (idx, codec) in &codecs {
            features.push(codec.encode(row[*idx].as_deref(), r + 1)?);
        }
        let label = row[target_idx]
            .as_deref()
            .ok_or_else(|| Error::Label(format!("row {} has no label", r + 1)))?;
        let y = classes
            .get(label)
            .ok_or_else(|| Error::Label(format!("unknown label `{label}` at row {}", r + 1)))?;
        labels.push(*y);
    }
    EncodedDataset::new(features, labels, schema.clone())
}

/// Inverse of the categorical encoding for one feature column.
pub fn decode(schema: &FeatureSchema, feature: usize, code: usize) -> Option<&str> {
    schema.features().nth(feature)?.decode(code)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::{fit_schema, SchemaOptions};
    use crate::data::table::CsvOptions;

    fn table(text: &str) -> RawTable {
        RawTable::from_reader(text.as_bytes(), &CsvOptions::default()).unwrap()
    }

    fn opts() -> SchemaOptions {
        SchemaOptions {
            target: "y".into(),
            ..Default::default()
        }
    }

    #[test]
    fn first_appearance_codes() {
        let t = table("c,y\na,p\nb,q\na,p\n");
        let s = fit_schema(&t, &opts()).unwrap();
        let d = encode(&t, &s).unwrap();
        assert_eq!(d.features, vec![0.0, 1.0, 0.0]);
        assert_eq!(d.labels, vec![0, 1, 0]);
        assert_eq!(d.class_counts, vec![2, 1]);
    }

    #[test]
    fn unseen_value_gets_reserved_code() {
        let fit = table("c,y\na,p\nb,q\n");
        let s = fit_schema(&fit, &opts()).unwrap();
        let d = encode(&table("c,y\nz,p\n"), &s).unwrap();
        assert_eq!(d.features, vec![2.0]);
    }

    #[test]
    fn unknown_label_rejected() {
        let s = fit_schema(&table("c,y\na,p\nb,q\n"), &opts()).unwrap();
        assert!(matches!(encode(&table("c,y\na,r\n"), &s), Err(Error::Label(_))));
    }

    #[test]
    fn missing_cells_are_imputed() {
        let t = table("c,x,y\na,1.5,p\n,,q\na,1.5,p\nb,2,q\n");
        let s = fit_schema(&t, &opts()).unwrap();
        let d = encode(&t, &s).unwrap();
        assert_eq!(d.row(1), &[0.0, 1.5]);
        assert!(d.features.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn decode_inverts_encode() {
        let t = table("c,y\nx,p\ny,q\nz,p\n");
        let s = fit_schema(&t, &opts()).unwrap();
        let d = encode(&t, &s).unwrap();
        for (r, want) in ["x", "y", "z"].iter().enumerate() {
            assert_eq!(decode(&s, 0, d.row(r)[0] as usize), Some(*want));
        }
    }

    #[test]
    fn container_round_trip() {
        let t = table("c,x,y\na,1.25,p\nb,-3,q\n");
        let s = fit_schema(&t, &opts()).unwrap();
        let d = encode(&t, &s).unwrap();
        let bytes = d.to_bytes().unwrap();
        let back = EncodedDataset::from_bytes(&bytes).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert!(EncodedDataset::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
