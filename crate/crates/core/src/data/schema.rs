use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::table::RawTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Categorical,
    Continuous,
    Target,
    Drop,
}

/// What the observed values look like, independent of whether the column is
/// kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueType {
    Categorical,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryOrder {
    #[default]
    FirstAppearance,
    Alphabetical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousImpute {
    #[default]
    Mode,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaOptions {
    pub target: String,
    /// Columns missing in strictly more than this fraction of rows are dropped.
    pub drop_threshold: f64,
    /// Identifier columns excluded from the features.
    pub id_columns: Vec<String>,
    /// Columns treated as categorical even if every value parses as a number.
    pub categorical: Vec<String>,
    pub category_order: CategoryOrder,
    pub continuous_impute: ContinuousImpute,
}

impl Default for SchemaOptions {
    fn default() -> Self {
        Self {
            target: "status_group".into(),
            drop_threshold: 0.5,
            id_columns: vec!["id".into()],
            categorical: Vec::new(),
            category_order: CategoryOrder::FirstAppearance,
            continuous_impute: ContinuousImpute::Mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    pub value_type: ValueType,
    /// Number of distinct observed values (categorical and target columns).
    pub cardinality: Option<usize>,
    /// Observed values in code order: `encoding[code] == value`. Code
    /// `cardinality` is reserved for values first seen after fitting.
    pub encoding: Vec<String>,
    pub imputation: Option<String>,
    pub missing_fraction: f64,
    pub drop_reason: Option<String>,
}

impl ColumnSchema {
    pub fn is_feature(&self) -> bool {
        matches!(self.kind, ColumnKind::Categorical | ColumnKind::Continuous)
    }

    /// Code given to values not seen while fitting.
    pub fn unseen_code(&self) -> usize {
        self.encoding.len()
    }

    pub fn decode(&self, code: usize) -> Option<&str> {
        self.encoding.get(code).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<ColumnSchema>,
}

impl FeatureSchema {
    pub fn target(&self) -> &ColumnSchema {
        self.columns
            .iter()
            .find(|c| c.kind == ColumnKind::Target)
            .expect("fitted schema always has a target column")
    }

    pub fn classes(&self) -> &[String] {
        &self.target().encoding
    }

    pub fn n_classes(&self) -> usize {
        self.classes().len()
    }

    /// Feature columns, in the order they appear in encoded rows.
    pub fn features(&self) -> impl Iterator<Item = &ColumnSchema> {
        self.columns.iter().filter(|c| c.is_feature())
    }

    pub fn n_features(&self) -> usize {
        self.features().count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: Self = serde_json::from_str(text)?;
        if schema.columns.iter().filter(|c| c.kind == ColumnKind::Target).count() != 1 {
            return Err(Error::Schema("schema must have exactly one target column".into()));
        }
        Ok(schema)
    }

    /// SHA-256 of the compact JSON form; identifies compatible datasets and
    /// models.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("schema serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Most frequent value; ties go to the value seen first.
fn mode<'a>(values: impl Iterator<Item = &'a str>) -> Option<String> {
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for (i, v) in values.enumerate() {
        counts.entry(v).or_insert((0, i)).0 += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .map(|(v, _)| v.to_owned())
}

fn distinct_in_order<'a>(values: impl Iterator<Item = &'a str>, order: CategoryOrder) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for v in values {
        if seen.insert(v) {
            out.push(v.to_owned());
        }
    }
    if order == CategoryOrder::Alphabetical {
        out.sort();
    }
    out
}

/// Class names sorted numerically when they are all integers, otherwise
/// lexicographically.
fn class_order(mut names: Vec<String>) -> Vec<String> {
    if names.iter().all(|n| n.parse::<i64>().is_ok()) {
        names.sort_by_key(|n| n.parse::<i64>().unwrap());
    } else {
        names.sort();
    }
    names
}

/// Infers column kinds, drops mostly-missing columns and chooses imputation
/// values and label encodings from `table`.
pub fn fit_schema(table: &RawTable, options: &SchemaOptions) -> Result<FeatureSchema> {
    if !(0.0..=1.0).contains(&options.drop_threshold) {
        return Err(Error::Config(format!(
            "drop threshold must lie in [0, 1], got {}",
            options.drop_threshold
        )));
    }
    let target_idx = table
        .column_index(&options.target)
        .ok_or_else(|| Error::Schema(format!("target column `{}` not found", options.target)))?;
    if table.is_empty() {
        return Err(Error::Schema("table has no rows".into()));
    }
    let n = table.len() as f64;
    let mut columns = Vec::with_capacity(table.headers.len());
    for (j, name) in table.headers.iter().enumerate() {
        let present: Vec<&str> = table.column(j).flatten().collect();
        let missing_fraction = (table.len() - present.len()) as f64 / n;
        let numeric = !present.is_empty() && present.iter().all(|v| v.parse::<f64>().is_ok_and(f64::is_finite));
        let value_type = if numeric && !options.categorical.contains(name) {
            ValueType::Continuous
        } else {
            ValueType::Categorical
        };
        let mut col = ColumnSchema {
            name: name.clone(),
            kind: match value_type {
                ValueType::Categorical => ColumnKind::Categorical,
                ValueType::Continuous => ColumnKind::Continuous,
            },
            value_type,
            cardinality: None,
            encoding: Vec::new(),
            imputation: None,
            missing_fraction,
            drop_reason: None,
        };
        if j == target_idx {
            col.kind = ColumnKind::Target;
            col.encoding = class_order(distinct_in_order(present.iter().copied(), CategoryOrder::FirstAppearance));
            col.cardinality = Some(col.encoding.len());
        } else if options.id_columns.contains(name) {
            col.kind = ColumnKind::Drop;
            col.drop_reason = Some("identifier column".into());
        } else if present.is_empty() {
            log::warn!("column `{name}` has no values; dropping it");
            col.kind = ColumnKind::Drop;
            col.drop_reason = Some("all values missing".into());
        } else if missing_fraction > options.drop_threshold {
            col.kind = ColumnKind::Drop;
            col.drop_reason = Some(format!(
                "missing fraction {missing_fraction:.4} exceeds threshold {}",
                options.drop_threshold
            ));
        } else {
            if missing_fraction > 0.0 {
                col.imputation = match (value_type, options.continuous_impute) {
                    (ValueType::Continuous, ContinuousImpute::Median) => Some(median(&present).to_string()),
                    _ => mode(present.iter().copied()),
                };
            }
            if value_type == ValueType::Categorical {
                col.encoding = distinct_in_order(present.iter().copied(), options.category_order);
                col.cardinality = Some(col.encoding.len());
            }
        }
        columns.push(col);
    }
    Ok(FeatureSchema { columns })
}

fn median(values: &[&str]) -> f64 {
    let mut v: Vec<f64> = values.iter().map(|s| s.parse().unwrap()).collect();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
