use std::fmt;

use serde::Serialize;

use super::encode::EncodedDataset;
use super::schema::{ColumnKind, ValueType};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnSummary {
    pub name: String,
    pub kind: ColumnKind,
    pub value_type: ValueType,
    pub cardinality: Option<usize>,
    pub missing_fraction: f64,
    pub drop_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassRow {
    pub class: String,
    pub count: usize,
    pub fraction: f64,
}

/// Dataset summary: sizes, per-column metadata and the label distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InspectReport {
    pub n_rows: usize,
    pub n_features: usize,
    /// Value-type counts over every input column except identifiers and the
    /// target, before any column is dropped.
    pub categorical_before_drop: usize,
    pub continuous_before_drop: usize,
    pub columns_with_missing: Vec<String>,
    pub dropped: Vec<String>,
    pub columns: Vec<ColumnSummary>,
    pub classes: Vec<ClassRow>,
}

pub fn inspect(dataset: &EncodedDataset) -> InspectReport {
    let schema = &dataset.schema;
    let is_input = |c: &&super::schema::ColumnSchema| {
        c.kind != ColumnKind::Target && c.drop_reason.as_deref() != Some("identifier column")
    };
    let inputs: Vec<_> = schema.columns.iter().filter(is_input).collect();
    let n = dataset.n_rows();
    InspectReport {
        n_rows: n,
        n_features: dataset.n_features,
        categorical_before_drop: inputs.iter().filter(|c| c.value_type == ValueType::Categorical).count(),
        continuous_before_drop: inputs.iter().filter(|c| c.value_type == ValueType::Continuous).count(),
        columns_with_missing: inputs
            .iter()
            .filter(|c| c.missing_fraction > 0.0)
            .map(|c| c.name.clone())
            .collect(),
        dropped: inputs
            .iter()
            .filter(|c| c.kind == ColumnKind::Drop)
            .map(|c| c.name.clone())
            .collect(),
        columns: schema
            .columns
            .iter()
            .map(|c| ColumnSummary {
                name: c.name.clone(),
                kind: c.kind,
                value_type: c.value_type,
                cardinality: c.cardinality,
                missing_fraction: c.missing_fraction,
                drop_reason: c.drop_reason.clone(),
            })
            .collect(),
        classes: schema
            .classes()
            .iter()
            .zip(&dataset.class_counts)
            .map(|(name, &count)| ClassRow {
                class: name.clone(),
                count,
                fraction: count as f64 / n as f64,
            })
            .collect(),
    }
}

impl fmt::Display for InspectReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rows: {}", self.n_rows)?;
        writeln!(f, "features after preprocessing: {}", self.n_features)?;
        writeln!(
            f,
            "input columns: {} categorical, {} continuous",
            self.categorical_before_drop, self.continuous_before_drop
        )?;
        writeln!(
            f,
            "columns with missing values ({}): {}",
            self.columns_with_missing.len(),
            self.columns_with_missing.join(", ")
        )?;
        writeln!(f, "dropped ({}): {}", self.dropped.len(), self.dropped.join(", "))?;
        writeln!(f)?;
        writeln!(f, "{:<28} {:<12} {:>11} {:>9}", "column", "kind", "cardinality", "missing")?;
        for c in &self.columns {
            let kind = serde_json::to_value(c.kind).unwrap();
            let card = c.cardinality.map_or("-".to_string(), |v| v.to_string());
            writeln!(
                f,
                "{:<28} {:<12} {:>11} {:>8.2}%",
                c.name,
                kind.as_str().unwrap_or("?"),
                card,
                100.0 * c.missing_fraction
            )?;
        }
        writeln!(f)?;
        writeln!(f, "{:<28} {:>8} {:>9}", "class", "count", "share")?;
        for c in &self.classes {
            writeln!(f, "{:<28} {:>8} {:>8.2}%", c.class, c.count, 100.0 * c.fraction)?;
        }
        Ok(())
    }
}
