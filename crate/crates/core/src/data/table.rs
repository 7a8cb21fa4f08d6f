use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};

/// Tokens read as a missing value, besides the empty field.
pub const MISSING_TOKENS: &[&str] = &["NaN", "nan"];

/// CSV contents as strings; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Option<String>>>,
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self { delimiter: b',' }
    }
}

fn cell(field: &str) -> Option<String> {
    if field.is_empty() || MISSING_TOKENS.contains(&field) {
        None
    } else {
        Some(field.to_owned())
    }
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn column(&self, idx: usize) -> impl Iterator<Item = Option<&str>> + '_ {
        self.rows.iter().map(move |r| r[idx].as_deref())
    }

    /// Parses CSV text with a header row.
    pub fn from_reader<R: std::io::Read>(reader: R, options: &CsvOptions) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(options.delimiter)
            .has_headers(true)
            .flexible(false)
            .from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| ingestion(e, None))?
            .iter()
            .map(str::to_owned)
            .collect();
        if headers.is_empty() {
            return Err(Error::Ingestion {
                row: None,
                detail: "missing header row".into(),
            });
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            // data rows are numbered from 1, after the header
            let rec = rec.map_err(|e| ingestion(e, Some(i as u64 + 1)))?;
            rows.push(rec.iter().map(cell).collect());
        }
        Ok(Self { headers, rows })
    }

    /// Joins `labels` onto `self` by the `id` column, appending the label
    /// file's remaining columns.
    pub fn join_on(&self, labels: &RawTable, id: &str) -> Result<RawTable> {
        let missing_id = |which: &str| Error::Schema(format!("{which} file has no `{id}` column"));
        let left = self.column_index(id).ok_or_else(|| missing_id("values"))?;
        let right = labels.column_index(id).ok_or_else(|| missing_id("labels"))?;
        let mut by_id: HashMap<&str, usize> = HashMap::with_capacity(labels.len());
        for (i, row) in labels.rows.iter().enumerate() {
            let key = row[right].as_deref().ok_or_else(|| Error::Ingestion {
                row: Some(i as u64 + 1),
                detail: format!("labels file row has no `{id}`"),
            })?;
            if by_id.insert(key, i).is_some() {
                return Err(Error::Ingestion {
                    row: Some(i as u64 + 1),
                    detail: format!("duplicate `{id}` {key} in labels file"),
                });
            }
        }
        let extra: Vec<usize> = (0..labels.headers.len()).filter(|&j| j != right).collect();
        let mut headers = self.headers.clone();
        headers.extend(extra.iter().map(|&j| labels.headers[j].clone()));
        let mut rows = Vec::with_capacity(self.len());
        for (i, row) in self.rows.iter().enumerate() {
            let key = row[left].as_deref().unwrap_or("");
            let &li = by_id.get(key).ok_or_else(|| Error::Ingestion {
                row: Some(i as u64 + 1),
                detail: format!("no label for `{id}` {key}"),
            })?;
            let mut joined = row.clone();
            joined.extend(extra.iter().map(|&j| labels.rows[li][j].clone()));
            rows.push(joined);
        }
        Ok(RawTable { headers, rows })
    }
}

fn ingestion(e: csv::Error, row: Option<u64>) -> Error {
    let detail = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        _ => e.to_string(),
    };
    Error::Ingestion { row, detail }
}

/// Reads a CSV file. Empty fields and `NaN`/`nan` become missing cells;
/// rows with a different field count than the header are rejected.
pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<RawTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    RawTable::from_reader(file, options)
}

/// Reads a values file and a labels file and joins them on `id`.
pub fn load_joined(
    values: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    id: &str,
    options: &CsvOptions,
) -> Result<RawTable> {
    let v = load_csv(values, options)?;
    let l = load_csv(labels, options)?;
    v.join_on(&l, id)
}
