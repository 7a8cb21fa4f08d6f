//! CSV ingestion and preprocessing: schema fitting (mostly-missing column
//! drop, most-frequent imputation, label encoding), encoding into a dense
//! matrix, stratified splitting and dataset summaries.

mod encode;
mod inspect;
mod schema;
mod split;
mod table;

pub use encode::{decode, encode, EncodedDataset, DATASET_MAGIC};
pub use inspect::{inspect, ClassRow, ColumnSummary, InspectReport};
pub use schema::{
    fit_schema, CategoryOrder, ColumnKind, ColumnSchema, ContinuousImpute, FeatureSchema, SchemaOptions, ValueType,
};
pub use split::{stratified_split, Split};
pub use table::{load_csv, load_joined, CsvOptions, RawTable, MISSING_TOKENS};
