//! Tabular substrate: ingestion, encoding, standardization, holdout splits
//! and proxy ranking.

mod dataset;
mod deweight;
mod ingest;
mod proxy;
mod schema;
mod split;

pub use dataset::{
    ColumnScaling, Dataset, DatasetParts, OutcomeEncoding, OutcomeKind, SensitiveColumn,
    SensitiveKind, Standardization,
};
pub use deweight::DeweightSpec;
pub use ingest::{
    dataset_from_table, dataset_with_encoding, encode_features, encode_sensitive, file_sha256, load_csv, ColumnRoles,
    DataSpec, Table,
};
pub use proxy::{rank_proxy_features, ProxyScore};
pub use schema::{ColumnKind, FeatureColumn, FeatureSchema};
pub use split::{partition, split_holdout};
