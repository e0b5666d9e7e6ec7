//! Synthetic tables, template-based questions and an independent answer oracle.

mod dataset;
mod qa;
mod spec;

use thiserror::Error;

pub use dataset::{
    generate_dataset, generate_dataset_parallel, generate_sample, ManifestRecord, TableQaSample,
};
pub use qa::{
    applicable_templates, check_applicable, instantiate_qa, oracle_answer, ordinal, template,
    AnswerKind, QaPair, QaTemplate, Query, TEMPLATES,
};
pub use spec::{generate_table, TableLimits, TableSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("invalid limits: {0}")]
    InvalidLimits(String),
    #[error("unknown template id {0}")]
    UnknownTemplate(u8),
    #[error("template {template} not applicable: {reason}")]
    NotApplicable { template: u8, reason: String },
    #[error("query resolution: {0}")]
    QueryResolution(String),
}
