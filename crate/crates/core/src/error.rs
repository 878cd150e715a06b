use crate::dataset::RecordId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("record {0} is empty after normalization")]
    EmptyRecord(RecordId),

    #[error("record {record} is shorter than the gram size {n} after padding")]
    RecordTooShort { record: RecordId, n: usize },

    #[error("duplicate record id {0}")]
    DuplicateId(RecordId),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("token {0:?} is missing from the global ordering")]
    OrderingMiss(String),

    #[error("parameter error: {0}")]
    Param(String),

    #[error("decryption needs {needed} shares, only {provided} were provided")]
    ThresholdUnmet { needed: usize, provided: usize },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("transcript audit failed with {} violation(s); first: {}", .0.len(), .0.first().map(String::as_str).unwrap_or("-"))]
    AuditFailure(Vec<String>),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
