use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unknown bank id `{0}`")]
    UnknownBank(String),

    #[error("duplicate bank id `{0}`")]
    DuplicateBank(String),

    #[error("no exposure from `{from}` to `{to}`")]
    MissingEdge { from: String, to: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible marginals: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("stage {0} has not been produced yet")]
    MissingStage(crate::network::Stage),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("unsupported document version {0}")]
    Version(u32),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
