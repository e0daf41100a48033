use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration at `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("failed to parse configuration: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error("UE {0} is not served by any RRH")]
    Unserved(usize),

    #[error("channel of UE {ue} is identically zero on its cluster")]
    ZeroChannel { ue: usize },

    #[error("empty angular support")]
    EmptySupport,

    #[error("all local combining vectors of UE {0} are zero")]
    ZeroLocalCombiners(usize),

    #[error("beamformer of UE {ue} has norm {norm}, expected 1")]
    NotUnitNorm { ue: usize, norm: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("duplicate experiment cell id {0}")]
    DuplicateCell(String),

    #[error("malformed result file {path}: {reason}")]
    ResultFormat { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(key: &str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}
