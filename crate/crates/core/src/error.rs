use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The offered load saturates the serving channel (utilization >= 1).
    #[error("channel overloaded: utilization {utilization:.4} >= 1")]
    Overload { utilization: f64 },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("unknown node: {0}")]
    Lookup(String),

    #[error("layout generation failed: {0}")]
    Generation(String),

    #[error("model error: {0}")]
    Model(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
