use thiserror::Error;

/// Errors raised by the map, skill, navigation and simulation layers.
///
/// Tool-facing code never propagates these to the agent directly; the tool
/// layer folds them into a failing `ToolOutput` with the display text as
/// feedback.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("object map is stale; call object_retrieval to rebuild it")]
    StaleMap,
    #[error("affordance detection failed: {0}")]
    AffordanceDetectionFailed(String),
    #[error("affordance normal has no horizontal component")]
    NoHorizontalNormal,
    #[error("no collision-free navigation pose around the object")]
    NoValidPose,
    #[error("navigation failed: {0}")]
    NavigationFailed(String),
    #[error("unknown scene template '{0}'")]
    UnknownTemplate(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
