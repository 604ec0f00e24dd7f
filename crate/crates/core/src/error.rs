use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid configuration in `{layer}`: {field} {message}")]
    Validation { layer: String, field: &'static str, message: String },

    #[error("no parameter choice fits the BRAM budget of {budget} in layer `{layer}`")]
    Infeasible { layer: String, budget: u64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("instance too large for exhaustive search: {edges} edges (limit {limit})")]
    InstanceTooLarge { edges: usize, limit: usize },

    #[error("missing output tile ({row}, {col})")]
    MissingTile { row: usize, col: usize },

    #[error("malformed binary data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(layer: &str, field: &'static str, message: impl Into<String>) -> Self {
        Error::Validation { layer: layer.to_string(), field, message: message.into() }
    }
}
