use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("singular dynamics: {0}")]
    Singularity(String),

    #[error("propagation failed: {0}")]
    Propagation(String),

    #[error("numerical failure at node {node}: {msg}")]
    Numerical { node: usize, msg: String },

    #[error("degenerate trigger: |nu^T f| = {0:e} is below tolerance")]
    DegenerateTrigger(f64),

    #[error("trigger not reached; final nu^T x = {final_value}")]
    NotTriggered { final_value: f64 },

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("gain synthesis failed: {0}")]
    Synthesis(String),

    #[error("gain synthesis infeasible:\n{0}")]
    Infeasible(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
