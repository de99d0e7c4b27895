use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or inconsistent shapes supplied by the caller.
    #[error("configuration error: {0}")]
    Config(String),
    /// A numeric routine failed to converge or produced non-finite values.
    #[error("numeric failure: {message}")]
    Numeric { message: String, residual: Option<f64> },
    /// Shape or binding problem while building or evaluating a graph.
    #[error("graph error at node {node}: {message}")]
    Graph { node: String, message: String },
    #[error("usage error: {0}")]
    Usage(String),
    /// Malformed file contents.
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric { message: msg.into(), residual: None }
    }

    pub fn graph(node: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Graph { node: node.into(), message: msg.into() }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric { .. } => 3,
            _ => 2,
        }
    }
}
