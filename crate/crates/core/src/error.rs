use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid matching: {0}")]
    InvalidMatching(String),
    #[error("model construction failed: {0}")]
    Model(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("variable {name} = {value} is not integral within {tolerance}")]
    Integrality {
        name: String,
        value: f64,
        tolerance: f64,
    },
    #[error("broken chain in solution: {0}")]
    BrokenChain(String),
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),
    #[error("undefined baseline: {0}")]
    UndefinedBaseline(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
