//! Graph ingestion, synthetic generators, reference oracles and the
//! experiment driver behind the `flowctl` binary.

pub mod experiment;
pub mod generate;
pub mod graph;
pub mod oracle;

use iterflow::EngineError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// A directed edge list; CC symmetrizes it, PageRank reads it as links.
pub type Edges = Vec<(i64, i64)>;
