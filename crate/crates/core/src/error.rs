use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("no spanning tree: {0}")]
    NoSpanningTree(String),

    /// Rank test and reachability search disagree; usually a sign that the
    /// singular-value cutoff is wrong for this graph's weights.
    #[error("spanning-tree diagnostics disagree: rank test says {rank_says}, reachability says {reach_says}")]
    SpanningTreeDiagnostics { rank_says: bool, reach_says: bool },

    #[error("invalid plant: {0}")]
    Plant(String),

    #[error("no solution for (zeta, delta) = ({zeta}, {delta})")]
    Infeasible { zeta: f64, delta: f64 },

    #[error("solver stopped without an optimal point: {0}")]
    Solver(String),

    #[error("simulation diverged at step {step}")]
    Diverged { step: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
