use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("infeasible network: {0}")]
    InfeasibleGraph(String),

    #[error("random regular graph construction failed after {attempts} attempts")]
    GraphConstruction { attempts: usize },

    #[error("infeasible pair state: {0}")]
    InfeasibleState(String),

    #[error("degree k = {0} is degenerate for the pair-approximation formulas (need k >= 3)")]
    DegenerateDegree(u32),

    #[error("non-positive fitness in the neighbourhood of node {node}: {detail}")]
    InvalidFitness { node: usize, detail: String },

    #[error("no threshold: {0}")]
    NoThreshold(String),

    #[error("state space too large: {nodes} nodes (limit {limit})")]
    StateSpaceTooLarge { nodes: usize, limit: usize },

    #[error("linear solve failed: {0}")]
    Solver(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
