use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {index} out of range for a graph with {n_nodes} nodes")]
    NodeOutOfRange { index: usize, n_nodes: usize },

    #[error("graph is not connected")]
    Disconnected,

    #[error("weight matrix does not match the graph: {0}")]
    Sparsity(String),

    #[error("row or column {0} of the raw weight matrix sums to zero")]
    ZeroLine(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix C_{index} is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { index: usize, asymmetry: f64 },

    #[error("matrix C_{index} is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { index: usize, min_eigenvalue: f64 },

    #[error("agent index {index} out of range for {n_agents} agents")]
    AgentOutOfRange { index: usize, n_agents: usize },

    #[error("matrix is singular to working tolerance (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("invalid stepsize: {0}")]
    Stepsize(String),

    #[error("basis is not orthonormal (defect {0:e})")]
    NotOrthonormal(f64),

    #[error("eigenvalue computation did not converge")]
    EigenFailure,

    #[error("regulator equations need K_z = K_y (mismatch {0:e})")]
    GainMismatch(f64),

    #[error("gains are not admissible at the lower bracket {0:e}")]
    NotAdmissibleAtLowerBracket(f64),

    #[error("iteration diverged after step {last_good_step} (|x| = {norm:e})")]
    Diverged { last_good_step: usize, norm: f64 },

    #[error("step {t} is outside the recorded trajectory (length {len})")]
    StepOutOfRange { t: usize, len: usize },

    #[error("invalid initialization: {0}")]
    Init(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
