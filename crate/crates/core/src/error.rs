use thiserror::Error;

use crate::mesh::Side;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid port on {side:?} side: {msg}")]
    InvalidPort { side: Side, msg: String },

    #[error("conflicting boundary tags on {side:?} side: [{a_start}, {a_end}] overlaps [{b_start}, {b_end}]")]
    ConflictingPorts {
        side: Side,
        a_start: f64,
        a_end: f64,
        b_start: f64,
        b_end: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("unconstrained rigid body: {0}")]
    UnconstrainedRigidBody(String),

    #[error("linear solver did not converge: relative residual {residual:e}")]
    SolverNotConverged { residual: f64 },

    #[error("singular diffusion system")]
    SingularDiffusion,

    #[error("degenerate design: {0}")]
    Degenerate(String),

    #[error("volume multiplier bracketing failed after {0} doublings")]
    Bracketing(usize),

    #[error(
        "trial volume {volume} at multiplier {lambda} exceeds {previous} at a smaller multiplier"
    )]
    NonMonotoneVolume {
        lambda: f64,
        volume: f64,
        previous: f64,
    },

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("{0}")]
    Cli(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
