use thiserror::Error;

use crate::instance::Cut;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("triangle inequality violated: c({u},{w}) = {direct} > c({u},{v}) + c({v},{w}) = {via}")]
    TriangleViolation { u: usize, v: usize, w: usize, direct: f64, via: f64 },

    #[error("vertex {target} is unreachable from the source")]
    Unreachable { target: usize },

    #[error("instance too large: n = {n}, limit {limit} for {what}")]
    TooLarge { n: usize, limit: usize, what: &'static str },

    #[error("circulation infeasible{}", .witness.as_ref().map(|c| format!(" (violating set {:?})", c.members())).unwrap_or_default())]
    Infeasible { witness: Option<Cut> },

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("row generation stopped after {iterations} rounds; cut {:?} still violated", .violated.members())]
    IterationCap { iterations: usize, violated: Cut },

    #[error("narrow cuts are not nested: {:?} and {:?}", .a.members(), .b.members())]
    ChainViolation { a: Cut, b: Cut },

    #[error("layer {layer} has zero boundary mass")]
    ZeroBoundaryMass { layer: usize },

    #[error("tree decomposition failed: {0}")]
    Decomposition(String),

    #[error("no acceptable sample after {tries} tries (best cost {best_cost}, best alpha {best_alpha})")]
    TriesExhausted { tries: usize, best_cost: f64, best_alpha: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible { .. } | Error::Unbounded => 3,
            _ => 2,
        }
    }
}
