//! Error type shared by every module in the crate.

use thiserror::Error;

/// Errors surfaced by schedule construction, samplers, oracles and the engine.
#[derive(Debug, Error)]
pub enum FvdError {
    /// A caller-supplied parameter is outside its documented domain.
    #[error("invalid parameter {name}: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// An input vector contained non-finite entries or had the wrong shape.
    #[error("invalid input {name}: {reason}")]
    Input { name: &'static str, reason: String },

    /// A noise schedule no longer satisfies its invariants.
    #[error("corrupt noise schedule: {0}")]
    Schedule(String),

    /// The requested (schedule, eta) combination cannot produce a valid update.
    #[error("schedule/eta incompatibility at t={t}: 1-alpha_bar[t-1]-sigma^2 = {value}")]
    EtaIncompatible { t: usize, value: f64 },

    /// All resampling weights vanished; no categorical distribution exists.
    #[error("degenerate weights: all log-weights are -inf")]
    DegenerateWeights,

    /// The oracle grid does not cover enough prior mass.
    #[error("grid covers {covered} of prior mass, need >= {required}")]
    GridCoverage { covered: f64, required: f64 },

    /// An internal invariant that should be unreachable was violated.
    #[error("internal invariant violated at {context}: {reason}")]
    Invariant { context: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, FvdError>;

impl FvdError {
    pub(crate) fn parameter(name: &'static str, reason: impl Into<String>) -> Self {
        FvdError::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn input(name: &'static str, reason: impl Into<String>) -> Self {
        FvdError::Input {
            name,
            reason: reason.into(),
        }
    }
}
