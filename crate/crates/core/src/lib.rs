//! Weighted value factorization for cooperative multi-agent Q-learning.
//!
//! The crate provides, from the ground up: a dense-tensor reverse-mode
//! differentiation engine, the two desk-scale environments (one-step matrix
//! game and predator-prey grid world), shared-parameter agent networks,
//! three joint-value heads (monotonic mixer, unrestricted central critic,
//! and a potentially-optimal joint-action recognizer), loss weighting rules
//! (uniform / recognizer-based / optimistic / central), the replay +
//! TD(λ) training loop, and an exact brute-force oracle for enumerable
//! games.

pub mod agents;
pub mod autodiff;
pub mod env;
pub mod learner;
pub mod mixers;
pub mod nn;
pub mod oracle;
pub mod weighting;

use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("backward on a detached tensor")]
    DetachedLoss,
    #[error("non-finite gradient in parameter {param}; training halted")]
    NonFiniteGradient { param: usize },
    #[error("non-finite loss: {context}")]
    NonFiniteLoss { context: String },
    #[error("action {action} out of range for agent {agent} ({n_actions} actions)")]
    ActionOutOfRange {
        agent: usize,
        action: usize,
        n_actions: usize,
    },
    #[error("agent {agent} has no available action")]
    EmptyActionMask { agent: usize },
    #[error("cannot sample from an empty replay buffer")]
    EmptyBuffer,
    #[error("joint space of {size} exceeds the enumeration cap of {cap}")]
    EnumerationCap { size: usize, cap: usize },
    #[error("{0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
