//! Byzantine-resilient decentralized learning via coordinate descent.
//!
//! Honest nodes of a static directed network each hold a local training
//! shard. Every scalar coordinate of the model is solved as a separate
//! consensus-plus-descent subproblem: nodes broadcast the coordinate,
//! drop the `b` largest and `b` smallest received values, average the
//! survivors with their own value and take a step along the local
//! coordinate gradient. Up to `b` Byzantine neighbors per node cannot
//! push honest values outside the range spanned by honest ones.
//!
//! Modules:
//!
//! - [`topology`]: directed graphs, degree checks, reduced-graph
//!   enumeration and source-component certification.
//! - [`data`]: synthetic and CSV datasets, class-balanced partitioning.
//! - [`learning`]: regularized losses (square, square hinge, logistic,
//!   small ReLU/softmax MLP) with full and per-coordinate gradients.
//! - [`protocol`]: screening, the update rule, step schedules, attacks
//!   and the round-synchronous engine.
//! - [`baselines`]: distributed gradient descent, local and centralized
//!   coordinate descent.
//! - [`metrics`]: consensus and risk diagnostics, CSV records.
//! - [`experiment`]: config-driven, seeded experiment runner.
//!
//! Node ids are 0-based in the Rust API and 1-based in every text format
//! (edge lists, metrics, witnesses).

pub mod baselines;
pub mod data;
mod error;
pub mod experiment;
pub mod learning;
pub mod metrics;
pub mod protocol;
pub mod rng;
pub mod topology;

pub use error::{Error, Result};
