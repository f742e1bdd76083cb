//! Randomized block proximal gradient methods for composite problems
//! `min F(x) = f(x) + Ψ(x)` with `f` smooth and `Ψ` block separable.
//!
//! The crate provides:
//!
//! - [`solver`]: the randomized nonmonotone block proximal gradient method
//!   (RNBPG) together with the fixed-step (RBCD) and monotone line-search
//!   (RBCD-LS) baselines,
//! - [`regularizers`]: separable penalties with closed-form block proximal maps,
//! - [`oracle`]: least-squares and quadratic smooth parts with incremental
//!   residual caches so that a block iteration costs `O(m N_i)`,
//! - [`diagnostics`]: proximal-gradient norms, KKT residuals and rate fits,
//! - [`instance`]: a synthetic ℓ1-least-squares generator with a certified
//!   optimum plus the `BPXI` binary format.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod block;
pub mod config;
pub mod diagnostics;
mod error;
pub mod instance;
pub mod linalg;
pub mod oracle;
pub mod regularizers;
pub mod solver;
pub mod trace;

pub use block::{BlockPartition, BlockSampler, ObjectiveWindow, Sampling, SolverParams};
pub use error::{Error, LineSearchFailure, Result};
pub use instance::{KnownOptimum, LassoInstance};
pub use linalg::Matrix;
pub use oracle::{OracleState, SmoothOracle};
pub use regularizers::Regularizer;
pub use solver::{CompositeProblem, Method, RunTrace, Solver, SolverState, StopReason};
pub use trace::TraceRecord;
