//! Decentralized overlapping-subdomain solvers for graph-structured
//! positive-definite linear systems `Hx = f` and the quadratic programs that
//! reduce to them.
//!
//! The crate is organized bottom-up:
//!
//! - [`graph`]: undirected graphs, BFS set distances, partitions and
//!   `omega`-hop overlap expansion.
//! - [`matrix`]: sparse symmetric matrices tied to a graph, the generalized
//!   (graph-induced) bandwidth, subdomain projections and residuals.
//! - [`factor`]: block subproblem solvers (dense/envelope Cholesky, CG).
//! - [`spectral`]: eigenvalue intervals, inverse-decay bounds, certified
//!   contraction bounds for the iteration matrix, and the disk-spectrum
//!   decay check for non-PD matrices.
//! - [`schwarz`]: the synchronous scheme, the deterministic asynchronous
//!   simulator and the threaded shared-board runtime.
//! - [`admm`]: consensus ADMM over the same overlapping blocks.
//! - [`problems`]: graph QP reduction and the DC state-estimation family.
//! - [`constrained`]: the optimization-space scheme with soft angle bounds.
//! - [`io`]: file formats (graph/partition JSON, Matrix Market, bundles,
//!   trace CSV).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod constrained;
pub mod error;
pub mod factor;
pub mod graph;
pub mod io;
pub mod matrix;
pub mod problems;
pub mod schwarz;
pub mod spectral;

pub use error::{Error, Result};
pub use graph::{Graph, OverlapBlocks, Partition};
pub use matrix::{StructuredMatrix, SubdomainSystem};
pub use schwarz::{IterationState, SolveOptions, Status, SubproblemBackend};
pub use spectral::{EigenInterval, EigenMethod, RateBound};

/// Infinity norm of a vector.
pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Infinity norm of `a - b`.
pub fn diff_norm_inf(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}
