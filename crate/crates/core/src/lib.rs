//! Sum-of-norms regularized optimal transport.
//!
//! The SON problem adds pairwise fusion penalties between rows and between
//! columns of the transport plan to the Kantorovich linear program:
//!
//! ```text
//! min_X  <D, X> + lambda * ( sum_{l != k} R_lk ||x_l - x_k|| + sum_{l != k} S_lk ||x^l - x^k|| )
//! s.t.   X >= 0,  X 1 = mu,  X^T 1 = nu
//! ```
//!
//! [`solver::solve`] runs a stochastic incremental proximal-projection
//! method with per-term memory over the finite-sum split in [`terms`].
//! [`certificates`] evaluates the block-recovery conditions for clustered
//! data, and [`baselines`] provides Sinkhorn and an exact LP for comparison.

pub mod baselines;
pub mod certificates;
#[cfg(feature = "cli")]
pub mod cli;
pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod problem;
pub mod prox;
pub mod simplex;
pub mod solver;
pub mod terms;

pub use error::{Result, SonError};
pub use problem::{CostMatrix, Coupling, KernelWeights, Marginals, ProblemSpec};
pub use solver::{solve, SolveReport, SolverConfig};
