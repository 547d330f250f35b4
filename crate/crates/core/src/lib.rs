//! Subspace recovery from multi-user data under heterogeneous,
//! non-isotropic, user-dependent noise.
//!
//! The estimator aggregates pairwise cross-moments of each user's samples,
//! which stay unbiased for the signal outer product no matter how irregular
//! the per-user noise is, and reads the shared subspace off the top-k
//! eigenvectors. Companion modules provide principal-angle metrics, the
//! Davis-Kahan inequality, theoretical upper/lower bound formulas,
//! synthetic generators for the adversarial noise constructions, and a
//! Monte Carlo harness for scaling experiments.

pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod linmodel;
pub mod pca;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
