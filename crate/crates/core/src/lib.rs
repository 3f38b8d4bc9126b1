//! Optimal prediction of the ultimate maximum.
//!
//! Exact solvers and verifiers for `sup_tau E[f(M_N - S_tau)]` on a
//! Bernoulli(p) walk, and quadrature / Monte Carlo tools for the drifted
//! Brownian analogue `sup_tau E[f(M_T - B_tau)]`.

// `!(x > 0.0)` is how inputs reject NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod par;
pub mod report;
pub mod rewards;
pub mod scalar;
pub mod walkdist;
pub mod dpsolver;
pub mod oracle;
pub mod rng;
pub mod coupling;
pub mod brownian;
pub mod grids;
pub mod suite;
pub mod cli;

pub use error::{Error, Result};
pub use rewards::{classify, Probe, RewardFlags, RewardSpec};
pub use scalar::{Rational, Scalar};
pub use walkdist::{JointLaw, WalkParams};
