//! Query-metered sampling from strongly log-concave, log-smooth targets.
//!
//! A univariate target `p ∝ exp(-V)` with `alpha <= V'' <= beta` and mode at
//! the origin is accessed only through an [`oracle::Oracle`]. The
//! [`envelope`] module spends `O(log log kappa)` zeroth-order queries to build
//! a closed-form dominating function, and [`rejection`] turns it into exact or
//! failure-capped samples with `O(1)` expected extra queries.
//!
//! [`hard_family`] builds the family of piecewise-quadratic potentials that
//! cannot be told apart with fewer queries, and [`hit_and_run`] uses the
//! univariate sampler as the exact line step of a `d`-dimensional chain.

pub mod cli;
pub mod envelope;
pub mod error;
pub mod hard_family;
pub mod hit_and_run;
pub mod numerics;
pub mod oracle;
pub mod piecewise;
pub mod rejection;
pub mod targets;

pub use error::{Error, Result};
