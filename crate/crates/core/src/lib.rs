//! Sample-average-approximation (SAA) dynamic programming for finite-horizon
//! stochastic optimal control, with backward propagation of the asymptotic
//! covariance of SAA value functions and a closed-form LQR oracle.
//!
//! The crate is organized around the objects a study needs:
//!
//! - [`model`]: problem data, state grids and tabulated value functions/policies.
//! - [`sampling`]: replication-indexed, reproducible noise pools.
//! - [`dp`]: true and SAA Bellman operators, backward induction, covariance
//!   propagation and the current/propagated variance split.
//! - [`lqr`]: Riccati recursion, SAA closed form and asymptotic variance laws.
//! - [`inventory`]: the inventory-control instance and its brute-force oracle.
//! - [`mc`]: the replicated Monte Carlo harness and distribution diagnostics.

pub mod dp;
pub mod error;
pub mod inventory;
pub mod lqr;
pub mod mc;
pub mod model;
pub mod sampling;

pub use error::{Error, Result};
