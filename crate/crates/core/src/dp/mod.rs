//! Bellman operators, backward induction and backward propagation of the
//! asymptotic covariance of SAA value functions.

mod bellman;
mod covariance;
mod golden;
mod optimal;
mod quadrature;

pub use bellman::{
    backward_induction, bellman_saa, bellman_true, DpSolution, Expectation, StageSolution,
    CONTROL_TOLERANCE,
};
pub use covariance::{
    propagate_covariance, propagated_term_tensor, variance_decompose, CovarianceGrid,
    VarianceDecomposition,
};
pub use golden::{golden_section, Minimum};
pub use optimal::{optimal_value_variance, TrajectoryVariance};
pub use quadrature::QuadratureRule;

/// Default Gauss-Legendre node count for exact-expectation operators.
pub const DEFAULT_QUADRATURE_NODES: usize = 64;

/// Default node count of covariance grids.
pub const DEFAULT_COVARIANCE_NODES: usize = 401;
