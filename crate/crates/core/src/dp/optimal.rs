//! Monte Carlo variance of the realised total cost along the optimal
//! closed-loop trajectory started at `x_1`.

use rand::Rng;
use rayon::prelude::*;

use super::bellman::DpSolution;
use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::sampling::SeedPlan;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryVariance {
    pub paths: usize,
    pub mean: f64,
    pub variance: f64,
    /// 95% half-width for `variance`, from the fourth central moment.
    pub ci_halfwidth: f64,
}

/// Simulates `n_paths` trajectories under the policies of `solution` and
/// returns the sample variance of the total cost.
pub fn optimal_value_variance(
    problem: &ProblemInstance,
    solution: &DpSolution,
    n_paths: usize,
    plan: &SeedPlan,
) -> Result<TrajectoryVariance> {
    if n_paths < 2 {
        return Err(Error::Config(format!(
            "need at least 2 paths, got {n_paths}"
        )));
    }
    if solution.horizon() != problem.horizon() {
        return Err(Error::Precondition(
            "solution and problem horizons differ".into(),
        ));
    }
    let chunks = n_paths.div_ceil(CHUNK);
    let costs: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let len = CHUNK.min(n_paths - c * CHUNK);
            let mut rng = plan.auxiliary_stream(c as u64);
            (0..len)
                .map(|_| path_cost(problem, solution, &mut rng))
                .collect::<Vec<_>>()
        })
        .collect();
    if let Some(bad) = costs.iter().find(|c| !c.is_finite()) {
        return Err(Error::Numerical(format!("non-finite path cost {bad}")));
    }
    let n = n_paths as f64;
    let mean = costs.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for c in &costs {
        let d2 = (c - mean).powi(2);
        m2 += d2;
        m4 += d2 * d2;
    }
    let variance = m2 / (n - 1.0);
    let s2 = m2 / n;
    let m4 = m4 / n;
    Ok(TrajectoryVariance {
        paths: n_paths,
        mean,
        variance,
        ci_halfwidth: 1.96 * ((m4 - s2 * s2).max(0.0) / n).sqrt(),
    })
}

fn path_cost<R: Rng>(problem: &ProblemInstance, solution: &DpSolution, rng: &mut R) -> f64 {
    let mut x = problem.initial_state();
    let mut total = 0.0;
    for t in 1..=problem.horizon() {
        let stage = problem.stage(t);
        let u = solution.policy(t).eval(x);
        let xi = problem.noise_component(t).quantile(rng.random::<f64>());
        total += stage.cost(x, u, xi);
        x = stage.dynamics(x, u, xi);
    }
    total + problem.terminal().eval(x)
}
