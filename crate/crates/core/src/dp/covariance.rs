//! Backward propagation of the limit covariance `Gamma_t` of
//! `sqrt(N) (V_hat_t - V_t)` on node lattices, and the split of the
//! asymptotic variance into current-stage and propagated parts.
//!
//! Per stage, with `y(x, xi) = F_t(x, pi_t(x), xi)` and
//! `phi(x, xi) = f_t(x, pi_t(x), xi) + V_{t+1}(y(x, xi))`:
//!
//! ```text
//! Gamma_t(x, x') = E_{xi, xi'} Gamma_{t+1}(y(x, xi), y(x', xi'))   (propagated)
//!                + Cov_xi(phi(x, xi), phi(x', xi))                (current stage)
//! ```
//!
//! Because the covariance lattice is interpolated bilinearly, the propagated
//! term factors as `H Gamma_{t+1} H^T` where row `i` of `H` holds the
//! expected hat-function weights of `y(x_i, xi)`.

use super::bellman::DpSolution;
use super::quadrature::QuadratureRule;
use crate::error::{Error, Result};
use crate::model::{with_stage_functions, ProblemInstance, StageFunctions, StateGrid};

/// Symmetric covariance on a node lattice with bilinear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceGrid {
    pub stage: usize,
    grid: StateGrid,
    /// Row-major `n x n`.
    values: Vec<f64>,
}

impl CovarianceGrid {
    pub fn zeros(stage: usize, grid: StateGrid) -> Self {
        let n = grid.len();
        Self {
            stage,
            grid,
            values: vec![0.0; n * n],
        }
    }

    pub fn grid(&self) -> &StateGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.len() + j]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|i| self.at(i, i)).collect()
    }

    /// Bilinear interpolation (linear extrapolation off the lattice).
    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let (i, a0, a1) = self.grid.hat_weights(x);
        let (j, b0, b1) = self.grid.hat_weights(y);
        a0 * (b0 * self.at(i, j) + b1 * self.at(i, j + 1))
            + a1 * (b0 * self.at(i + 1, j) + b1 * self.at(i + 1, j + 1))
    }

    /// Largest `|Gamma(x_i, x_j) - Gamma(x_j, x_i)|`.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.grid.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.at(i, j) - self.at(j, i)).abs());
            }
        }
        worst
    }
}

/// Sparse row of expected hat weights: nonzeros on `first..first + weights.len()`.
struct HatRow {
    first: usize,
    weights: Vec<f64>,
}

/// Successor states and centred stage returns at one lattice node.
struct NodeData {
    successors: Vec<f64>,
    centred: Vec<f64>,
}

fn node_data<S: StageFunctions + ?Sized>(
    s: &S,
    x: f64,
    u: f64,
    quad: &QuadratureRule,
    solution: &DpSolution,
    t: usize,
) -> NodeData {
    let v_next = solution.value(t + 1);
    let mut successors = Vec::with_capacity(quad.len());
    let mut returns = Vec::with_capacity(quad.len());
    for &xi in quad.nodes() {
        let y = s.dynamics(x, u, xi);
        successors.push(y);
        returns.push(s.cost(x, u, xi) + v_next.eval(y));
    }
    let mean: f64 = returns.iter().zip(quad.weights()).map(|(r, w)| r * w).sum();
    let centred = returns
        .iter()
        .zip(quad.weights())
        .map(|(r, w)| w.sqrt() * (r - mean))
        .collect();
    NodeData {
        successors,
        centred,
    }
}

fn hat_row(successors: &[f64], weights: &[f64], grid: &StateGrid) -> HatRow {
    let n = grid.len();
    let mut dense = vec![0.0; n];
    let mut lo = n;
    let mut hi = 0;
    for (&y, &w) in successors.iter().zip(weights) {
        let (k, w0, w1) = grid.hat_weights(y);
        dense[k] += w * w0;
        dense[k + 1] += w * w1;
        lo = lo.min(k);
        hi = hi.max(k + 1);
    }
    HatRow {
        first: lo,
        weights: dense[lo..=hi].to_vec(),
    }
}

/// Covariance lattices `Gamma_1..Gamma_{T+1}` (index `t - 1`), each with
/// `covariance_nodes` nodes spanning the stage's value grid, at the true
/// policy of `solution`.
pub fn propagate_covariance(
    problem: &ProblemInstance,
    solution: &DpSolution,
    quadrature_nodes: usize,
    covariance_nodes: usize,
) -> Result<Vec<CovarianceGrid>> {
    let horizon = problem.horizon();
    if solution.horizon() != horizon {
        return Err(Error::Precondition(format!(
            "solution has {} policies, problem horizon is {horizon}",
            solution.horizon()
        )));
    }
    let lattice = |t: usize| {
        let g = problem.grid(t);
        StateGrid::uniform(g.lo(), g.hi(), covariance_nodes)
    };
    let mut out = vec![CovarianceGrid::zeros(horizon + 1, lattice(horizon + 1)?)];
    for t in (1..=horizon).rev() {
        let next = out.last().expect("next covariance present");
        let grid = lattice(t)?;
        let quad = QuadratureRule::for_noise(problem.noise_component(t), quadrature_nodes)?;
        let policy = solution.policy(t);
        let stage = problem.stage(t);
        let data: Vec<NodeData> = with_stage_functions!(stage, |s| {
            grid.nodes()
                .iter()
                .map(|&x| node_data(s, x, policy.eval(x), &quad, solution, t))
                .collect()
        });
        let rows: Vec<HatRow> = data
            .iter()
            .map(|d| hat_row(&d.successors, quad.weights(), next.grid()))
            .collect();

        let n = grid.len();
        let m = next.grid().len();
        // B = H Gamma_{t+1}
        let mut b = vec![0.0; n * m];
        for (i, row) in rows.iter().enumerate() {
            let bi = &mut b[i * m..(i + 1) * m];
            for (off, &h) in row.weights.iter().enumerate() {
                let k = row.first + off;
                let gk = &next.values[k * m..(k + 1) * m];
                for (dst, &g) in bi.iter_mut().zip(gk) {
                    *dst += h * g;
                }
            }
        }
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            let bi = &b[i * m..(i + 1) * m];
            for j in 0..=i {
                let row = &rows[j];
                let propagated: f64 = row
                    .weights
                    .iter()
                    .zip(&bi[row.first..row.first + row.weights.len()])
                    .map(|(h, g)| h * g)
                    .sum();
                let current: f64 = data[i]
                    .centred
                    .iter()
                    .zip(&data[j].centred)
                    .map(|(a, c)| a * c)
                    .sum();
                let v = propagated + current;
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        out.push(CovarianceGrid {
            stage: t,
            grid,
            values,
        });
    }
    out.reverse();
    Ok(out)
}

/// Propagated term `E_{xi, xi'} Gamma_next(F(x, u, xi), F(x', u', xi'))`
/// by direct tensor quadrature.
pub fn propagated_term_tensor(
    problem: &ProblemInstance,
    t: usize,
    gamma_next: &CovarianceGrid,
    quad: &QuadratureRule,
    (x, u): (f64, f64),
    (x2, u2): (f64, f64),
) -> f64 {
    let stage = problem.stage(t);
    let mut total = 0.0;
    for (&xi, &w) in quad.nodes().iter().zip(quad.weights()) {
        let y = stage.dynamics(x, u, xi);
        for (&xi2, &w2) in quad.nodes().iter().zip(quad.weights()) {
            let y2 = stage.dynamics(x2, u2, xi2);
            total += w * w2 * gamma_next.eval(y, y2);
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceDecomposition {
    pub current: f64,
    pub propagated: f64,
    pub total: f64,
    /// The state or one of its successors lies off the relevant grid.
    pub extrapolated: bool,
}

/// Current-stage variance `Var_xi[f_t + V_{t+1}(F_t)]` at `(x, pi_t(x))`,
/// propagated variance `E_{xi, xi'} Gamma_{t+1}(F_t(x, .,xi), F_t(x, ., xi'))`
/// and their sum.
pub fn variance_decompose(
    problem: &ProblemInstance,
    solution: &DpSolution,
    gamma_next: &CovarianceGrid,
    t: usize,
    x: f64,
    quadrature_nodes: usize,
) -> Result<VarianceDecomposition> {
    if t == 0 || t > problem.horizon() {
        return Err(Error::Config(format!(
            "stage {t} outside 1..={}",
            problem.horizon()
        )));
    }
    if gamma_next.stage != t + 1 {
        return Err(Error::Precondition(format!(
            "need the stage-{} covariance, got stage {}",
            t + 1,
            gamma_next.stage
        )));
    }
    if !x.is_finite() {
        return Err(Error::Domain(format!("non-finite state {x}")));
    }
    let quad = QuadratureRule::for_noise(problem.noise_component(t), quadrature_nodes)?;
    let u = solution.policy(t).eval(x);
    let data = with_stage_functions!(problem.stage(t), |s| node_data(s, x, u, &quad, solution, t));
    let current: f64 = data.centred.iter().map(|c| c * c).sum();
    let propagated = propagated_term_tensor(problem, t, gamma_next, &quad, (x, u), (x, u));
    let extrapolated = !problem.grid(t).contains(x)
        || data
            .successors
            .iter()
            .any(|&y| !gamma_next.grid().contains(y));
    Ok(VarianceDecomposition {
        current,
        propagated,
        total: current + propagated,
        extrapolated,
    })
}
