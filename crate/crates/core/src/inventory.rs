//! Finite-horizon inventory control with backorders.
//!
//! Order `u >= 0` at unit cost `c`, demand `xi ~ U[0, xi_max]`, then pay
//! `b` per unit short and `h` per unit held: stage cost
//! `c u + b [xi - (x + u)]_+ + h [x + u - xi]_+`, next stock `x + u - xi`.

use crate::dp::{golden_section, DpSolution, Minimum};
use crate::error::{Error, Result};
use crate::model::{
    GridPolicy, GridValueFunction, NoiseComponent, NoiseSpec, ProblemInstance, StageFunctions,
    StageKind, StageModel, StateGrid, TerminalCost,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InventoryStage {
    pub order_cost: f64,
    pub backorder_cost: f64,
    pub holding_cost: f64,
}

impl StageFunctions for InventoryStage {
    #[inline]
    fn cost(&self, x: f64, u: f64, xi: f64) -> f64 {
        let y = x + u;
        self.order_cost * u
            + self.backorder_cost * (xi - y).max(0.0)
            + self.holding_cost * (y - xi).max(0.0)
    }

    #[inline]
    fn dynamics(&self, x: f64, u: f64, xi: f64) -> f64 {
        x + u - xi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InventoryParams {
    pub order_cost: Vec<f64>,
    pub backorder_cost: Vec<f64>,
    pub holding_cost: Vec<f64>,
    /// Upper end of the demand support per stage.
    pub demand_max: Vec<f64>,
    pub initial_stock: f64,
}

impl Default for InventoryParams {
    fn default() -> Self {
        Self::stationary(1.0, 3.0, 1.0, 2.0, 1.0, 5)
    }
}

impl InventoryParams {
    pub fn stationary(
        c: f64,
        b: f64,
        h: f64,
        demand_max: f64,
        initial_stock: f64,
        horizon: usize,
    ) -> Self {
        Self {
            order_cost: vec![c; horizon],
            backorder_cost: vec![b; horizon],
            holding_cost: vec![h; horizon],
            demand_max: vec![demand_max; horizon],
            initial_stock,
        }
    }

    pub fn horizon(&self) -> usize {
        self.order_cost.len()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.horizon();
        if t == 0 {
            return Err(Error::Config("inventory horizon must be at least 1".into()));
        }
        if [&self.backorder_cost, &self.holding_cost, &self.demand_max]
            .iter()
            .any(|v| v.len() != t)
        {
            return Err(Error::Config(
                "inventory parameter lists differ in length".into(),
            ));
        }
        for s in 0..t {
            let (c, b, h, d) = (
                self.order_cost[s],
                self.backorder_cost[s],
                self.holding_cost[s],
                self.demand_max[s],
            );
            if !(b > c && c > 0.0) {
                return Err(Error::Config(format!(
                    "stage {}: need backorder > order > 0, got b={b}, c={c}",
                    s + 1
                )));
            }
            if !(h >= 0.0) || !(d > 0.0) || !d.is_finite() || !h.is_finite() || !b.is_finite() {
                return Err(Error::Config(format!(
                    "stage {}: need finite h >= 0 and demand bound > 0",
                    s + 1
                )));
            }
        }
        if !self.initial_stock.is_finite() {
            return Err(Error::Config("initial stock must be finite".into()));
        }
        Ok(())
    }

    /// Total maximal demand; caps the order quantity.
    pub fn order_cap(&self) -> f64 {
        self.demand_max.iter().sum()
    }

    /// `[x_1 - sum_{s<t} xi_max_s, x_1 + sum_s xi_max_s]` for `t` in `1..=T+1`.
    pub fn state_bounds(&self, t: usize) -> (f64, f64) {
        let below: f64 = self.demand_max[..t - 1].iter().sum();
        (
            self.initial_stock - below,
            self.initial_stock + self.order_cap(),
        )
    }
}

pub fn inventory_stage_model(params: &InventoryParams, t: usize) -> Result<StageModel> {
    params.validate()?;
    if t == 0 || t > params.horizon() {
        return Err(Error::Config(format!(
            "stage {t} outside 1..={}",
            params.horizon()
        )));
    }
    StageModel::new(
        StageKind::Inventory(InventoryStage {
            order_cost: params.order_cost[t - 1],
            backorder_cost: params.backorder_cost[t - 1],
            holding_cost: params.holding_cost[t - 1],
        }),
        0.0,
        params.order_cap(),
        true,
    )
}

/// Grid problem with `nodes` nodes per stage and zero terminal cost.
pub fn inventory_problem(params: &InventoryParams, nodes: usize) -> Result<ProblemInstance> {
    params.validate()?;
    let horizon = params.horizon();
    let stages = (1..=horizon)
        .map(|t| inventory_stage_model(params, t))
        .collect::<Result<Vec<_>>>()?;
    let grids = (1..=horizon + 1)
        .map(|t| {
            let (lo, hi) = params.state_bounds(t);
            StateGrid::uniform(lo, hi, nodes)
        })
        .collect::<Result<Vec<_>>>()?;
    let noise = NoiseSpec::new(
        params
            .demand_max
            .iter()
            .map(|&d| NoiseComponent::uniform(0.0, d).map(|c| vec![c]))
            .collect::<Result<Vec<_>>>()?,
    )?;
    ProblemInstance::new(
        stages,
        TerminalCost::Zero,
        params.initial_stock,
        grids,
        noise,
    )
}

/// Stages whose policy orders the full cap at some node, i.e. where the cap
/// may have been binding.
pub fn cap_hits(params: &InventoryParams, solution: &DpSolution) -> Vec<usize> {
    let cap = params.order_cap();
    (1..=solution.horizon())
        .filter(|&t| {
            solution
                .policy(t)
                .controls()
                .iter()
                .any(|&u| u >= cap * (1.0 - 1e-9))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasestockFit {
    pub level: f64,
    pub conforming: bool,
}

/// Reads an order-up-to level off a tabulated policy and checks that the
/// policy orders up to it below and orders nothing above.
pub fn basestock_extract(policy: &GridPolicy, tolerance: f64) -> BasestockFit {
    let nodes = policy.grid().nodes();
    let controls = policy.controls();
    let ordering: Vec<usize> = (0..nodes.len())
        .filter(|&i| controls[i] > tolerance)
        .collect();
    let Some(&last) = ordering.last() else {
        return BasestockFit {
            level: policy.grid().lo(),
            conforming: true,
        };
    };
    let level = nodes[last] + controls[last];
    let prefix = ordering.len() == last + 1;
    let (lo, hi) = ordering
        .iter()
        .map(|&i| nodes[i] + controls[i])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| {
            (a.min(y), b.max(y))
        });
    BasestockFit {
        level,
        conforming: prefix && hi - lo <= tolerance,
    }
}

/// Exhaustive minimisation of the sample-average objective at `x`: a uniform
/// control grid plus every breakpoint of the piecewise-linear objective.
pub fn brute_force_inner(
    stage: &StageModel,
    v_next: &GridValueFunction,
    samples: &[f64],
    x: f64,
    control_step: f64,
) -> Result<Minimum> {
    if !(control_step > 0.0) {
        return Err(Error::Config(format!(
            "control step must be positive, got {control_step}"
        )));
    }
    if samples.is_empty() {
        return Err(Error::Config("no samples".into()));
    }
    let (lo, hi) = (stage.control_lo, stage.control_hi);
    let mut candidates = vec![lo, hi];
    let steps = ((hi - lo) / control_step).floor() as usize;
    candidates.extend((0..=steps).map(|k| lo + k as f64 * control_step));
    for &xi in samples {
        candidates.push(xi - x);
        for &g in v_next.grid().nodes() {
            candidates.push(g + xi - x);
        }
    }
    let n = samples.len() as f64;
    let objective = |u: f64| {
        samples
            .iter()
            .map(|&xi| stage.cost(x, u, xi) + v_next.eval(stage.dynamics(x, u, xi)))
            .sum::<f64>()
            / n
    };
    let mut best = Minimum {
        argmin: f64::NAN,
        value: f64::INFINITY,
    };
    for u in candidates.into_iter().filter(|u| (lo..=hi).contains(u)) {
        let v = objective(u);
        if v < best.value || (v == best.value && u < best.argmin) {
            best = Minimum {
                argmin: u,
                value: v,
            };
        }
    }
    Ok(best)
}

/// Golden-section minimiser of the same objective, for comparisons.
pub fn golden_inner(
    stage: &StageModel,
    v_next: &GridValueFunction,
    samples: &[f64],
    x: f64,
) -> Minimum {
    let n = samples.len() as f64;
    golden_section(
        |u| {
            samples
                .iter()
                .map(|&xi| stage.cost(x, u, xi) + v_next.eval(stage.dynamics(x, u, xi)))
                .sum::<f64>()
                / n
        },
        stage.control_lo,
        stage.control_hi,
        crate::dp::CONTROL_TOLERANCE,
    )
}
