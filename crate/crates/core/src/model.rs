//! Problem data model: state grids, noise specifications, stage models and
//! tabulated value functions / policies on 1-D grids.
//!
//! Tabulated functions are piecewise linear between nodes and extrapolate
//! linearly with the slope of the nearest end segment.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::inventory::InventoryStage;

/// Uniform 1-D grid of states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGrid {
    lo: f64,
    hi: f64,
    step: f64,
    inv_step: f64,
    nodes: Vec<f64>,
}

impl StateGrid {
    /// Uniform nodes from `lo` to `hi` inclusive.
    pub fn uniform(lo: f64, hi: f64, n_nodes: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::Config(format!(
                "grid bounds must be finite with lo < hi, got [{lo}, {hi}]"
            )));
        }
        if n_nodes < 2 {
            return Err(Error::Config(format!(
                "grid needs at least 2 nodes, got {n_nodes}"
            )));
        }
        let step = (hi - lo) / (n_nodes - 1) as f64;
        let mut nodes: Vec<f64> = (0..n_nodes).map(|i| lo + i as f64 * step).collect();
        nodes[n_nodes - 1] = hi;
        Ok(Self {
            lo,
            hi,
            step,
            inv_step: 1.0 / step,
            nodes,
        })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Cell index `k` and local coordinate `s` such that the interpolant at
    /// `x` is `(1 - s) v[k] + s v[k + 1]`. Outside the grid `s` leaves [0, 1]
    /// and the end cell is reused, which gives linear extrapolation.
    #[inline]
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let pos = (x - self.lo) * self.inv_step;
        let last_cell = (self.nodes.len() - 2) as f64;
        // truncation is floor on the clamped range; NaN maps to 0
        let k = pos.max(0.0).min(last_cell) as u32 as usize;
        (k, pos - k as f64)
    }

    /// Hat-function weights at `x`: the interpolant equals
    /// `w0 * v[k] + w1 * v[k + 1]`.
    #[inline]
    pub fn hat_weights(&self, x: f64) -> (usize, f64, f64) {
        let (k, s) = self.locate(x);
        (k, 1.0 - s, s)
    }
}

/// Values tabulated on a [`StateGrid`] with linear interpolation and
/// edge-slope extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: StateGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: StateGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Model(format!(
                "{} values for {} grid nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Model(format!(
                "non-finite tabulated value at node {} (x = {})",
                i,
                grid.nodes()[i]
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: StateGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &StateGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Unchecked evaluation; non-finite input propagates.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let (k, s) = self.grid.locate(x);
        let v0 = self.values[k];
        v0 + s * (self.values[k + 1] - v0)
    }

    pub fn try_eval(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Domain(format!(
                "cannot evaluate at non-finite state {x}"
            )));
        }
        Ok(self.eval(x))
    }

    /// Largest absolute slope over all cells.
    pub fn max_slope(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| ((w[1] - w[0]) / self.grid.step()).abs())
            .fold(0.0, f64::max)
    }

    /// Second differences `v[i-1] - 2 v[i] + v[i+1]` over interior nodes.
    pub fn second_differences(&self) -> Vec<f64> {
        self.values
            .windows(3)
            .map(|w| w[0] - 2.0 * w[1] + w[2])
            .collect()
    }
}

/// Tabulated value function of stage `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridValueFunction {
    pub stage: usize,
    pub function: GridFunction,
}

impl GridValueFunction {
    pub fn new(stage: usize, function: GridFunction) -> Self {
        Self { stage, function }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.function.eval(x)
    }

    pub fn grid(&self) -> &StateGrid {
        self.function.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.function.values()
    }
}

/// Tabulated policy of stage `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPolicy {
    pub stage: usize,
    pub function: GridFunction,
}

impl GridPolicy {
    pub fn new(stage: usize, function: GridFunction) -> Self {
        Self { stage, function }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.function.eval(x)
    }

    pub fn grid(&self) -> &StateGrid {
        self.function.grid()
    }

    pub fn controls(&self) -> &[f64] {
        self.function.values()
    }
}

/// Checked evaluation of a tabulated value function.
pub fn grid_eval(vf: &GridValueFunction, x: f64) -> Result<f64> {
    vf.function.try_eval(x)
}

/// Central moments of a scalar noise component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub mu4: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    /// Uniform on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
}

/// One scalar, bounded noise component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseComponent {
    kind: NoiseKind,
    moments: Moments,
}

impl NoiseComponent {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::Model(format!(
                "uniform noise needs finite lo < hi, got [{lo}, {hi}]"
            )));
        }
        let half = 0.5 * (hi - lo);
        let moments = Moments {
            mean: 0.5 * (lo + hi),
            mu2: half * half / 3.0,
            mu3: 0.0,
            mu4: half.powi(4) / 5.0,
        };
        Ok(Self {
            kind: NoiseKind::Uniform { lo, hi },
            moments,
        })
    }

    /// Uniform on `[-c, c]`.
    pub fn symmetric_uniform(c: f64) -> Result<Self> {
        Self::uniform(-c, c)
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn support(&self) -> (f64, f64) {
        match self.kind {
            NoiseKind::Uniform { lo, hi } => (lo, hi),
        }
    }

    pub fn moments(&self) -> Moments {
        self.moments
    }

    /// Inverse CDF at `p` in [0, 1).
    #[inline]
    pub fn quantile(&self, p: f64) -> f64 {
        match self.kind {
            NoiseKind::Uniform { lo, hi } => lo + (hi - lo) * p,
        }
    }
}

/// Per-stage noise: a list of independent scalar components for each stage.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    stages: Vec<Vec<NoiseComponent>>,
}

impl NoiseSpec {
    pub fn new(stages: Vec<Vec<NoiseComponent>>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::Model("noise spec has no stages".into()));
        }
        let dim = stages[0].len();
        if dim == 0 || stages.iter().any(|s| s.len() != dim) {
            return Err(Error::Model(
                "every stage needs the same positive number of noise components".into(),
            ));
        }
        Ok(Self { stages })
    }

    /// The same scalar component at every stage.
    pub fn scalar_iid(component: NoiseComponent, horizon: usize) -> Result<Self> {
        Self::new(vec![vec![component]; horizon])
    }

    /// Independent copies of `component` in each of `dim` coordinates.
    pub fn iid(component: NoiseComponent, dim: usize, horizon: usize) -> Result<Self> {
        Self::new(vec![vec![component; dim]; horizon])
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn dim(&self) -> usize {
        self.stages[0].len()
    }

    /// Components of stage `t` (1-based).
    pub fn stage(&self, t: usize) -> &[NoiseComponent] {
        &self.stages[t - 1]
    }
}

/// Cost and dynamics of one scalar stage.
pub trait StageFunctions: Send + Sync {
    fn cost(&self, x: f64, u: f64, xi: f64) -> f64;
    fn dynamics(&self, x: f64, u: f64, xi: f64) -> f64;
}

/// Scalar linear-quadratic stage: cost `q x^2 + r u^2`, dynamics `a x + b u + xi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearQuadraticStage {
    pub a: f64,
    pub b: f64,
    pub q: f64,
    pub r: f64,
}

impl StageFunctions for LinearQuadraticStage {
    #[inline]
    fn cost(&self, x: f64, u: f64, _xi: f64) -> f64 {
        self.q * x * x + self.r * u * u
    }

    #[inline]
    fn dynamics(&self, x: f64, u: f64, xi: f64) -> f64 {
        self.a * x + self.b * u + xi
    }
}

/// Closure-backed stage, mostly for experiments and tests.
pub struct FnStage<C, D> {
    pub cost: C,
    pub dynamics: D,
}

impl<C, D> StageFunctions for FnStage<C, D>
where
    C: Fn(f64, f64, f64) -> f64 + Send + Sync,
    D: Fn(f64, f64, f64) -> f64 + Send + Sync,
{
    fn cost(&self, x: f64, u: f64, xi: f64) -> f64 {
        (self.cost)(x, u, xi)
    }

    fn dynamics(&self, x: f64, u: f64, xi: f64) -> f64 {
        (self.dynamics)(x, u, xi)
    }
}

#[derive(Clone)]
pub enum StageKind {
    LinearQuadratic(LinearQuadraticStage),
    Inventory(InventoryStage),
    Custom(Arc<dyn StageFunctions>),
}

impl fmt::Debug for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StageKind::LinearQuadratic(s) => f.debug_tuple("LinearQuadratic").field(s).finish(),
            StageKind::Inventory(s) => f.debug_tuple("Inventory").field(s).finish(),
            StageKind::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Runs `$body` with `$s` bound to the concrete stage functions, so hot loops
/// are monomorphized per stage kind.
macro_rules! with_stage_functions {
    ($stage:expr, |$s:ident| $body:expr) => {
        match &$stage.kind {
            $crate::model::StageKind::LinearQuadratic(inner) => {
                let $s = inner;
                $body
            }
            $crate::model::StageKind::Inventory(inner) => {
                let $s = inner;
                $body
            }
            $crate::model::StageKind::Custom(inner) => {
                let $s = inner.as_ref();
                $body
            }
        }
    };
}
pub(crate) use with_stage_functions;

/// One stage of the control problem: cost, dynamics and control interval.
#[derive(Debug, Clone)]
pub struct StageModel {
    pub kind: StageKind,
    pub control_lo: f64,
    pub control_hi: f64,
    /// Asserts that `u` maps to a convex averaged objective, which makes
    /// golden-section search exact up to tolerance.
    pub convex: bool,
}

impl StageModel {
    pub fn new(kind: StageKind, control_lo: f64, control_hi: f64, convex: bool) -> Result<Self> {
        if !(control_lo.is_finite() && control_hi.is_finite()) || control_lo > control_hi {
            return Err(Error::Model(format!(
                "control interval must be finite with lo <= hi, got [{control_lo}, {control_hi}]"
            )));
        }
        Ok(Self {
            kind,
            control_lo,
            control_hi,
            convex,
        })
    }

    pub fn custom<S: StageFunctions + 'static>(
        functions: S,
        control_lo: f64,
        control_hi: f64,
        convex: bool,
    ) -> Result<Self> {
        Self::new(
            StageKind::Custom(Arc::new(functions)),
            control_lo,
            control_hi,
            convex,
        )
    }

    pub fn cost(&self, x: f64, u: f64, xi: f64) -> f64 {
        with_stage_functions!(self, |s| s.cost(x, u, xi))
    }

    pub fn dynamics(&self, x: f64, u: f64, xi: f64) -> f64 {
        with_stage_functions!(self, |s| s.dynamics(x, u, xi))
    }
}

#[derive(Clone)]
pub enum TerminalCost {
    Zero,
    /// `weight * x^2`
    Quadratic {
        weight: f64,
    },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl TerminalCost {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TerminalCost::Zero => 0.0,
            TerminalCost::Quadratic { weight } => weight * x * x,
            TerminalCost::Custom(f) => f(x),
        }
    }
}

impl fmt::Debug for TerminalCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TerminalCost::Zero => f.write_str("Zero"),
            TerminalCost::Quadratic { weight } => {
                f.debug_struct("Quadratic").field("weight", weight).finish()
            }
            TerminalCost::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// How far the image of a stage grid reaches beyond the next stage's grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageReport {
    pub stage: usize,
    pub image_lo: f64,
    pub image_hi: f64,
    /// Distance by which the image leaves the next grid (0 when covered).
    pub overshoot: f64,
}

/// Scalar finite-horizon stochastic control problem on state grids.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    horizon: usize,
    stages: Vec<StageModel>,
    terminal: TerminalCost,
    initial_state: f64,
    grids: Vec<StateGrid>,
    noise: NoiseSpec,
}

impl ProblemInstance {
    /// `grids` holds one grid per stage `1..=T+1`.
    pub fn new(
        stages: Vec<StageModel>,
        terminal: TerminalCost,
        initial_state: f64,
        grids: Vec<StateGrid>,
        noise: NoiseSpec,
    ) -> Result<Self> {
        let horizon = stages.len();
        if horizon == 0 {
            return Err(Error::Model("horizon must be at least 1".into()));
        }
        if grids.len() != horizon + 1 {
            return Err(Error::Model(format!(
                "expected {} state grids (stages 1..=T+1), got {}",
                horizon + 1,
                grids.len()
            )));
        }
        if noise.horizon() != horizon {
            return Err(Error::Model(format!(
                "noise spec covers {} stages, horizon is {horizon}",
                noise.horizon()
            )));
        }
        if noise.dim() != 1 {
            return Err(Error::Model(
                "grid engine supports scalar noise only".into(),
            ));
        }
        if !initial_state.is_finite() {
            return Err(Error::Model("initial state must be finite".into()));
        }
        let problem = Self {
            horizon,
            stages,
            terminal,
            initial_state,
            grids,
            noise,
        };
        problem.check_finite()?;
        Ok(problem)
    }

    /// Stage costs and dynamics must be finite on grid x controls x support corners.
    fn check_finite(&self) -> Result<()> {
        for t in 1..=self.horizon {
            let stage = self.stage(t);
            let grid = self.grid(t);
            let (a, b) = self.noise_component(t).support();
            for &x in &[grid.lo(), grid.hi()] {
                for &u in &[stage.control_lo, stage.control_hi] {
                    for &xi in &[a, b] {
                        let c = stage.cost(x, u, xi);
                        let y = stage.dynamics(x, u, xi);
                        if !c.is_finite() || !y.is_finite() {
                            return Err(Error::Model(format!(
                                "stage {t}: non-finite cost or dynamics at (x={x}, u={u}, xi={xi})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Stage model of stage `t` (1-based).
    pub fn stage(&self, t: usize) -> &StageModel {
        &self.stages[t - 1]
    }

    /// State grid of stage `t` in `1..=T+1`.
    pub fn grid(&self, t: usize) -> &StateGrid {
        &self.grids[t - 1]
    }

    pub fn terminal(&self) -> &TerminalCost {
        &self.terminal
    }

    pub fn initial_state(&self) -> f64 {
        self.initial_state
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn noise_component(&self, t: usize) -> &NoiseComponent {
        &self.noise.stage(t)[0]
    }

    /// Replaces every stage grid by a uniform grid with `n_nodes` nodes over
    /// the same bounds.
    pub fn with_node_count(&self, n_nodes: usize) -> Result<Self> {
        let grids = self
            .grids
            .iter()
            .map(|g| StateGrid::uniform(g.lo(), g.hi(), n_nodes))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grids,
            ..self.clone()
        })
    }

    /// Image of each stage grid under the dynamics, sampled at the corners of
    /// grid x control interval x noise support, compared with the next grid.
    pub fn coverage_report(&self) -> Vec<CoverageReport> {
        (1..=self.horizon)
            .map(|t| {
                let stage = self.stage(t);
                let grid = self.grid(t);
                let next = self.grid(t + 1);
                let (a, b) = self.noise_component(t).support();
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for &x in &[grid.lo(), grid.hi()] {
                    for &u in &[stage.control_lo, stage.control_hi] {
                        for &xi in &[a, b] {
                            let y = stage.dynamics(x, u, xi);
                            lo = lo.min(y);
                            hi = hi.max(y);
                        }
                    }
                }
                let overshoot = (next.lo() - lo).max(hi - next.hi()).max(0.0);
                CoverageReport {
                    stage: t,
                    image_lo: lo,
                    image_hi: hi,
                    overshoot,
                }
            })
            .collect()
    }
}

/// Terminal cost tabulated on the stage-`T+1` grid.
pub fn terminal_value(problem: &ProblemInstance) -> Result<GridValueFunction> {
    let t_end = problem.horizon() + 1;
    let grid = problem.grid(t_end).clone();
    let terminal = problem.terminal();
    let values: Vec<f64> = grid.nodes().iter().map(|&x| terminal.eval(x)).collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Model(format!(
            "terminal cost is not finite at node x = {}",
            grid.nodes()[i]
        )));
    }
    Ok(GridValueFunction::new(
        t_end,
        GridFunction::new(grid, values)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sample_vf() -> GridValueFunction {
        let grid = StateGrid::uniform(0.0, 2.0, 3).unwrap();
        GridValueFunction::new(1, GridFunction::new(grid, vec![0.0, 1.0, 4.0]).unwrap())
    }

    #[test]
    fn grid_eval_examples() {
        let vf = sample_vf();
        assert_eq!(grid_eval(&vf, 1.0).unwrap(), 1.0);
        assert_eq!(grid_eval(&vf, 0.5).unwrap(), 0.5);
        assert_eq!(grid_eval(&vf, 3.0).unwrap(), 7.0);
        // left extrapolation uses the first segment's slope
        assert_eq!(grid_eval(&vf, -1.0).unwrap(), -1.0);
    }

    #[test]
    fn grid_eval_rejects_non_finite() {
        let vf = sample_vf();
        assert!(matches!(grid_eval(&vf, f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(
            grid_eval(&vf, f64::INFINITY),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn build_grid_examples() {
        let g = StateGrid::uniform(-1.0, 1.0, 3).unwrap();
        assert_eq!(g.nodes(), &[-1.0, 0.0, 1.0]);
        let g = StateGrid::uniform(0.0, 10.0, 101).unwrap();
        assert_abs_diff_eq!(g.step(), 0.1, epsilon = 1e-15);
        let g = StateGrid::uniform(-8.0, 8.0, 1601).unwrap();
        assert_abs_diff_eq!(g.step(), 0.01, epsilon = 1e-15);
        assert_eq!(*g.nodes().last().unwrap(), 8.0);
    }

    #[test]
    fn build_grid_errors() {
        assert!(matches!(
            StateGrid::uniform(1.0, 1.0, 3),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            StateGrid::uniform(2.0, 1.0, 3),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            StateGrid::uniform(0.0, 1.0, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn grid_function_rejects_bad_tables() {
        let grid = StateGrid::uniform(0.0, 1.0, 2).unwrap();
        assert!(GridFunction::new(grid.clone(), vec![0.0]).is_err());
        assert!(GridFunction::new(grid, vec![0.0, f64::NAN]).is_err());
    }

    fn lq_problem(n_nodes: usize) -> ProblemInstance {
        let stage = StageModel::new(
            StageKind::LinearQuadratic(LinearQuadraticStage {
                a: 1.0,
                b: 1.0,
                q: 1.0,
                r: 1.0,
            }),
            -5.0,
            5.0,
            true,
        )
        .unwrap();
        let grid = StateGrid::uniform(-3.0, 3.0, n_nodes).unwrap();
        let noise =
            NoiseSpec::scalar_iid(NoiseComponent::symmetric_uniform(1.0).unwrap(), 1).unwrap();
        ProblemInstance::new(
            vec![stage],
            TerminalCost::Quadratic { weight: 1.0 },
            0.0,
            vec![grid.clone(), grid],
            noise,
        )
        .unwrap()
    }

    #[test]
    fn terminal_value_examples() {
        let problem = lq_problem(7);
        let vf = terminal_value(&problem).unwrap();
        assert_eq!(vf.stage, 2);
        assert_eq!(vf.eval(2.0), 4.0);
        assert_eq!(vf.eval(0.0), 0.0);
        assert_eq!(vf.eval(-3.0), 9.0);
    }

    #[test]
    fn terminal_value_rejects_non_finite_cost() {
        let problem = lq_problem(5);
        let bad = ProblemInstance {
            terminal: TerminalCost::Custom(Arc::new(
                |x: f64| if x > 2.0 { f64::INFINITY } else { x },
            )),
            ..problem
        };
        assert!(matches!(terminal_value(&bad), Err(Error::Model(_))));
    }

    #[test]
    fn quadratic_interpolation_error_bound() {
        // |f''| h^2 / 8 with f = x^2, f'' = 2
        let problem = lq_problem(61);
        let vf = terminal_value(&problem).unwrap();
        let h = problem.grid(2).step();
        let bound = 2.0 * h * h / 8.0;
        let mut worst: f64 = 0.0;
        for i in 0..6000 {
            let x = -3.0 + 6.0 * (i as f64 + 0.37) / 6000.0;
            worst = worst.max((vf.eval(x) - x * x).abs());
        }
        assert!(
            worst <= bound * (1.0 + 1e-9),
            "worst {worst} > bound {bound}"
        );
        assert!(worst > 0.9 * bound);
    }

    #[test]
    fn problem_validation() {
        let problem = lq_problem(5);
        assert!(ProblemInstance::new(
            vec![],
            TerminalCost::Zero,
            0.0,
            vec![problem.grid(1).clone()],
            problem.noise().clone()
        )
        .is_err());
        assert!(ProblemInstance::new(
            vec![problem.stage(1).clone()],
            TerminalCost::Zero,
            0.0,
            vec![problem.grid(1).clone()],
            problem.noise().clone()
        )
        .is_err());
    }

    #[test]
    fn coverage_report_measures_overshoot() {
        let problem = lq_problem(5);
        let report = problem.coverage_report();
        // x + u + xi reaches 3 + 5 + 1 = 9 against a grid ending at 3
        assert_abs_diff_eq!(report[0].image_hi, 9.0);
        assert_abs_diff_eq!(report[0].overshoot, 6.0);
    }

    #[test]
    fn uniform_moments() {
        let c = 3f64.sqrt();
        let m = NoiseComponent::symmetric_uniform(c).unwrap().moments();
        assert_abs_diff_eq!(m.mean, 0.0);
        assert_abs_diff_eq!(m.mu2, 1.0, epsilon = 1e-15);
        assert_eq!(m.mu3, 0.0);
        assert_abs_diff_eq!(m.mu4, 9.0 / 5.0, epsilon = 1e-14);
        assert!(NoiseComponent::uniform(1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn affine_data_is_reproduced_everywhere(
            slope in -10.0f64..10.0,
            intercept in -10.0f64..10.0,
            n in 2usize..40,
            x in -50.0f64..50.0,
        ) {
            let grid = StateGrid::uniform(-3.0, 7.0, n).unwrap();
            let f = GridFunction::from_fn(grid, |x| slope * x + intercept).unwrap();
            let exact = slope * x + intercept;
            prop_assert!((f.eval(x) - exact).abs() <= 1e-9 * (1.0 + exact.abs()));
        }

        #[test]
        fn eval_is_lipschitz_with_max_slope(
            values in proptest::collection::vec(-100.0f64..100.0, 2..30),
            x in -20.0f64..20.0,
            y in -20.0f64..20.0,
        ) {
            let grid = StateGrid::uniform(-5.0, 5.0, values.len()).unwrap();
            let f = GridFunction::new(grid, values).unwrap();
            let l = f.max_slope();
            prop_assert!((f.eval(x) - f.eval(y)).abs() <= l * (x - y).abs() * (1.0 + 1e-12) + 1e-9);
        }
    }
}
