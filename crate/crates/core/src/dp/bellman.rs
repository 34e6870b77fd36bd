use rayon::prelude::*;

use super::golden::{golden_section, Minimum};
use super::quadrature::QuadratureRule;
use crate::error::{Error, Result};
use crate::model::{
    terminal_value, with_stage_functions, GridFunction, GridPolicy, GridValueFunction,
    ProblemInstance, StageFunctions, StageModel, StateGrid,
};
use crate::sampling::SamplePool;

/// Width of the final golden-section bracket in control space.
pub const CONTROL_TOLERANCE: f64 = 1e-10;

/// Nodes per sequential run. Inside a run each search starts from a bracket
/// around the control extrapolated from the two preceding nodes.
const WARM_RUN: usize = 64;
const WARM_FLOOR: f64 = 1e-6;
const WARM_GROWTH: f64 = 8.0;

/// Output of one Bellman application.
#[derive(Debug, Clone)]
pub struct StageSolution {
    pub value: GridValueFunction,
    pub policy: GridPolicy,
    /// Noise points whose successor state left the next grid, counted at the
    /// optimal control of every node.
    pub extrapolations: u64,
}

/// How the stage expectation is taken.
#[derive(Debug, Clone, Copy)]
pub enum Expectation<'a> {
    /// Gauss-Legendre rule with the given node count on each stage's support.
    Quadrature { nodes: usize },
    /// Empirical average over the pool's samples.
    Sample(&'a SamplePool),
}

enum Weights<'a> {
    Equal,
    Given(&'a [f64]),
}

/// `(T V_next)(x) = min_u E[f(x, u, xi) + V_next(F(x, u, xi))]` at every node,
/// with the expectation given by `quad`.
pub fn bellman_true(
    v_next: &GridValueFunction,
    stage: &StageModel,
    quad: &QuadratureRule,
    grid: &StateGrid,
) -> Result<StageSolution> {
    apply(
        v_next,
        stage,
        quad.nodes(),
        Weights::Given(quad.weights()),
        grid,
    )
}

/// SAA counterpart of [`bellman_true`]: the expectation is the average over
/// `samples`.
pub fn bellman_saa(
    v_next: &GridValueFunction,
    stage: &StageModel,
    samples: &[f64],
    grid: &StateGrid,
) -> Result<StageSolution> {
    if samples.is_empty() {
        return Err(Error::Config(
            "SAA operator needs at least one sample".into(),
        ));
    }
    apply(v_next, stage, samples, Weights::Equal, grid)
}

fn apply(
    v_next: &GridValueFunction,
    stage: &StageModel,
    points: &[f64],
    weights: Weights<'_>,
    grid: &StateGrid,
) -> Result<StageSolution> {
    if v_next.stage < 2 {
        return Err(Error::Precondition(format!(
            "next-stage value function must belong to a stage >= 2, got {}",
            v_next.stage
        )));
    }
    if !stage.convex {
        return Err(Error::Precondition(
            "golden-section minimization requires a stage flagged convex".into(),
        ));
    }
    let t = v_next.stage - 1;
    let nodes = grid.nodes();
    let results: Vec<(f64, f64, u64)> = with_stage_functions!(stage, |s| {
        nodes
            .par_chunks(WARM_RUN)
            .flat_map_iter(|run| {
                let mut history = Warm::default();
                run.iter()
                    .map(|&x| {
                        let hint = history.hint(stage);
                        let r = solve_node(s, &v_next.function, x, points, &weights, stage, hint);
                        history.push(r.1);
                        r
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    });

    let mut values = Vec::with_capacity(nodes.len());
    let mut controls = Vec::with_capacity(nodes.len());
    let mut extrapolations = 0;
    for (&x, (v, u, e)) in nodes.iter().zip(results) {
        if !v.is_finite() {
            return Err(Error::Model(format!(
                "stage {t}: non-finite objective at node x = {x}"
            )));
        }
        values.push(v);
        controls.push(u);
        extrapolations += e;
    }
    Ok(StageSolution {
        value: GridValueFunction::new(t, GridFunction::new(grid.clone(), values)?),
        policy: GridPolicy::new(t, GridFunction::new(grid.clone(), controls)?),
        extrapolations,
    })
}

#[inline]
fn objective<S: StageFunctions + ?Sized>(
    s: &S,
    v_next: &GridFunction,
    x: f64,
    u: f64,
    points: &[f64],
    weights: &Weights<'_>,
) -> f64 {
    let term = |xi: f64| s.cost(x, u, xi) + v_next.eval(s.dynamics(x, u, xi));
    match weights {
        Weights::Equal => lane_sum(points, term) / points.len() as f64,
        Weights::Given(w) => points
            .iter()
            .zip(w.iter())
            .map(|(&xi, &wi)| wi * term(xi))
            .sum(),
    }
}

/// `sum f(p)` over four interleaved accumulators, so the additions do not
/// form one serial dependency chain.
#[inline(always)]
fn lane_sum(points: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut acc = [0.0; 4];
    let mut quads = points.chunks_exact(4);
    for q in &mut quads {
        acc[0] += f(q[0]);
        acc[1] += f(q[1]);
        acc[2] += f(q[2]);
        acc[3] += f(q[3]);
    }
    for (a, &p) in acc.iter_mut().zip(quads.remainder()) {
        *a += f(p);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

/// Last two controls of a run and the error of the last extrapolation.
#[derive(Default)]
struct Warm {
    last: Option<f64>,
    before: Option<f64>,
    miss: f64,
}

impl Warm {
    fn predict(&self) -> Option<f64> {
        Some(2.0 * self.last? - self.before?)
    }

    fn hint(&self, stage: &StageModel) -> Option<(f64, f64)> {
        let width = stage.control_hi - stage.control_lo;
        self.predict()
            .map(|c| (c, (4.0 * self.miss).max(WARM_FLOOR * width)))
    }

    fn push(&mut self, u: f64) {
        if let Some(p) = self.predict() {
            self.miss = (u - p).abs();
        }
        self.before = self.last;
        self.last = Some(u);
    }
}

/// Golden section on `[lo, hi]`, first tried on `center +- half` with the half
/// width growing until the minimizer lies strictly inside. For a convex
/// objective an interior minimizer of a sub-bracket is a global one.
fn minimize(f: impl Fn(f64) -> f64, lo: f64, hi: f64, hint: Option<(f64, f64)>) -> Minimum {
    if let Some((center, mut half)) = hint {
        while center.is_finite() {
            let (a, b) = ((center - half).max(lo), (center + half).min(hi));
            if a <= lo && b >= hi {
                break;
            }
            let m = golden_section(&f, a, b, CONTROL_TOLERANCE);
            let pinned = (a > lo && m.argmin - a <= CONTROL_TOLERANCE)
                || (b < hi && b - m.argmin <= CONTROL_TOLERANCE);
            if !pinned && !m.value.is_nan() {
                return m;
            }
            half *= WARM_GROWTH;
        }
    }
    golden_section(f, lo, hi, CONTROL_TOLERANCE)
}

fn solve_node<S: StageFunctions + ?Sized>(
    s: &S,
    v_next: &GridFunction,
    x: f64,
    points: &[f64],
    weights: &Weights<'_>,
    stage: &StageModel,
    hint: Option<(f64, f64)>,
) -> (f64, f64, u64) {
    let best = minimize(
        |u| objective(s, v_next, x, u, points, weights),
        stage.control_lo,
        stage.control_hi,
        hint,
    );
    let grid = v_next.grid();
    let outside = points
        .iter()
        .filter(|&&xi| !grid.contains(s.dynamics(x, best.argmin, xi)))
        .count() as u64;
    (best.value, best.argmin, outside)
}

/// Value functions `V_1..V_{T+1}` and policies `pi_1..pi_T` of one backward pass.
#[derive(Debug, Clone)]
pub struct DpSolution {
    values: Vec<GridValueFunction>,
    policies: Vec<GridPolicy>,
    extrapolations: Vec<u64>,
}

impl DpSolution {
    pub fn horizon(&self) -> usize {
        self.policies.len()
    }

    /// Value function of stage `t` in `1..=T+1`.
    pub fn value(&self, t: usize) -> &GridValueFunction {
        &self.values[t - 1]
    }

    /// Policy of stage `t` in `1..=T`.
    pub fn policy(&self, t: usize) -> &GridPolicy {
        &self.policies[t - 1]
    }

    /// Extrapolated successor evaluations at the optimal controls of stage `t`.
    pub fn extrapolations(&self, t: usize) -> u64 {
        self.extrapolations[t - 1]
    }

    pub fn total_extrapolations(&self) -> u64 {
        self.extrapolations.iter().sum()
    }
}

/// Runs the true or SAA recursion from the terminal cost back to stage 1.
pub fn backward_induction(
    problem: &ProblemInstance,
    expectation: Expectation<'_>,
) -> Result<DpSolution> {
    let horizon = problem.horizon();
    if let Expectation::Sample(pool) = expectation {
        if pool.horizon() != horizon || pool.dim() != 1 {
            return Err(Error::Config(format!(
                "sample pool has {} stages of dimension {}, problem needs {horizon} scalar stages",
                pool.horizon(),
                pool.dim()
            )));
        }
    }
    let mut values = vec![terminal_value(problem)?];
    let mut policies = Vec::with_capacity(horizon);
    let mut extrapolations = Vec::with_capacity(horizon);
    for t in (1..=horizon).rev() {
        let v_next = values.last().expect("terminal value present");
        let stage = problem.stage(t);
        let grid = problem.grid(t);
        let sol = match expectation {
            Expectation::Quadrature { nodes } => {
                let quad = QuadratureRule::for_noise(problem.noise_component(t), nodes)?;
                bellman_true(v_next, stage, &quad, grid)?
            }
            Expectation::Sample(pool) => bellman_saa(v_next, stage, pool.stage(t), grid)?,
        };
        values.push(sol.value);
        policies.push(sol.policy);
        extrapolations.push(sol.extrapolations);
    }
    values.reverse();
    policies.reverse();
    extrapolations.reverse();
    Ok(DpSolution {
        values,
        policies,
        extrapolations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        FnStage, LinearQuadraticStage, NoiseComponent, NoiseSpec, StageKind, TerminalCost,
    };
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn lq_stage() -> StageModel {
        StageModel::new(
            StageKind::LinearQuadratic(LinearQuadraticStage {
                a: 1.0,
                b: 1.0,
                q: 1.0,
                r: 1.0,
            }),
            -8.0,
            8.0,
            true,
        )
        .unwrap()
    }

    fn grid() -> StateGrid {
        StateGrid::uniform(-8.0, 8.0, 1601).unwrap()
    }

    fn terminal_sq(grid: &StateGrid, stage: usize) -> GridValueFunction {
        GridValueFunction::new(
            stage,
            GridFunction::from_fn(grid.clone(), |x| x * x).unwrap(),
        )
    }

    fn constant(grid: &StateGrid, stage: usize, c: f64) -> GridValueFunction {
        GridValueFunction::new(stage, GridFunction::from_fn(grid.clone(), |_| c).unwrap())
    }

    #[test]
    fn last_lqr_stage_matches_riccati_value() {
        // P_T = 1.5, q_T = E[xi^2] P_{T+1} = 1  =>  V_T(1) = 2.5
        let g = grid();
        let quad = QuadratureRule::gauss_legendre(64, -3f64.sqrt(), 3f64.sqrt()).unwrap();
        let sol = bellman_true(&terminal_sq(&g, 21), &lq_stage(), &quad, &g).unwrap();
        assert_eq!(sol.value.stage, 20);
        let x1 = g
            .nodes()
            .iter()
            .position(|&x| (x - 1.0).abs() < 1e-9)
            .unwrap();
        assert_abs_diff_eq!(sol.value.values()[x1], 2.5, epsilon = 1e-4);
        assert_abs_diff_eq!(sol.policy.controls()[x1], -0.5, epsilon = 1e-4);
    }

    #[test]
    fn zero_continuation_with_control_cost() {
        let g = StateGrid::uniform(-2.0, 2.0, 9).unwrap();
        let stage = StageModel::custom(
            FnStage {
                cost: |_x: f64, u: f64, _xi: f64| u * u,
                dynamics: |x: f64, u: f64, xi: f64| x + u + xi,
            },
            -1.0,
            3.0,
            true,
        )
        .unwrap();
        let quad = QuadratureRule::gauss_legendre(8, -1.0, 1.0).unwrap();
        let sol = bellman_true(&constant(&g, 2, 0.0), &stage, &quad, &g).unwrap();
        for (&v, &u) in sol.value.values().iter().zip(sol.policy.controls()) {
            assert!(v.abs() < 1e-18);
            assert!(u.abs() < 1e-9);
        }
    }

    #[test]
    fn translation_identity() {
        let g = StateGrid::uniform(-4.0, 4.0, 81).unwrap();
        let quad = QuadratureRule::gauss_legendre(16, -1.0, 1.0).unwrap();
        let base = bellman_true(&terminal_sq(&g, 3), &lq_stage(), &quad, &g).unwrap();
        let shifted_next = GridValueFunction::new(
            3,
            GridFunction::from_fn(g.clone(), |x| x * x + 7.5).unwrap(),
        );
        let shifted = bellman_true(&shifted_next, &lq_stage(), &quad, &g).unwrap();
        for (a, b) in base.value.values().iter().zip(shifted.value.values()) {
            assert_abs_diff_eq!(b - a, 7.5, epsilon = 1e-9);
        }
        let c0 = bellman_true(&constant(&g, 3, 0.0), &lq_stage(), &quad, &g).unwrap();
        let c1 = bellman_true(&constant(&g, 3, 2.0), &lq_stage(), &quad, &g).unwrap();
        for (a, b) in c0.value.values().iter().zip(c1.value.values()) {
            assert_abs_diff_eq!(b - a, 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn equal_samples_collapse_to_dirac_rule() {
        let g = StateGrid::uniform(-4.0, 4.0, 41).unwrap();
        let v = terminal_sq(&g, 2);
        let saa = bellman_saa(&v, &lq_stage(), &[0.4; 7], &g).unwrap();
        let dirac = bellman_true(&v, &lq_stage(), &QuadratureRule::dirac(0.4), &g).unwrap();
        for (a, b) in saa.value.values().iter().zip(dirac.value.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn warm_started_nodes_match_full_bracket_search() {
        let g = StateGrid::uniform(-4.0, 4.0, 401).unwrap();
        let kinked = StageModel::custom(
            FnStage {
                cost: |x: f64, u: f64, xi: f64| {
                    u + 3.0 * (xi - x - u).max(0.0) + (x + u - xi).max(0.0)
                },
                dynamics: |x: f64, u: f64, xi: f64| x + u - xi,
            },
            0.0,
            6.0,
            true,
        )
        .unwrap();
        let samples: Vec<f64> = (0..50).map(|i| ((i * 37) % 50) as f64 / 25.0).collect();
        let v = GridValueFunction::new(3, GridFunction::from_fn(g.clone(), |x| x.abs()).unwrap());
        for stage in [lq_stage(), kinked] {
            let sol = bellman_saa(&v, &stage, &samples, &g).unwrap();
            with_stage_functions!(&stage, |s| {
                for (i, &x) in g.nodes().iter().enumerate() {
                    let cold = golden_section(
                        |u| objective(s, &v.function, x, u, &samples, &Weights::Equal),
                        stage.control_lo,
                        stage.control_hi,
                        CONTROL_TOLERANCE,
                    );
                    assert_abs_diff_eq!(sol.value.values()[i], cold.value, epsilon = 1e-8);
                }
            });
        }
    }

    #[test]
    fn single_zero_sample_matches_deterministic_lqr_step() {
        // one sample at 0: min_u x^2 + u^2 + (x + u)^2 = 1.5 x^2
        let g = grid();
        let sol = bellman_saa(&terminal_sq(&g, 2), &lq_stage(), &[0.0], &g).unwrap();
        for (&x, &v) in g.nodes().iter().zip(sol.value.values()).step_by(37) {
            assert_abs_diff_eq!(v, 1.5 * x * x, epsilon = 1e-4);
        }
    }

    #[test]
    fn rejects_unflagged_stage_and_bad_stage_index() {
        let g = StateGrid::uniform(-1.0, 1.0, 5).unwrap();
        let mut stage = lq_stage();
        stage.convex = false;
        let quad = QuadratureRule::dirac(0.0);
        assert!(matches!(
            bellman_true(&terminal_sq(&g, 2), &stage, &quad, &g),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            bellman_true(&terminal_sq(&g, 1), &lq_stage(), &quad, &g),
            Err(Error::Precondition(_))
        ));
        assert!(bellman_saa(&terminal_sq(&g, 2), &lq_stage(), &[], &g).is_err());
    }

    #[test]
    fn non_finite_objective_is_a_model_error() {
        let g = StateGrid::uniform(-1.0, 1.0, 5).unwrap();
        let stage = StageModel::custom(
            FnStage {
                cost: |x: f64, _u: f64, _xi: f64| if x > 0.5 { f64::NAN } else { 0.0 },
                dynamics: |x: f64, u: f64, xi: f64| x + u + xi,
            },
            -1.0,
            1.0,
            true,
        )
        .unwrap();
        let err = bellman_saa(&terminal_sq(&g, 2), &stage, &[0.0], &g).unwrap_err();
        assert!(matches!(err, Error::Model(_)));
    }

    fn small_lq_problem(horizon: usize) -> ProblemInstance {
        let g = StateGrid::uniform(-6.0, 6.0, 241).unwrap();
        let noise = NoiseSpec::scalar_iid(
            NoiseComponent::symmetric_uniform(3f64.sqrt()).unwrap(),
            horizon,
        )
        .unwrap();
        ProblemInstance::new(
            vec![lq_stage(); horizon],
            TerminalCost::Quadratic { weight: 1.0 },
            1.0,
            vec![g; horizon + 1],
            noise,
        )
        .unwrap()
    }

    #[test]
    fn single_stage_induction_is_one_bellman_step() {
        let problem = small_lq_problem(1);
        let sol = backward_induction(&problem, Expectation::Quadrature { nodes: 16 }).unwrap();
        let quad = QuadratureRule::for_noise(problem.noise_component(1), 16).unwrap();
        let direct = bellman_true(
            &terminal_value(&problem).unwrap(),
            problem.stage(1),
            &quad,
            problem.grid(1),
        )
        .unwrap();
        assert_eq!(sol.value(1).values(), direct.value.values());
        assert_eq!(sol.policy(1).controls(), direct.policy.controls());
        assert_eq!(sol.horizon(), 1);
    }

    #[test]
    fn sample_pool_shape_is_checked() {
        let problem = small_lq_problem(2);
        let pool = SamplePool::from_scalar_samples(0, vec![vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            backward_induction(&problem, Expectation::Sample(&pool)),
            Err(Error::Config(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn bellman_is_monotone(
            curvature in 0.0f64..2.0,
            lift in 0.0f64..3.0,
            samples in proptest::collection::vec(-1.0f64..1.0, 1..6),
        ) {
            // V <= W nodewise with both convex, so golden section stays exact
            let g = StateGrid::uniform(-2.0, 2.0, 21).unwrap();
            let low = terminal_sq(&g, 2);
            let high = GridValueFunction::new(
                2,
                GridFunction::from_fn(g.clone(), |x| (1.0 + curvature) * x * x + lift).unwrap(),
            );
            let a = bellman_saa(&low, &lq_stage(), &samples, &g).unwrap();
            let b = bellman_saa(&high, &lq_stage(), &samples, &g).unwrap();
            for (va, vb) in a.value.values().iter().zip(b.value.values()) {
                prop_assert!(*va <= vb + 1e-8);
            }
        }
    }
}
