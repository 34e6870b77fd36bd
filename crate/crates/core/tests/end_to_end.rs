use nalgebra::DVector;
use proptest::prelude::*;

use saa_core::dp::{backward_induction, propagate_covariance, Expectation};
use saa_core::inventory::{inventory_problem, InventoryParams};
use saa_core::lqr::{
    asym_variance_eval, asymptotic_recursion, riccati_backward, variance_decomposition, LqrModel,
};
use saa_core::mc::{run_replications, summarize, Engine, ReplicationConfig};
use saa_core::model::{NoiseComponent, NoiseSpec};
use saa_core::sampling::{draw_pool, SeedPlan};

fn short_lqr(horizon: usize) -> LqrModel {
    let noise = NoiseSpec::scalar_iid(
        NoiseComponent::symmetric_uniform(3f64.sqrt()).unwrap(),
        horizon,
    )
    .unwrap();
    LqrModel::scalar(1.0, 1.0, 1.0, 1.0, 1.0, noise).unwrap()
}

#[test]
fn grid_covariance_tracks_closed_form_law() {
    let model = short_lqr(4);
    let riccati = riccati_backward(&model).unwrap();
    let law = asymptotic_recursion(&model, &riccati).unwrap();
    let problem = model
        .to_problem(1.0, (-8.0, 8.0, 4001), (-8.0, 8.0))
        .unwrap();
    let sol = backward_induction(&problem, Expectation::Quadrature { nodes: 128 }).unwrap();
    let gammas = propagate_covariance(&problem, &sol, 128, 201).unwrap();
    for t in 1..=4 {
        for x in [0.0, 0.5, -1.5] {
            let exact = asym_variance_eval(&law, t, &DVector::from_element(1, x));
            let grid = gammas[t - 1].eval(x, x);
            assert!(
                (grid - exact).abs() < 2e-3,
                "t={t} x={x}: {grid} vs {exact}"
            );
        }
    }
}

#[test]
fn grid_replications_do_not_depend_on_workers() {
    let params = InventoryParams::stationary(1.0, 3.0, 1.0, 2.0, 1.0, 3);
    let config = |workers| ReplicationConfig {
        sample_size: 20,
        replications: 6,
        stages: vec![1, 3],
        states: vec![0.0, 1.5],
        plan: SeedPlan::new(17),
        workers,
        engine: Engine::Grid {
            problem: inventory_problem(&params, 121).unwrap(),
            quadrature_nodes: 33,
        },
    };
    let one = run_replications(&config(1)).unwrap();
    let four = run_replications(&config(4)).unwrap();
    assert_eq!(one, four);
}

#[test]
fn inventory_saa_values_are_convex_for_every_pool() {
    let params = InventoryParams::default();
    let problem = inventory_problem(&params, 241).unwrap();
    let plan = SeedPlan::new(3);
    for r in 0..5 {
        let pool = draw_pool(&plan, r, 10, problem.noise()).unwrap();
        let sol = backward_induction(&problem, Expectation::Sample(&pool)).unwrap();
        for t in 1..=params.horizon() {
            let worst = sol
                .value(t)
                .function
                .second_differences()
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            assert!(worst >= -1e-9, "pool {r} stage {t}: {worst}");
        }
    }
}

#[test]
fn last_stage_variance_matches_law() {
    let model = short_lqr(5);
    let law = asymptotic_recursion(&model, &riccati_backward(&model).unwrap()).unwrap();
    let errors = run_replications(&ReplicationConfig {
        sample_size: 500,
        replications: 4000,
        stages: vec![5],
        states: vec![1.0],
        plan: SeedPlan::new(99),
        workers: 1,
        engine: Engine::LqrClosedForm { model },
    })
    .unwrap();
    let cell = &summarize(&errors).unwrap()[0];
    // S_T + v_T = 1.8; the variance estimate has relative sd about sqrt(2/R)
    let exact = asym_variance_eval(&law, 5, &DVector::from_element(1, 1.0));
    assert!((exact - 1.8).abs() < 1e-12);
    assert!(
        (cell.stats.variance / exact - 1.0).abs() < 0.1,
        "{}",
        cell.stats.variance
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decomposition_sums_to_asymptotic_variance(
        a in -1.5f64..1.5,
        b in 0.2f64..2.0,
        q in 0.1f64..3.0,
        r in 0.1f64..3.0,
        terminal in 0.0f64..3.0,
        width in 0.1f64..3.0,
        horizon in 1usize..8,
        x in -5.0f64..5.0,
    ) {
        let noise = NoiseSpec::scalar_iid(NoiseComponent::symmetric_uniform(width).unwrap(), horizon).unwrap();
        let model = LqrModel::scalar(a, b, q, r, terminal, noise).unwrap();
        let riccati = riccati_backward(&model).unwrap();
        let law = asymptotic_recursion(&model, &riccati).unwrap();
        let xv = DVector::from_element(1, x);
        for t in 1..=horizon {
            let split = variance_decomposition(&law, &riccati, t, &xv);
            let total = asym_variance_eval(&law, t, &xv);
            prop_assert!(split.propagated >= -1e-12 && split.current >= -1e-12);
            prop_assert!((split.propagated + split.current - total).abs() <= 1e-12 * total.abs().max(1.0));
        }
    }
}
