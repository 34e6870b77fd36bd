//! Replicated SAA experiments: for each replication draw a fresh pool, solve
//! the SAA problem and record `sqrt(N) (V_hat_t(x) - V_t(x))` on a set of
//! `(t, x)` cells.

mod output;
mod stats;

use nalgebra::DVector;
use rayon::prelude::*;

pub use output::{
    cell_file_stem, write_errors_csv, write_histogram_csv, write_qq_csv, write_summary_csv,
};
pub use stats::{
    histogram, ks_statistic, normal_cdf, normal_quantile, qq_correlation, qq_points,
    summarize_sample, Histogram, NormalFit, SampleSummary, HISTOGRAM_BINS,
};

use crate::dp::{backward_induction, DpSolution, Expectation};
use crate::error::{Error, Result};
use crate::lqr::{riccati_backward, saa_closed_form, LqrModel, RiccatiSolution};
use crate::model::ProblemInstance;
use crate::sampling::{draw_pool, SamplePool, SeedPlan};

/// How each replication's SAA problem is solved.
#[derive(Debug, Clone)]
pub enum Engine {
    /// Grid backward induction against a quadrature reference solution.
    Grid {
        problem: ProblemInstance,
        quadrature_nodes: usize,
    },
    /// Closed-form SAA value functions of a scalar LQR model.
    LqrClosedForm { model: LqrModel },
}

impl Engine {
    pub fn horizon(&self) -> usize {
        match self {
            Engine::Grid { problem, .. } => problem.horizon(),
            Engine::LqrClosedForm { model } => model.horizon(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplicationConfig {
    pub sample_size: usize,
    pub replications: usize,
    pub stages: Vec<usize>,
    pub states: Vec<f64>,
    pub plan: SeedPlan,
    pub workers: usize,
    pub engine: Engine,
}

impl ReplicationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_size < 1 {
            return Err(Error::Config("sample size must be at least 1".into()));
        }
        if self.replications < 2 {
            return Err(Error::Config("need at least 2 replications".into()));
        }
        if self.workers < 1 {
            return Err(Error::Config("need at least 1 worker".into()));
        }
        if self.stages.is_empty() || self.states.is_empty() {
            return Err(Error::Config("no evaluation stages or states".into()));
        }
        let horizon = self.engine.horizon();
        if let Some(t) = self.stages.iter().find(|&&t| t == 0 || t > horizon) {
            return Err(Error::Config(format!(
                "evaluation stage {t} outside 1..={horizon}"
            )));
        }
        if let Some(x) = self.states.iter().find(|x| !x.is_finite()) {
            return Err(Error::Config(format!("evaluation state {x} is not finite")));
        }
        if let Engine::LqrClosedForm { model } = &self.engine {
            if model.state_dim() != 1 {
                return Err(Error::Config(
                    "closed-form engine evaluates scalar states only".into(),
                ));
            }
        }
        Ok(())
    }

    /// Cells in row order: stage-major, then state.
    pub fn cells(&self) -> Vec<(usize, f64)> {
        self.stages
            .iter()
            .flat_map(|&t| self.states.iter().map(move |&x| (t, x)))
            .collect()
    }
}

/// Scaled errors, one row per replication and one column per `(t, x)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSampleMatrix {
    pub cells: Vec<(usize, f64)>,
    pub replications: usize,
    /// Row-major `replications x cells`.
    pub values: Vec<f64>,
}

impl ErrorSampleMatrix {
    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.cells.len();
        &self.values[r * w..(r + 1) * w]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        let w = self.cells.len();
        (0..self.replications)
            .map(|r| self.values[r * w + j])
            .collect()
    }

    pub fn column_of(&self, t: usize, x: f64) -> Option<Vec<f64>> {
        self.cells
            .iter()
            .position(|&(s, y)| s == t && y == x)
            .map(|j| self.column(j))
    }
}

enum Reference {
    Grid(DpSolution),
    Lqr(RiccatiSolution),
}

fn reference(engine: &Engine) -> Result<Reference> {
    Ok(match engine {
        Engine::Grid {
            problem,
            quadrature_nodes,
        } => Reference::Grid(backward_induction(
            problem,
            Expectation::Quadrature {
                nodes: *quadrature_nodes,
            },
        )?),
        Engine::LqrClosedForm { model } => Reference::Lqr(riccati_backward(model)?),
    })
}

fn noise_of(engine: &Engine) -> &crate::model::NoiseSpec {
    match engine {
        Engine::Grid { problem, .. } => problem.noise(),
        Engine::LqrClosedForm { model } => model.noise(),
    }
}

fn replicate(
    config: &ReplicationConfig,
    reference: &Reference,
    cells: &[(usize, f64)],
    r: u64,
    row: &mut [f64],
) -> Result<()> {
    let pool = draw_pool(
        &config.plan,
        r,
        config.sample_size,
        noise_of(&config.engine),
    )?;
    let scale = (config.sample_size as f64).sqrt();
    match (&config.engine, reference) {
        (Engine::Grid { problem, .. }, Reference::Grid(truth)) => {
            let saa = backward_induction(problem, Expectation::Sample(&pool))?;
            for (dst, &(t, x)) in row.iter_mut().zip(cells) {
                *dst = scale * (saa.value(t).eval(x) - truth.value(t).eval(x));
            }
        }
        (Engine::LqrClosedForm { model }, Reference::Lqr(riccati)) => {
            let saa = saa_closed_form(model, riccati, &pool)?;
            for (dst, &(t, x)) in row.iter_mut().zip(cells) {
                *dst = scale * saa.value_error(riccati, t, &DVector::from_element(1, x));
            }
        }
        _ => unreachable!("reference built from the same engine"),
    }
    if let Some(v) = row.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "replication {r}: non-finite error {v}"
        )));
    }
    Ok(())
}

/// Runs all replications on `config.workers` threads. Row `r` depends only on
/// the seed plan and `r`, so the matrix does not depend on the worker count.
pub fn run_replications(config: &ReplicationConfig) -> Result<ErrorSampleMatrix> {
    config.validate()?;
    let reference = reference(&config.engine)?;
    let cells = config.cells();
    let width = cells.len();
    let mut values = vec![0.0; config.replications * width];
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        values
            .par_chunks_mut(width)
            .enumerate()
            .try_for_each(|(r, row)| replicate(config, &reference, &cells, r as u64, row))
    })?;
    Ok(ErrorSampleMatrix {
        cells,
        replications: config.replications,
        values,
    })
}

/// Summary of one `(t, x)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub stage: usize,
    pub state: f64,
    pub stats: SampleSummary,
}

pub fn summarize(errors: &ErrorSampleMatrix) -> Result<Vec<CellSummary>> {
    if errors.replications < 2 {
        return Err(Error::Precondition("need at least 2 replications".into()));
    }
    errors
        .cells
        .iter()
        .enumerate()
        .map(|(j, &(stage, state))| {
            Ok(CellSummary {
                stage,
                state,
                stats: summarize_sample(&errors.column(j))?,
            })
        })
        .collect()
}

/// Largest `|V_hat_grid - V_hat_closed|` over grid nodes with `|x| <= interior`,
/// across stages `1..=T` and `pools` replications of size `n` solved by both
/// engines.
pub fn engine_gap(
    model: &LqrModel,
    problem: &ProblemInstance,
    plan: &SeedPlan,
    n: usize,
    pools: usize,
    interior: f64,
) -> Result<f64> {
    if problem.horizon() != model.horizon() {
        return Err(Error::Config(
            "model and grid problem horizons differ".into(),
        ));
    }
    let riccati = riccati_backward(model)?;
    let mut worst: f64 = 0.0;
    for r in 0..pools as u64 {
        let pool: SamplePool = draw_pool(plan, r, n, model.noise())?;
        let closed = saa_closed_form(model, &riccati, &pool)?;
        let grid = backward_induction(problem, Expectation::Sample(&pool))?;
        for t in 1..=problem.horizon() {
            let v = grid.value(t);
            for (&x, &g) in v.grid().nodes().iter().zip(v.values()) {
                if x.abs() <= interior {
                    let c = closed.value(&riccati, t, &DVector::from_element(1, x));
                    worst = worst.max((g - c).abs());
                }
            }
        }
    }
    Ok(worst)
}
