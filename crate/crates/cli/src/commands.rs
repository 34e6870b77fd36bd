//! The four subcommands. Each writes its CSV files into the output directory
//! and returns their paths.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use saa_core::dp::{
    backward_induction, optimal_value_variance, propagate_covariance, variance_decompose,
    CovarianceGrid, DpSolution, Expectation,
};
use saa_core::inventory::cap_hits;
use saa_core::lqr::{
    asym_variance_eval, asymptotic_recursion, riccati_backward, variance_decomposition,
    AsymptoticLaw, LqrModel, RiccatiSolution,
};
use saa_core::mc::{
    cell_file_stem, run_replications, summarize, write_errors_csv, write_histogram_csv,
    write_qq_csv, write_summary_csv, Engine, ReplicationConfig,
};
use saa_core::sampling::SeedPlan;

use crate::config::{EngineKind, Instance, RunConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    LqrAnalytic,
    Simulate,
    Covariance,
    OptimalValue,
}

/// Runs `command` on `config.mc.workers` threads.
pub fn run(command: Command, config: &RunConfig) -> Result<Vec<PathBuf>> {
    let instance = config.instance()?;
    let out = &config.output.directory;
    fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.clone(),
        source,
    })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.mc.workers)
        .build()
        .map_err(|e| {
            CliError::Config(format!("cannot start {} workers: {e}", config.mc.workers))
        })?;
    pool.install(|| match command {
        Command::LqrAnalytic => cmd_lqr_analytic(config, &instance),
        Command::Simulate => cmd_simulate(config, &instance),
        Command::Covariance => cmd_covariance(config, &instance),
        Command::OptimalValue => cmd_optimal_value(config, &instance),
    })
}

struct Csv {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Csv {
    fn create(dir: &Path, name: &str, header: &str) -> Result<Self> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        let mut csv = Csv {
            path,
            out: BufWriter::new(file),
        };
        csv.row(format_args!("{header}"))?;
        Ok(csv)
    }

    fn row(&mut self, line: std::fmt::Arguments<'_>) -> Result<()> {
        writeln!(self.out, "{line}").map_err(|source| self.io(source))
    }

    fn io(&self, source: std::io::Error) -> CliError {
        CliError::Io {
            path: self.path.clone(),
            source,
        }
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.out.flush().map_err(|source| self.io(source))?;
        Ok(self.path)
    }
}

/// Writes one file with a writer from `saa_core::mc`.
fn emit(
    dir: &Path,
    name: &str,
    write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<PathBuf> {
    let path = dir.join(name);
    let io = |source| CliError::Io {
        path: path.clone(),
        source,
    };
    let mut out = BufWriter::new(File::create(&path).map_err(io)?);
    write(&mut out).and_then(|_| out.flush()).map_err(io)?;
    Ok(path)
}

fn lqr_oracle(model: &LqrModel) -> Result<(RiccatiSolution, AsymptoticLaw)> {
    let riccati = riccati_backward(model)?;
    let law = asymptotic_recursion(model, &riccati)?;
    Ok((riccati, law))
}

fn scalar(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

/// True backward induction with the configured quadrature, warning on stderr
/// when the solution leans on extrapolation or a binding order cap.
fn true_solution(config: &RunConfig, instance: &Instance) -> Result<DpSolution> {
    let sol = backward_induction(
        instance.problem(),
        Expectation::Quadrature {
            nodes: config.quadrature.nodes,
        },
    )?;
    let outside = sol.total_extrapolations();
    if outside > 0 {
        eprintln!("warning: {outside} successor evaluations fell outside the state grids");
    }
    if let Instance::Inventory { params, .. } = instance {
        for t in cap_hits(params, &sol) {
            eprintln!(
                "warning: stage {t} policy orders the full cap {}",
                params.order_cap()
            );
        }
    }
    Ok(sol)
}

fn covariances(
    config: &RunConfig,
    instance: &Instance,
    sol: &DpSolution,
) -> Result<Vec<CovarianceGrid>> {
    Ok(propagate_covariance(
        instance.problem(),
        sol,
        config.quadrature.nodes,
        config.grids.covariance_nodes,
    )?)
}

pub fn cmd_lqr_analytic(config: &RunConfig, instance: &Instance) -> Result<Vec<PathBuf>> {
    let Instance::Lqr { model, .. } = instance else {
        return Err(CliError::Config("lqr-analytic needs an lqr problem".into()));
    };
    let (riccati, law) = lqr_oracle(model)?;
    let dir = &config.output.directory;
    let horizon = model.horizon();

    let mut ric = Csv::create(dir, "riccati.csv", "t,P,K,M,q")?;
    for t in 1..=horizon {
        ric.row(format_args!(
            "{t},{},{},{},{}",
            riccati.p(t)[(0, 0)],
            riccati.gain(t)[(0, 0)],
            riccati.closed_loop(t)[(0, 0)],
            riccati.q(t)
        ))?;
    }
    let mut asym = Csv::create(dir, "asymlaw.csv", "t,S,c,v")?;
    for t in 1..=horizon {
        asym.row(format_args!(
            "{t},{},{},{}",
            law.s(t)[(0, 0)],
            law.c(t)[0],
            law.v(t)
        ))?;
    }
    let mut curves = Csv::create(
        dir,
        "variance_curves.csv",
        "t,x,sigma2_asym,sigma2_prop,sigma2_curr",
    )?;
    for t in 1..=horizon {
        for &x in &config.output.curve_states {
            let split = variance_decomposition(&law, &riccati, t, &scalar(x));
            let total = asym_variance_eval(&law, t, &scalar(x));
            curves.row(format_args!(
                "{t},{x},{total},{},{}",
                split.propagated, split.current
            ))?;
        }
    }
    Ok(vec![ric.finish()?, asym.finish()?, curves.finish()?])
}

pub fn cmd_simulate(config: &RunConfig, instance: &Instance) -> Result<Vec<PathBuf>> {
    let engine = match (config.engine(), instance) {
        (EngineKind::ClosedForm, Instance::Lqr { model, .. }) => Engine::LqrClosedForm {
            model: model.clone(),
        },
        (EngineKind::ClosedForm, _) => {
            return Err(CliError::Config(
                "the closed-form engine needs an lqr problem".into(),
            ))
        }
        (EngineKind::Grid, _) => Engine::Grid {
            problem: instance.problem().clone(),
            quadrature_nodes: config.quadrature.nodes,
        },
    };
    let mc = &config.mc;
    let errors = run_replications(&ReplicationConfig {
        sample_size: mc.sample_size,
        replications: mc.replications,
        stages: mc.stages.clone(),
        states: mc.states.clone(),
        plan: SeedPlan::new(mc.seed),
        workers: mc.workers,
        engine,
    })?;
    let cells = summarize(&errors)?;
    let dir = &config.output.directory;

    let mut written = vec![
        emit(dir, "errors.csv", |w| write_errors_csv(&errors, w))?,
        emit(dir, "summary.csv", |w| write_summary_csv(&cells, w))?,
    ];
    for (j, cell) in cells.iter().enumerate() {
        let stem = cell_file_stem(cell.stage, cell.state);
        written.push(emit(dir, &format!("hist_{stem}.csv"), |w| {
            write_histogram_csv(&cell.stats, w)
        })?);
        let column = errors.column(j);
        written.push(emit(dir, &format!("qq_{stem}.csv"), |w| {
            write_qq_csv(&column, &cell.stats, w)
        })?);
    }

    let analytic: Box<dyn Fn(usize, f64) -> f64> = match instance {
        Instance::Lqr { model, .. } => {
            let (_, law) = lqr_oracle(model)?;
            Box::new(move |t, x| asym_variance_eval(&law, t, &scalar(x)))
        }
        Instance::Inventory { .. } => {
            let sol = true_solution(config, instance)?;
            let gammas = covariances(config, instance, &sol)?;
            Box::new(move |t, x| gammas[t - 1].eval(x, x))
        }
    };
    let mut compare = Csv::create(
        dir,
        "compare.csv",
        "t,x,empirical_variance,analytic_variance,ratio",
    )?;
    for cell in &cells {
        let a = analytic(cell.stage, cell.state);
        let e = cell.stats.variance;
        compare.row(format_args!(
            "{},{},{e},{a},{}",
            cell.stage,
            cell.state,
            e / a
        ))?;
    }
    written.push(compare.finish()?);
    Ok(written)
}

pub fn cmd_covariance(config: &RunConfig, instance: &Instance) -> Result<Vec<PathBuf>> {
    let sol = true_solution(config, instance)?;
    let gammas = covariances(config, instance, &sol)?;
    let dir = &config.output.directory;
    let mut written = Vec::with_capacity(gammas.len() + 1);
    for g in &gammas {
        let mut csv = Csv::create(
            dir,
            &format!("gamma_t{}.csv", g.stage),
            "node_i,node_j,value",
        )?;
        let n = g.grid().len();
        for i in 0..n {
            for j in 0..n {
                csv.row(format_args!("{i},{j},{}", g.at(i, j)))?;
            }
        }
        written.push(csv.finish()?);
    }
    let mut decomp = Csv::create(dir, "decomp.csv", "t,x,sigma2_curr,sigma2_prop,sigma2_asym")?;
    let problem = instance.problem();
    for t in 1..=problem.horizon() {
        for &x in &config.output.curve_states {
            let d = variance_decompose(problem, &sol, &gammas[t], t, x, config.quadrature.nodes)?;
            decomp.row(format_args!(
                "{t},{x},{},{},{}",
                d.current, d.propagated, d.total
            ))?;
        }
    }
    written.push(decomp.finish()?);
    Ok(written)
}

pub fn cmd_optimal_value(config: &RunConfig, instance: &Instance) -> Result<Vec<PathBuf>> {
    let problem = instance.problem();
    let sol = true_solution(config, instance)?;
    let plan = SeedPlan::new(config.mc.seed);
    let est = optimal_value_variance(problem, &sol, config.mc.paths, &plan)?;
    let x1 = problem.initial_state();
    let gamma1 = match instance {
        Instance::Lqr { model, .. } => lqr_oracle(model)?.1.covariance(1, &scalar(x1), &scalar(x1)),
        Instance::Inventory { .. } => covariances(config, instance, &sol)?[0].eval(x1, x1),
    };
    let mut csv = Csv::create(
        &config.output.directory,
        "optval.csv",
        "paths,trajectory_variance,ci_halfwidth,analytic_gamma1",
    )?;
    csv.row(format_args!(
        "{},{},{},{gamma1}",
        est.paths, est.variance, est.ci_halfwidth
    ))?;
    Ok(vec![csv.finish()?])
}
