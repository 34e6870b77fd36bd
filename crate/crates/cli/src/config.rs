//! JSON run configuration and the named presets.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use saa_core::inventory::{inventory_problem, InventoryParams};
use saa_core::lqr::LqrModel;
use saa_core::model::{NoiseComponent, NoiseSpec, ProblemInstance};

use crate::error::{CliError, Result};

pub const PRESETS: [&str; 3] = ["lqr-paper", "lqr-paper-qq", "inventory-default"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub grids: GridConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProblemConfig {
    Lqr(LqrConfig),
    Inventory(InventoryConfig),
}

/// Scalar time-invariant LQR with `xi ~ U[-w, w]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqrConfig {
    pub horizon: usize,
    pub a: f64,
    pub b: f64,
    pub q: f64,
    pub r: f64,
    pub terminal: f64,
    pub noise_half_width: f64,
    pub initial_state: f64,
    pub control_bounds: [f64; 2],
}

impl Default for LqrConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            a: 1.0,
            b: 1.0,
            q: 1.0,
            r: 1.0,
            terminal: 1.0,
            noise_half_width: 3f64.sqrt(),
            initial_state: 1.0,
            control_bounds: [-8.0, 8.0],
        }
    }
}

/// Stationary inventory instance with demand `U[0, demand_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InventoryConfig {
    pub horizon: usize,
    pub order_cost: f64,
    pub backorder_cost: f64,
    pub holding_cost: f64,
    pub demand_max: f64,
    pub initial_stock: f64,
}

impl Default for InventoryConfig {
    fn default() -> Self {
        Self {
            horizon: 5,
            order_cost: 1.0,
            backorder_cost: 3.0,
            holding_cost: 1.0,
            demand_max: 2.0,
            initial_stock: 1.0,
        }
    }
}

impl InventoryConfig {
    pub fn params(&self) -> InventoryParams {
        InventoryParams::stationary(
            self.order_cost,
            self.backorder_cost,
            self.holding_cost,
            self.demand_max,
            self.initial_stock,
            self.horizon,
        )
    }
}

/// State grids. `bounds` applies to LQR only; inventory grids follow from the
/// instance parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub bounds: Option<[f64; 2]>,
    pub nodes: usize,
    pub covariance_nodes: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            bounds: None,
            nodes: 1601,
            covariance_nodes: 401,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    pub nodes: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { nodes: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineKind {
    Grid,
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub sample_size: usize,
    pub replications: usize,
    pub seed: u64,
    pub stages: Vec<usize>,
    pub states: Vec<f64>,
    pub workers: usize,
    /// Defaults to `closed-form` for LQR and `grid` otherwise.
    pub engine: Option<EngineKind>,
    /// Trajectories for `optimal-value`.
    pub paths: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            sample_size: 1000,
            replications: 10_000,
            seed: 20_240_601,
            stages: vec![1, 10, 20],
            states: vec![1.0],
            workers: 1,
            engine: None,
            paths: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// States of the variance curves and decompositions.
    pub curve_states: Vec<f64>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            curve_states: vec![0.5, 1.5],
        }
    }
}

/// Everything a command needs, built from a validated [`RunConfig`].
#[derive(Debug, Clone)]
pub enum Instance {
    Lqr {
        model: LqrModel,
        problem: ProblemInstance,
    },
    Inventory {
        params: InventoryParams,
        problem: ProblemInstance,
    },
}

impl Instance {
    pub fn problem(&self) -> &ProblemInstance {
        match self {
            Instance::Lqr { problem, .. } | Instance::Inventory { problem, .. } => problem,
        }
    }
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let lqr = || RunConfig {
            problem: ProblemConfig::Lqr(LqrConfig::default()),
            grids: GridConfig {
                bounds: Some([-8.0, 8.0]),
                ..GridConfig::default()
            },
            quadrature: QuadratureConfig::default(),
            mc: McConfig::default(),
            output: OutputConfig::default(),
        };
        match name {
            "lqr-paper" => Ok(lqr()),
            "lqr-paper-qq" => {
                let mut c = lqr();
                c.mc.states = vec![10.0];
                c.mc.replications = 100;
                Ok(c)
            }
            "inventory-default" => Ok(RunConfig {
                problem: ProblemConfig::Inventory(InventoryConfig::default()),
                grids: GridConfig {
                    bounds: None,
                    nodes: 401,
                    covariance_nodes: 201,
                },
                quadrature: QuadratureConfig { nodes: 65 },
                mc: McConfig {
                    sample_size: 50,
                    replications: 100,
                    stages: vec![1, 3, 5],
                    states: vec![1.0],
                    paths: 100_000,
                    ..McConfig::default()
                },
                output: OutputConfig {
                    curve_states: vec![0.0, 1.0, 2.0],
                    ..OutputConfig::default()
                },
            }),
            other => Err(CliError::Config(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn horizon(&self) -> usize {
        match &self.problem {
            ProblemConfig::Lqr(l) => l.horizon,
            ProblemConfig::Inventory(i) => i.horizon,
        }
    }

    pub fn engine(&self) -> EngineKind {
        self.mc.engine.unwrap_or(match self.problem {
            ProblemConfig::Lqr(_) => EngineKind::ClosedForm,
            ProblemConfig::Inventory(_) => EngineKind::Grid,
        })
    }

    /// Checks that do not need the problem to be built.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let horizon = self.horizon();
        if horizon == 0 {
            return bad("problem horizon must be at least 1".into());
        }
        if self.grids.nodes < 2 || self.grids.covariance_nodes < 2 {
            return bad("grids need at least 2 nodes".into());
        }
        if self.quadrature.nodes == 0 {
            return bad("quadrature needs at least 1 node".into());
        }
        let mc = &self.mc;
        if mc.sample_size == 0 {
            return bad("mc.sample_size must be at least 1".into());
        }
        if mc.replications < 2 {
            return bad("mc.replications must be at least 2".into());
        }
        if mc.workers == 0 {
            return bad("mc.workers must be at least 1".into());
        }
        if mc.paths < 2 {
            return bad("mc.paths must be at least 2".into());
        }
        if mc.stages.is_empty() || mc.states.is_empty() {
            return bad("mc.stages and mc.states must be non-empty".into());
        }
        if let Some(t) = mc.stages.iter().find(|&&t| t == 0 || t > horizon) {
            return bad(format!("mc.stages entry {t} outside 1..={horizon}"));
        }
        if mc
            .states
            .iter()
            .chain(&self.output.curve_states)
            .any(|x| !x.is_finite())
        {
            return bad("evaluation states must be finite".into());
        }
        match &self.problem {
            ProblemConfig::Lqr(l) => {
                let [u_lo, u_hi] = l.control_bounds;
                if !(u_lo < u_hi) {
                    return bad("control_bounds must satisfy lo < hi".into());
                }
                if !(l.noise_half_width > 0.0) {
                    return bad("noise_half_width must be positive".into());
                }
            }
            ProblemConfig::Inventory(_) => {
                if self.grids.bounds.is_some() {
                    return bad("grids.bounds is not used by inventory problems".into());
                }
                if self.engine() == EngineKind::ClosedForm {
                    return bad("the closed-form engine needs an lqr problem".into());
                }
            }
        }
        Ok(())
    }

    /// Validates and builds the model and grid problem.
    pub fn instance(&self) -> Result<Instance> {
        self.validate()?;
        match &self.problem {
            ProblemConfig::Lqr(l) => {
                let noise = NoiseSpec::scalar_iid(
                    NoiseComponent::symmetric_uniform(l.noise_half_width)?,
                    l.horizon,
                )?;
                let model = LqrModel::scalar(l.a, l.b, l.q, l.r, l.terminal, noise)?;
                let [lo, hi] = self.grids.bounds.unwrap_or([-8.0, 8.0]);
                let [u_lo, u_hi] = l.control_bounds;
                let problem =
                    model.to_problem(l.initial_state, (lo, hi, self.grids.nodes), (u_lo, u_hi))?;
                Ok(Instance::Lqr { model, problem })
            }
            ProblemConfig::Inventory(i) => {
                let params = i.params();
                let problem = inventory_problem(&params, self.grids.nodes)?;
                Ok(Instance::Inventory { params, problem })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_build() {
        for name in PRESETS {
            let c = RunConfig::preset(name).unwrap();
            c.instance().unwrap();
        }
        assert!(RunConfig::preset("nope").is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig::preset("inventory-default").unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), c);
    }

    #[test]
    fn minimal_document_takes_defaults() {
        let c = RunConfig::from_json(r#"{"problem": {"kind": "lqr", "horizon": 3}}"#).unwrap();
        assert_eq!(c.horizon(), 3);
        assert_eq!(c.engine(), EngineKind::ClosedForm);
        assert_eq!(c.quadrature.nodes, 64);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for doc in [
            r#"{"problem": {"kind": "lqr"}, "extra": 1}"#,
            r#"{"problem": {"kind": "lqr", "gain": 2}}"#,
            r#"{"problem": {"kind": "inventory"}, "mc": {"samples": 3}}"#,
            r#"{"problem": {"kind": "queue"}}"#,
        ] {
            assert!(
                matches!(RunConfig::from_json(doc), Err(CliError::Config(_))),
                "{doc}"
            );
        }
    }

    #[test]
    fn semantic_checks() {
        let mut c = RunConfig::preset("lqr-paper").unwrap();
        c.mc.stages = vec![21];
        assert!(c.validate().is_err());
        let mut c = RunConfig::preset("inventory-default").unwrap();
        c.mc.engine = Some(EngineKind::ClosedForm);
        assert!(c.validate().is_err());
        let mut c = RunConfig::preset("lqr-paper").unwrap();
        c.mc.replications = 1;
        assert!(c.validate().is_err());
    }
}
