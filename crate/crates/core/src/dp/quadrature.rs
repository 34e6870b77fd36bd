use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};
use crate::model::{NoiseComponent, NoiseKind};

/// Probability-weighted nodes: `expect(f) = sum_i w_i f(x_i)` with `sum_i w_i = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// `q`-point Gauss-Legendre rule for the uniform law on `[lo, hi]`.
    pub fn gauss_legendre(q: usize, lo: f64, hi: f64) -> Result<Self> {
        let degree = NonZeroUsize::new(q)
            .ok_or_else(|| Error::Config("quadrature needs at least one node".into()))?;
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::Config(format!(
                "bad quadrature interval [{lo}, {hi}]"
            )));
        }
        let rule = GaussLegendre::new(degree);
        let mut pairs: Vec<(f64, f64)> = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(z, w)| (0.5 * ((hi - lo) * z + hi + lo), w))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        })
    }

    /// Expectation rule for one noise component.
    pub fn for_noise(component: &NoiseComponent, q: usize) -> Result<Self> {
        match component.kind() {
            NoiseKind::Uniform { lo, hi } => Self::gauss_legendre(q, lo, hi),
        }
    }

    /// Point mass at `at`.
    pub fn dirac(at: f64) -> Self {
        Self {
            nodes: vec![at],
            weights: vec![1.0],
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}
