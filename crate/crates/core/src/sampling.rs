//! Reproducible per-stage noise samples.
//!
//! Every `(replication, stage)` pair owns its own ChaCha stream keyed by the
//! master seed, so pools can be regenerated in any order, on any number of
//! workers, bit for bit.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::model::{Moments, NoiseComponent, NoiseSpec};

const STAGE_BITS: u32 = 20;
const MAX_REPLICATION: u64 = 1 << (63 - STAGE_BITS);
const AUX_FLAG: u64 = 1 << 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPlan {
    pub master: u64,
}

impl SeedPlan {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    /// Generator for stage `stage` (1-based, at most `horizon`) of replication
    /// `replication`.
    pub fn derive_stream(
        &self,
        replication: u64,
        stage: usize,
        horizon: usize,
    ) -> Result<ChaCha12Rng> {
        if stage == 0 || stage > horizon {
            return Err(Error::Config(format!(
                "stage {stage} outside 1..={horizon}"
            )));
        }
        if stage >= 1 << STAGE_BITS {
            return Err(Error::Config(format!("stage index {stage} too large")));
        }
        if replication >= MAX_REPLICATION {
            return Err(Error::Config(format!(
                "replication index {replication} too large"
            )));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(self.master);
        rng.set_stream((replication << STAGE_BITS) | stage as u64);
        Ok(rng)
    }

    /// Stream outside the replication/stage space, for auxiliary simulations
    /// such as trajectory sampling.
    pub fn auxiliary_stream(&self, index: u64) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.master);
        rng.set_stream(AUX_FLAG | (index & !AUX_FLAG));
        rng
    }
}

/// The iid samples of one SAA replication: `n` draws of a `dim`-vector per stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePool {
    pub replication: u64,
    n: usize,
    dim: usize,
    stages: Vec<Vec<f64>>,
}

impl SamplePool {
    /// Builds a pool from explicit scalar samples, one vector per stage.
    pub fn from_scalar_samples(replication: u64, stages: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_samples(replication, 1, stages)
    }

    /// Builds a pool from per-stage flat arrays of `n * dim` values.
    pub fn from_samples(replication: u64, dim: usize, stages: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 || stages.is_empty() {
            return Err(Error::Config(
                "sample pool needs stages and dim >= 1".into(),
            ));
        }
        let len = stages[0].len();
        if len == 0 || !len.is_multiple_of(dim) || stages.iter().any(|s| s.len() != len) {
            return Err(Error::Config(
                "every stage needs the same positive number of samples".into(),
            ));
        }
        Ok(Self {
            replication,
            n: len / dim,
            dim,
            stages,
        })
    }

    pub fn sample_size(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    /// Flat samples of stage `t` (1-based): sample `i` occupies
    /// `[i * dim, (i + 1) * dim)`.
    pub fn stage(&self, t: usize) -> &[f64] {
        &self.stages[t - 1]
    }

    pub fn sample(&self, t: usize, i: usize) -> &[f64] {
        &self.stages[t - 1][i * self.dim..(i + 1) * self.dim]
    }
}

/// Draws `n` iid samples per stage by inverse transform.
pub fn draw_pool(
    plan: &SeedPlan,
    replication: u64,
    n: usize,
    noise: &NoiseSpec,
) -> Result<SamplePool> {
    if n < 1 {
        return Err(Error::Config("sample size N must be at least 1".into()));
    }
    let horizon = noise.horizon();
    let stages = (1..=horizon)
        .map(|t| {
            let mut rng = plan.derive_stream(replication, t, horizon)?;
            Ok(draw_stage(&mut rng, noise.stage(t), n))
        })
        .collect::<Result<Vec<_>>>()?;
    SamplePool::from_samples(replication, noise.dim(), stages)
}

fn draw_stage<R: Rng>(rng: &mut R, components: &[NoiseComponent], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * components.len());
    for _ in 0..n {
        for c in components {
            out.push(c.quantile(rng.random::<f64>()));
        }
    }
    out
}

/// Exact central moments of each component.
pub fn noise_moments(components: &[NoiseComponent]) -> Vec<Moments> {
    components.iter().map(NoiseComponent::moments).collect()
}

/// Dumps a pool as `stage,index,value` rows; for vector noise the index runs
/// over the flat per-stage array.
pub fn write_pool_csv<W: Write>(pool: &SamplePool, mut out: W) -> io::Result<()> {
    writeln!(out, "stage,index,value")?;
    for t in 1..=pool.horizon() {
        for (i, v) in pool.stage(t).iter().enumerate() {
            writeln!(out, "{t},{i},{v}")?;
        }
    }
    Ok(())
}
