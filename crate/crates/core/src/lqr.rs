//! Closed forms for the linear-quadratic problem with additive noise:
//! Riccati recursion, SAA value functions and the asymptotic variance law.
//!
//! Dynamics `x' = A x + B u + xi`, stage cost `x'Qx + u'Ru`, terminal cost
//! `x'Q_{T+1}x`. Noise components are independent and zero-mean.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{
    LinearQuadraticStage, Moments, NoiseComponent, NoiseSpec, ProblemInstance, StageKind,
    StageModel, StateGrid, TerminalCost,
};
use crate::sampling::{noise_moments, SamplePool};

#[derive(Debug, Clone, PartialEq)]
pub struct LqrStage {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct LqrModel {
    stages: Vec<LqrStage>,
    terminal: DMatrix<f64>,
    noise: NoiseSpec,
}

fn check_spd(name: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Model(format!(
            "{name} is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::Model(format!("{name} is not symmetric")));
    }
    if m.clone().cholesky().is_none() {
        return Err(Error::Model(format!("{name} is not positive definite")));
    }
    Ok(())
}

impl LqrModel {
    pub fn new(stages: Vec<LqrStage>, terminal: DMatrix<f64>, noise: NoiseSpec) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::Model("horizon must be at least 1".into()));
        }
        if noise.horizon() != stages.len() {
            return Err(Error::Model(format!(
                "noise covers {} stages, model has {}",
                noise.horizon(),
                stages.len()
            )));
        }
        let n = terminal.nrows();
        let m = stages[0].b.ncols();
        if noise.dim() != n {
            return Err(Error::Model(format!(
                "noise dimension {} differs from state dimension {n}",
                noise.dim()
            )));
        }
        check_spd("terminal weight", &terminal, n)?;
        for (i, s) in stages.iter().enumerate() {
            let t = i + 1;
            if s.a.shape() != (n, n) || s.b.shape() != (n, m) {
                return Err(Error::Model(format!(
                    "stage {t}: A or B has the wrong shape"
                )));
            }
            check_spd(&format!("Q_{t}"), &s.q, n)?;
            check_spd(&format!("R_{t}"), &s.r, m)?;
        }
        for t in 1..=noise.horizon() {
            for c in noise.stage(t) {
                let Moments { mean, mu2, .. } = c.moments();
                if mean.abs() > 1e-12 * mu2.sqrt().max(1.0) {
                    return Err(Error::Unsupported(format!(
                        "stage {t}: noise with nonzero mean {mean}"
                    )));
                }
            }
        }
        Ok(Self {
            stages,
            terminal,
            noise,
        })
    }

    /// Time-invariant scalar model.
    pub fn scalar(a: f64, b: f64, q: f64, r: f64, terminal: f64, noise: NoiseSpec) -> Result<Self> {
        let one = |v: f64| DMatrix::from_element(1, 1, v);
        let stage = LqrStage {
            a: one(a),
            b: one(b),
            q: one(q),
            r: one(r),
        };
        Self::new(vec![stage; noise.horizon()], one(terminal), noise)
    }

    /// `A = B = Q = R = Q_{T+1} = 1`, `T = 20`, noise uniform on `[-sqrt 3, sqrt 3]`.
    pub fn benchmark() -> Self {
        let noise = NoiseSpec::scalar_iid(
            NoiseComponent::symmetric_uniform(3f64.sqrt()).expect("valid support"),
            20,
        )
        .expect("valid horizon");
        Self::scalar(1.0, 1.0, 1.0, 1.0, 1.0, noise).expect("valid model")
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn state_dim(&self) -> usize {
        self.terminal.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.stages[0].b.ncols()
    }

    pub fn stage(&self, t: usize) -> &LqrStage {
        &self.stages[t - 1]
    }

    pub fn terminal(&self) -> &DMatrix<f64> {
        &self.terminal
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    fn is_scalar(&self) -> bool {
        self.state_dim() == 1 && self.control_dim() == 1
    }

    /// Grid-based problem for a scalar model: every stage uses the same state
    /// grid `[lo, hi]` with `nodes` nodes and controls in `[u_lo, u_hi]`.
    pub fn to_problem(
        &self,
        initial_state: f64,
        (lo, hi, nodes): (f64, f64, usize),
        (u_lo, u_hi): (f64, f64),
    ) -> Result<ProblemInstance> {
        if !self.is_scalar() {
            return Err(Error::Unsupported(
                "grid engine needs scalar state and control".into(),
            ));
        }
        let stages = self
            .stages
            .iter()
            .map(|s| {
                StageModel::new(
                    StageKind::LinearQuadratic(LinearQuadraticStage {
                        a: s.a[(0, 0)],
                        b: s.b[(0, 0)],
                        q: s.q[(0, 0)],
                        r: s.r[(0, 0)],
                    }),
                    u_lo,
                    u_hi,
                    true,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let grid = StateGrid::uniform(lo, hi, nodes)?;
        ProblemInstance::new(
            stages,
            TerminalCost::Quadratic {
                weight: self.terminal[(0, 0)],
            },
            initial_state,
            vec![grid; self.horizon() + 1],
            self.noise.clone(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    /// `P_1..P_{T+1}`.
    pub p: Vec<DMatrix<f64>>,
    /// `K_1..K_T`.
    pub k: Vec<DMatrix<f64>>,
    /// `M_t = A_t + B_t K_t`.
    pub closed_loop: Vec<DMatrix<f64>>,
    /// `(R_t + B_t' P_{t+1} B_t)^{-1}`.
    pub gain_inverse: Vec<DMatrix<f64>>,
    /// `q_1..q_{T+1}`.
    pub q: Vec<f64>,
}

impl RiccatiSolution {
    pub fn horizon(&self) -> usize {
        self.k.len()
    }

    pub fn p(&self, t: usize) -> &DMatrix<f64> {
        &self.p[t - 1]
    }

    pub fn gain(&self, t: usize) -> &DMatrix<f64> {
        &self.k[t - 1]
    }

    pub fn closed_loop(&self, t: usize) -> &DMatrix<f64> {
        &self.closed_loop[t - 1]
    }

    pub fn q(&self, t: usize) -> f64 {
        self.q[t - 1]
    }

    /// `V_t(x) = x'P_t x + q_t`.
    pub fn value(&self, t: usize, x: &DVector<f64>) -> f64 {
        x.dot(&(self.p(t) * x)) + self.q(t)
    }

    pub fn policy(&self, t: usize, x: &DVector<f64>) -> DVector<f64> {
        self.gain(t) * x
    }
}

fn spd_inverse(m: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let inv = m
        .cholesky()
        .ok_or_else(|| Error::Numerical(format!("{what} is not positive definite")))?
        .inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

pub fn riccati_backward(model: &LqrModel) -> Result<RiccatiSolution> {
    let horizon = model.horizon();
    let mut p = vec![model.terminal.clone()];
    let mut q = vec![0.0];
    let mut k = Vec::with_capacity(horizon);
    let mut closed_loop = Vec::with_capacity(horizon);
    let mut gain_inverse = Vec::with_capacity(horizon);
    for t in (1..=horizon).rev() {
        let s = model.stage(t);
        let pn = p.last().expect("next P present");
        let h = &s.r + s.b.transpose() * pn * &s.b;
        let h_inv = spd_inverse(h, &format!("R_{t} + B'PB"))?;
        let gain = -(&h_inv * s.b.transpose() * pn * &s.a);
        let m = &s.a + &s.b * &gain;
        let pt = &s.q + s.a.transpose() * pn * &s.a
            - s.a.transpose() * pn * &s.b * &h_inv * s.b.transpose() * pn * &s.a;
        let pt = (&pt + pt.transpose()) * 0.5;
        let qm = quadratic_noise_moments(pn, model.noise.stage(t))?;
        q.push(q.last().expect("next q present") + qm.mean);
        p.push(pt);
        k.push(gain);
        closed_loop.push(m);
        gain_inverse.push(h_inv);
    }
    p.reverse();
    q.reverse();
    k.reverse();
    closed_loop.reverse();
    gain_inverse.reverse();
    Ok(RiccatiSolution {
        p,
        k,
        closed_loop,
        gain_inverse,
        q,
    })
}

/// Moments of the quadratic form `xi' P xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticMoments {
    pub mean: f64,
    pub variance: f64,
    /// `E[(xi' P xi) xi]`.
    pub cross: DVector<f64>,
}

/// Moments of `xi' P xi` for independent zero-mean components.
pub fn quadratic_noise_moments(
    p: &DMatrix<f64>,
    components: &[NoiseComponent],
) -> Result<QuadraticMoments> {
    let n = components.len();
    if p.shape() != (n, n) {
        return Err(Error::Model(format!(
            "P is {}x{}, noise has {n} components",
            p.nrows(),
            p.ncols()
        )));
    }
    let m = noise_moments(components);
    if let Some(bad) = m
        .iter()
        .find(|m| m.mean.abs() > 1e-12 * m.mu2.sqrt().max(1.0))
    {
        return Err(Error::Unsupported(format!(
            "noise component with nonzero mean {}",
            bad.mean
        )));
    }
    let mut mean = 0.0;
    let mut variance = 0.0;
    for i in 0..n {
        let pii = p[(i, i)];
        mean += pii * m[i].mu2;
        variance += pii * pii * (m[i].mu4 - m[i].mu2 * m[i].mu2);
        for j in 0..i {
            let pij = 0.5 * (p[(i, j)] + p[(j, i)]);
            variance += 4.0 * pij * pij * m[i].mu2 * m[j].mu2;
        }
    }
    let cross = DVector::from_iterator(n, (0..n).map(|k| p[(k, k)] * m[k].mu3));
    Ok(QuadraticMoments {
        mean,
        variance,
        cross,
    })
}

/// SAA value functions `V_hat_t(x) = x'P_t x + k_hat_t' x + q_hat_t` and
/// policies `pi_hat_t(x) = K_t x - u_t` of one sample pool.
#[derive(Debug, Clone)]
pub struct SaaClosedForm {
    /// `k_hat_1..k_hat_{T+1}`.
    pub k_hat: Vec<DVector<f64>>,
    /// `q_hat_1..q_hat_{T+1}`.
    pub q_hat: Vec<f64>,
    /// Policy offsets `u_1..u_T`.
    pub offset: Vec<DVector<f64>>,
    /// Sample means per stage.
    pub xi_bar: Vec<DVector<f64>>,
    /// `(1/N) sum_i xi_i' P_{t+1} xi_i` per stage.
    pub quad_mean: Vec<f64>,
}

impl SaaClosedForm {
    pub fn k_hat(&self, t: usize) -> &DVector<f64> {
        &self.k_hat[t - 1]
    }

    pub fn q_hat(&self, t: usize) -> f64 {
        self.q_hat[t - 1]
    }

    pub fn value(&self, riccati: &RiccatiSolution, t: usize, x: &DVector<f64>) -> f64 {
        x.dot(&(riccati.p(t) * x)) + self.k_hat(t).dot(x) + self.q_hat(t)
    }

    /// `V_hat_t(x) - V_t(x) = k_hat_t' x + q_hat_t - q_t`.
    pub fn value_error(&self, riccati: &RiccatiSolution, t: usize, x: &DVector<f64>) -> f64 {
        self.k_hat(t).dot(x) + self.q_hat(t) - riccati.q(t)
    }

    pub fn policy(&self, riccati: &RiccatiSolution, t: usize, x: &DVector<f64>) -> DVector<f64> {
        riccati.gain(t) * x - &self.offset[t - 1]
    }
}

pub fn saa_closed_form(
    model: &LqrModel,
    riccati: &RiccatiSolution,
    pool: &SamplePool,
) -> Result<SaaClosedForm> {
    let horizon = riccati.horizon();
    let n = model.state_dim();
    if pool.horizon() != horizon || pool.dim() != n {
        return Err(Error::Model(format!(
            "pool has {} stages of dimension {}, model needs {horizon} of dimension {n}",
            pool.horizon(),
            pool.dim()
        )));
    }
    if model.is_scalar() {
        Ok(scalar_closed_form(model, riccati, pool))
    } else {
        Ok(matrix_closed_form(model, riccati, pool))
    }
}

fn matrix_closed_form(
    model: &LqrModel,
    riccati: &RiccatiSolution,
    pool: &SamplePool,
) -> SaaClosedForm {
    let horizon = riccati.horizon();
    let n = model.state_dim();
    let size = pool.sample_size() as f64;
    let mut k_hat = vec![DVector::zeros(n)];
    let mut q_hat = vec![0.0];
    let mut offset = Vec::with_capacity(horizon);
    let mut xi_bar = Vec::with_capacity(horizon);
    let mut quad_mean = Vec::with_capacity(horizon);
    for t in (1..=horizon).rev() {
        let pn = riccati.p(t + 1);
        let b = &model.stage(t).b;
        let mut mean = DVector::zeros(n);
        let mut qsum = 0.0;
        for i in 0..pool.sample_size() {
            let xi = DVector::from_column_slice(pool.sample(t, i));
            qsum += xi.dot(&(pn * &xi));
            mean += xi;
        }
        mean /= size;
        let qm = qsum / size;
        let kn = k_hat.last().expect("next k present");
        let g = 2.0 * pn * &mean + kn;
        let bg = b.transpose() * &g;
        let h_inv = &riccati.gain_inverse[t - 1];
        let q = q_hat.last().expect("next q present") + qm + kn.dot(&mean)
            - 0.25 * bg.dot(&(h_inv * &bg));
        let k = riccati.closed_loop(t).transpose() * &g;
        offset.push(h_inv * (&bg * 0.5));
        k_hat.push(k);
        q_hat.push(q);
        xi_bar.push(mean);
        quad_mean.push(qm);
    }
    k_hat.reverse();
    q_hat.reverse();
    offset.reverse();
    xi_bar.reverse();
    quad_mean.reverse();
    SaaClosedForm {
        k_hat,
        q_hat,
        offset,
        xi_bar,
        quad_mean,
    }
}

fn scalar_closed_form(
    model: &LqrModel,
    riccati: &RiccatiSolution,
    pool: &SamplePool,
) -> SaaClosedForm {
    let horizon = riccati.horizon();
    let size = pool.sample_size() as f64;
    let mut k = 0.0;
    let mut q = 0.0;
    let mut k_hat = vec![0.0; horizon + 1];
    let mut q_hat = vec![0.0; horizon + 1];
    let mut offset = vec![0.0; horizon];
    let mut xi_bar = vec![0.0; horizon];
    let mut quad_mean = vec![0.0; horizon];
    for t in (1..=horizon).rev() {
        let pn = riccati.p(t + 1)[(0, 0)];
        let b = model.stage(t).b[(0, 0)];
        let h_inv = riccati.gain_inverse[t - 1][(0, 0)];
        let m = riccati.closed_loop(t)[(0, 0)];
        let (sum, sq) = pool
            .stage(t)
            .iter()
            .fold((0.0, 0.0), |(s, s2), &x| (s + x, s2 + x * x));
        let mean = sum / size;
        let qm = pn * sq / size;
        let g = 2.0 * pn * mean + k;
        let bg = b * g;
        q += qm + k * mean - 0.25 * bg * h_inv * bg;
        k = m * g;
        offset[t - 1] = h_inv * 0.5 * bg;
        k_hat[t - 1] = k;
        q_hat[t - 1] = q;
        xi_bar[t - 1] = mean;
        quad_mean[t - 1] = qm;
    }
    let vec1 = |v: f64| DVector::from_element(1, v);
    SaaClosedForm {
        k_hat: k_hat.into_iter().map(vec1).collect(),
        q_hat,
        offset: offset.into_iter().map(vec1).collect(),
        xi_bar: xi_bar.into_iter().map(vec1).collect(),
        quad_mean,
    }
}

/// Limit covariance of `sqrt(N)(V_hat_t - V_t)`:
/// `Gamma_t(x, x') = x'S_t x' + c_t'(x + x') + v_t`.
#[derive(Debug, Clone)]
pub struct AsymptoticLaw {
    /// `S_1..S_{T+1}`.
    pub s: Vec<DMatrix<f64>>,
    /// `c_1..c_{T+1}`.
    pub c: Vec<DVector<f64>>,
    /// `v_1..v_{T+1}`.
    pub v: Vec<f64>,
    /// `gamma_1..gamma_T`.
    pub gamma: Vec<DVector<f64>>,
    /// Noise covariance per stage.
    pub sigma: Vec<DMatrix<f64>>,
    /// `Var(xi_t' P_{t+1} xi_t)` per stage.
    pub quad_variance: Vec<f64>,
}

impl AsymptoticLaw {
    pub fn horizon(&self) -> usize {
        self.gamma.len()
    }

    pub fn s(&self, t: usize) -> &DMatrix<f64> {
        &self.s[t - 1]
    }

    pub fn c(&self, t: usize) -> &DVector<f64> {
        &self.c[t - 1]
    }

    pub fn v(&self, t: usize) -> f64 {
        self.v[t - 1]
    }

    /// `Gamma_t(x, y)`.
    pub fn covariance(&self, t: usize, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&(self.s(t) * y)) + self.c(t).dot(&(x + y)) + self.v(t)
    }
}

pub fn asymptotic_recursion(model: &LqrModel, riccati: &RiccatiSolution) -> Result<AsymptoticLaw> {
    let horizon = model.horizon();
    let n = model.state_dim();
    let mut s = vec![DMatrix::zeros(n, n)];
    let mut c = vec![DVector::zeros(n)];
    let mut v = vec![0.0];
    let mut gamma = Vec::with_capacity(horizon);
    let mut sigma = Vec::with_capacity(horizon);
    let mut quad_variance = Vec::with_capacity(horizon);
    for t in (1..=horizon).rev() {
        let pn = riccati.p(t + 1);
        let m = riccati.closed_loop(t);
        let comps = model.noise.stage(t);
        let cov = DMatrix::from_diagonal(&DVector::from_iterator(
            n,
            noise_moments(comps).iter().map(|m| m.mu2),
        ));
        let qm = quadratic_noise_moments(pn, comps)?;
        let g = 2.0 * pn * &qm.cross;
        let sn = s.last().expect("next S present");
        let st = m.transpose() * (sn + 4.0 * pn * &cov * pn) * m;
        let st = (&st + st.transpose()) * 0.5;
        let ct = m.transpose() * (c.last().expect("next c present") + &g);
        v.push(v.last().expect("next v present") + qm.variance);
        s.push(st);
        c.push(ct);
        gamma.push(g);
        sigma.push(cov);
        quad_variance.push(qm.variance);
    }
    s.reverse();
    c.reverse();
    v.reverse();
    gamma.reverse();
    sigma.reverse();
    quad_variance.reverse();
    Ok(AsymptoticLaw {
        s,
        c,
        v,
        gamma,
        sigma,
        quad_variance,
    })
}

/// `x'S_t x + 2c_t'x + v_t`, zero at `t = T + 1`.
pub fn asym_variance_eval(law: &AsymptoticLaw, t: usize, x: &DVector<f64>) -> f64 {
    law.covariance(t, x, x)
}

/// Split of the asymptotic variance at stage `t <= T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrVarianceSplit {
    pub propagated: f64,
    pub current: f64,
}

pub fn variance_decomposition(
    law: &AsymptoticLaw,
    riccati: &RiccatiSolution,
    t: usize,
    x: &DVector<f64>,
) -> LqrVarianceSplit {
    let mx = riccati.closed_loop(t) * x;
    let pn = riccati.p(t + 1);
    let propagated = mx.dot(&(law.s(t + 1) * &mx)) + law.v(t + 1) + 2.0 * mx.dot(law.c(t + 1));
    let current = 4.0 * mx.dot(&(pn * &law.sigma[t - 1] * pn * &mx))
        + law.quad_variance[t - 1]
        + 2.0 * mx.dot(&law.gamma[t - 1]);
    LqrVarianceSplit {
        propagated,
        current,
    }
}

/// `E[V_hat_t(x) - V_t(x)]` for sample size `n`; independent of `x` since
/// `E[k_hat_t] = 0`. Uses `Cov(k_hat_t) = S_t / n`.
pub fn saa_value_bias(
    model: &LqrModel,
    riccati: &RiccatiSolution,
    law: &AsymptoticLaw,
    t: usize,
    n: usize,
) -> f64 {
    let mut bias = 0.0;
    for s in t..=model.horizon() {
        let b = &model.stage(s).b;
        let pn = riccati.p(s + 1);
        let cov_g = 4.0 * pn * &law.sigma[s - 1] * pn + law.s(s + 1);
        bias -= 0.25 * (b * &riccati.gain_inverse[s - 1] * b.transpose() * cov_g).trace();
    }
    bias / n as f64
}

/// `Var` of the realised total cost along the optimal closed loop from `x_1`:
/// `sum_t E[current-stage variance at x_t]`, with `x_t` propagated in mean and
/// covariance. Requires symmetric noise (third moments zero).
pub fn trajectory_cost_variance(
    model: &LqrModel,
    riccati: &RiccatiSolution,
    law: &AsymptoticLaw,
    x1: &DVector<f64>,
) -> Result<f64> {
    let n = model.state_dim();
    let mut mean = x1.clone();
    let mut cov = DMatrix::<f64>::zeros(n, n);
    let mut total = 0.0;
    for t in 1..=model.horizon() {
        if law.gamma[t - 1].amax() != 0.0 {
            return Err(Error::Unsupported("asymmetric noise".into()));
        }
        let m = riccati.closed_loop(t);
        let pn = riccati.p(t + 1);
        let w = 4.0 * m.transpose() * pn * &law.sigma[t - 1] * pn * m;
        total += mean.dot(&(&w * &mean)) + (&w * &cov).trace() + law.quad_variance[t - 1];
        mean = m * &mean;
        cov = m * &cov * m.transpose() + &law.sigma[t - 1];
    }
    Ok(total)
}
