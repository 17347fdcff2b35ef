//! Bell-variable coupling: simulation of the paired chain `(X, X', d)` and
//! exact path enumeration on finite chains.

use std::collections::HashMap;
use std::fmt::Debug;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{build_product_pstar, residual_row, FiniteKernel, MinorizationCertificate};
use crate::error::{invalid, BoundsError, Result};
use crate::registry::Registry;
use crate::rng::{replica_rng, SimRng};
use crate::stats::{adjusted_binomial_se, binomial_se, chi_square_gof, ChiSquareResult};

/// Iteration cap for accept-reject samplers.
pub const MAX_REJECTIONS: u64 = 1_000_000;
/// Largest number of pair paths an exact enumeration may visit.
pub const MAX_PAIR_PATHS: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoupledState<S> {
    pub x: S,
    pub x_prime: S,
    pub bell: bool,
}

impl<S: Copy> CoupledState<S> {
    pub fn start(x: S, x_prime: S) -> Self {
        Self { x, x_prime, bell: false }
    }
}

/// A kernel together with a pairwise minorization on a coupling set.
///
/// Step indices `k` start at 1: the move from time `k-1` to time `k` uses `epsilon(k)`.
pub trait CouplingModel: Sync {
    type State: Copy + PartialEq + Debug + Send + Sync;

    fn step(&self, x: Self::State, rng: &mut SimRng) -> Self::State;
    fn in_set(&self, x: Self::State, x_prime: Self::State) -> bool;
    fn epsilon(&self, k: usize) -> f64;
    fn sample_nu(&self, x: Self::State, x_prime: Self::State, k: usize, rng: &mut SimRng) -> Result<Self::State>;

    /// Both residual laws drawn exactly, if the model can.
    fn sample_residual_exact(
        &self,
        _x: Self::State,
        _x_prime: Self::State,
        _k: usize,
        _rng: &mut SimRng,
    ) -> Option<Result<(Self::State, Self::State)>> {
        None
    }

    /// `d nu_{x,x'} / d P(from, .)` at `y`, if densities are available.
    fn nu_ratio(&self, _from: Self::State, _x: Self::State, _x_prime: Self::State, _y: Self::State) -> Option<f64> {
        None
    }

    /// Joint move driven by one shared noise draw, if the model has one.
    fn common_step(&self, _x: Self::State, _x_prime: Self::State, _rng: &mut SimRng) -> Option<(Self::State, Self::State)> {
        None
    }
}

/// Draws the pair from the product of the two residual kernels.
pub trait ResidualSampler<M: CouplingModel>: Send + Sync {
    fn name(&self) -> &'static str;
    fn sample(&self, m: &M, x: M::State, xp: M::State, k: usize, rng: &mut SimRng) -> Result<(M::State, M::State)>;
}

/// Joint kernel used for pairs outside the coupling set.
pub trait OffSetJoint<M: CouplingModel>: Send + Sync {
    fn name(&self) -> &'static str;
    fn sample(&self, m: &M, x: M::State, xp: M::State, rng: &mut SimRng) -> Result<(M::State, M::State)>;
}

pub struct ExactResidual;

impl<M: CouplingModel> ResidualSampler<M> for ExactResidual {
    fn name(&self) -> &'static str {
        "exact"
    }
    fn sample(&self, m: &M, x: M::State, xp: M::State, k: usize, rng: &mut SimRng) -> Result<(M::State, M::State)> {
        m.sample_residual_exact(x, xp, k, rng)
            .unwrap_or_else(|| Err(invalid("residual", "model has no exact residual sampler")))
    }
}

/// Propose from `P(from, .)`, accept with probability `1 - eps dnu/dP`.
pub struct AcceptRejectResidual;

fn residual_by_rejection<M: CouplingModel>(
    m: &M,
    from: M::State,
    x: M::State,
    xp: M::State,
    k: usize,
    rng: &mut SimRng,
) -> Result<M::State> {
    let eps = m.epsilon(k);
    if eps >= 1.0 {
        return Err(BoundsError::ResidualUndefined);
    }
    for _ in 0..MAX_REJECTIONS {
        let y = m.step(from, rng);
        let ratio = m
            .nu_ratio(from, x, xp, y)
            .ok_or_else(|| invalid("residual", "accept-reject needs evaluable densities"))?;
        if rng.random::<f64>() >= eps * ratio {
            return Ok(y);
        }
    }
    Err(BoundsError::SamplerStalled(MAX_REJECTIONS))
}

impl<M: CouplingModel> ResidualSampler<M> for AcceptRejectResidual {
    fn name(&self) -> &'static str {
        "accept-reject"
    }
    fn sample(&self, m: &M, x: M::State, xp: M::State, k: usize, rng: &mut SimRng) -> Result<(M::State, M::State)> {
        let y = residual_by_rejection(m, x, x, xp, k, rng)?;
        let yp = residual_by_rejection(m, xp, x, xp, k, rng)?;
        Ok((y, yp))
    }
}

pub struct IndependentJoint;

impl<M: CouplingModel> OffSetJoint<M> for IndependentJoint {
    fn name(&self) -> &'static str {
        "independent"
    }
    fn sample(&self, m: &M, x: M::State, xp: M::State, rng: &mut SimRng) -> Result<(M::State, M::State)> {
        let y = m.step(x, rng);
        Ok((y, m.step(xp, rng)))
    }
}

pub struct CommonNoiseJoint;

impl<M: CouplingModel> OffSetJoint<M> for CommonNoiseJoint {
    fn name(&self) -> &'static str {
        "common-noise"
    }
    fn sample(&self, m: &M, x: M::State, xp: M::State, rng: &mut SimRng) -> Result<(M::State, M::State)> {
        m.common_step(x, xp, rng)
            .ok_or_else(|| invalid("joint", "model has no common-noise move"))
    }
}

pub fn residual_registry<M: CouplingModel + 'static>() -> Registry<dyn ResidualSampler<M>> {
    Registry::new("residual sampler")
        .with("exact", |_| Ok(Box::new(ExactResidual) as _))
        .with("accept-reject", |_| Ok(Box::new(AcceptRejectResidual) as _))
}

pub fn joint_registry<M: CouplingModel + 'static>() -> Registry<dyn OffSetJoint<M>> {
    Registry::new("off-set joint kernel")
        .with("independent", |_| Ok(Box::new(IndependentJoint) as _))
        .with("common-noise", |_| Ok(Box::new(CommonNoiseJoint) as _))
}

/// Strategies selected for a run.
pub struct CouplingStrategies<M: CouplingModel> {
    pub residual: Box<dyn ResidualSampler<M>>,
    pub joint: Box<dyn OffSetJoint<M>>,
}

impl<M: CouplingModel + 'static> CouplingStrategies<M> {
    pub fn by_name(residual: &str, joint: &str) -> Result<Self> {
        Ok(Self { residual: residual_registry().build(residual)?, joint: joint_registry().build(joint)? })
    }
}

/// One move of the bell-variable chain.
pub fn coupled_step<M: CouplingModel>(
    s: CoupledState<M::State>,
    m: &M,
    strat: &CouplingStrategies<M>,
    k: usize,
    rng: &mut SimRng,
) -> Result<CoupledState<M::State>> {
    if s.bell {
        let y = m.step(s.x, rng);
        return Ok(CoupledState { x: y, x_prime: y, bell: true });
    }
    if m.in_set(s.x, s.x_prime) {
        let eps = m.epsilon(k);
        if eps > 0.0 && rng.random::<f64>() < eps {
            let y = m.sample_nu(s.x, s.x_prime, k, rng)?;
            return Ok(CoupledState { x: y, x_prime: y, bell: true });
        }
        let (y, yp) = strat.residual.sample(m, s.x, s.x_prime, k, rng)?;
        return Ok(CoupledState { x: y, x_prime: yp, bell: false });
    }
    let (y, yp) = strat.joint.sample(m, s.x, s.x_prime, rng)?;
    Ok(CoupledState { x: y, x_prime: yp, bell: false })
}

/// Coupling time (`None` if beyond the horizon) and the state at the horizon.
pub fn simulate_replica<M: CouplingModel>(
    m: &M,
    strat: &CouplingStrategies<M>,
    start: CoupledState<M::State>,
    horizon: usize,
    rng: &mut SimRng,
) -> Result<(Option<usize>, CoupledState<M::State>)> {
    let mut s = start;
    let mut t = None;
    for k in 1..=horizon {
        s = coupled_step(s, m, strat, k, rng)?;
        if s.bell && t.is_none() {
            t = Some(k);
        }
    }
    Ok((t, s))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingRunResult {
    pub replicas: usize,
    pub horizon: usize,
    /// `t_counts[k-1]` replicas coupled at time `k`.
    pub t_counts: Vec<usize>,
    pub uncoupled_at_horizon: usize,
    /// `P(T > n)` estimates for `n = 0..=horizon`.
    pub p_uncoupled: Vec<f64>,
    /// Wald standard errors.
    pub se: Vec<f64>,
    /// Agresti-Coull standard errors.
    pub se_adjusted: Vec<f64>,
    /// `2 P(T > n)`.
    pub tv_upper: Vec<f64>,
}

/// Initial pair sampler.
pub type InitSampler<'a, S> = dyn Fn(&mut SimRng) -> (S, S) + Sync + 'a;

/// Runs `replicas` independent coupled trajectories; replica `r` uses stream `r` of `seed`.
pub fn run_coupling<M: CouplingModel>(
    m: &M,
    strat: &CouplingStrategies<M>,
    init: &InitSampler<'_, M::State>,
    horizon: usize,
    replicas: usize,
    seed: u64,
) -> Result<(CouplingRunResult, Vec<CoupledState<M::State>>)> {
    if replicas == 0 {
        return Err(invalid("replicas", "replicas must be >= 1"));
    }
    let outcomes: Vec<(Option<usize>, CoupledState<M::State>)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, r as u64);
            let (x, xp) = init(&mut rng);
            simulate_replica(m, strat, CoupledState::start(x, xp), horizon, &mut rng)
        })
        .collect::<Result<_>>()?;
    let mut t_counts = vec![0usize; horizon];
    let mut uncoupled = 0;
    for (t, _) in &outcomes {
        match t {
            Some(k) => t_counts[k - 1] += 1,
            None => uncoupled += 1,
        }
    }
    let mut p_uncoupled = Vec::with_capacity(horizon + 1);
    let mut se = Vec::with_capacity(horizon + 1);
    let mut se_adjusted = Vec::with_capacity(horizon + 1);
    let mut remaining = replicas;
    for n in 0..=horizon {
        if n > 0 {
            remaining -= t_counts[n - 1];
        }
        let p = remaining as f64 / replicas as f64;
        p_uncoupled.push(p);
        se.push(binomial_se(p, replicas));
        se_adjusted.push(adjusted_binomial_se(remaining, replicas));
    }
    let tv_upper = p_uncoupled.iter().map(|p| 2.0 * p).collect();
    let ends = outcomes.into_iter().map(|(_, s)| s).collect();
    Ok((
        CouplingRunResult {
            replicas,
            horizon,
            t_counts,
            uncoupled_at_horizon: uncoupled,
            p_uncoupled,
            se,
            se_adjusted,
            tv_upper,
        },
        ends,
    ))
}

fn draw_categorical(probs: &[f64], rng: &mut SimRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

fn inverse_cdf(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|c| *c <= u).min(cdf.len() - 1)
}

/// Finite chain with a certified pairwise minorization, optionally with a
/// per-step coin probability `eps_k <= epsilon`.
pub struct FiniteCoupling {
    p: FiniteKernel,
    cert: MinorizationCertificate,
    eps_seq: Option<Vec<f64>>,
    cdf: Vec<Vec<f64>>,
}

impl FiniteCoupling {
    pub fn new(p: FiniteKernel, cert: MinorizationCertificate, eps_seq: Option<Vec<f64>>) -> Result<Self> {
        cert.check(&p)?;
        if let Some(seq) = &eps_seq {
            if seq.iter().any(|e| !(0.0..=cert.epsilon()).contains(e)) {
                return Err(invalid("eps_seq", format!("each eps_k must lie in [0, {}]", cert.epsilon())));
            }
        }
        let cdf = p
            .rows()
            .iter()
            .map(|r| {
                r.iter()
                    .scan(0.0, |acc, v| {
                        *acc += v;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        Ok(Self { p, cert, eps_seq, cdf })
    }

    pub fn kernel(&self) -> &FiniteKernel {
        &self.p
    }

    pub fn certificate(&self) -> &MinorizationCertificate {
        &self.cert
    }
}

impl CouplingModel for FiniteCoupling {
    type State = usize;

    fn step(&self, x: usize, rng: &mut SimRng) -> usize {
        inverse_cdf(&self.cdf[x], rng.random())
    }

    fn in_set(&self, x: usize, xp: usize) -> bool {
        self.cert.contains(x, xp)
    }

    fn epsilon(&self, k: usize) -> f64 {
        match &self.eps_seq {
            Some(seq) => seq.get(k - 1).copied().unwrap_or(0.0),
            None => self.cert.epsilon(),
        }
    }

    fn sample_nu(&self, x: usize, xp: usize, _k: usize, rng: &mut SimRng) -> Result<usize> {
        let nu = self.cert.nu(x, xp).ok_or_else(|| invalid("pair", "pair is outside the coupling set"))?;
        Ok(draw_categorical(nu, rng))
    }

    fn sample_residual_exact(&self, x: usize, xp: usize, k: usize, rng: &mut SimRng) -> Option<Result<(usize, usize)>> {
        let nu = self.cert.nu(x, xp)?;
        let eps = self.epsilon(k);
        Some((|| {
            let r = residual_row(self.p.row(x), nu, eps)?;
            let rp = residual_row(self.p.row(xp), nu, eps)?;
            Ok((draw_categorical(&r, rng), draw_categorical(&rp, rng)))
        })())
    }

    fn nu_ratio(&self, from: usize, x: usize, xp: usize, y: usize) -> Option<f64> {
        let nu = self.cert.nu(x, xp)?;
        let p = self.p.entry(from, y);
        Some(if p > 0.0 { nu[y] / p } else { 0.0 })
    }

    fn common_step(&self, x: usize, xp: usize, rng: &mut SimRng) -> Option<(usize, usize)> {
        let u: f64 = rng.random();
        Some((inverse_cdf(&self.cdf[x], u), inverse_cdf(&self.cdf[xp], u)))
    }
}

/// Indicator functionals of a pair path `(Xbar_0, ..., Xbar_n)`.
#[derive(Debug, Clone, PartialEq)]
pub enum PathFunctional {
    One,
    /// `1{Xbar_t = (x, x')}`.
    Marginal { t: usize, x: usize, x_prime: usize },
    /// Indicator of one full path.
    Path(Vec<(usize, usize)>),
    /// `prod_t 1{Xbar_t in A_t}` with `A_t` a mask over pair indices `x * |X| + x'`.
    Product(Vec<Vec<bool>>),
}

impl PathFunctional {
    fn eval(&self, path: &[u32], n_states: usize) -> f64 {
        let hit = match self {
            PathFunctional::One => true,
            PathFunctional::Marginal { t, x, x_prime } => {
                path.get(*t).is_some_and(|z| *z as usize == x * n_states + x_prime)
            }
            PathFunctional::Path(p) => {
                p.len() == path.len() && p.iter().zip(path).all(|((x, xp), z)| *z as usize == x * n_states + xp)
            }
            PathFunctional::Product(masks) => path
                .iter()
                .enumerate()
                .all(|(t, z)| masks.get(t).is_none_or(|m| m[*z as usize])),
        };
        if hit {
            1.0
        } else {
            0.0
        }
    }
}

/// Per-step coin probabilities `eps_1, ..., eps_n`.
fn eps_schedule(cert: &MinorizationCertificate, eps_seq: Option<&[f64]>, n: usize) -> Result<Vec<f64>> {
    match eps_seq {
        None => Ok(vec![cert.epsilon(); n]),
        Some(seq) => {
            if seq.len() < n {
                return Err(invalid("eps_seq", format!("{} values for {n} steps", seq.len())));
            }
            if seq[..n].iter().any(|e| !(0.0..=cert.epsilon()).contains(e)) {
                return Err(invalid("eps_seq", format!("each eps_k must lie in [0, {}]", cert.epsilon())));
            }
            Ok(seq[..n].to_vec())
        }
    }
}

fn check_enumeration(n_states: usize, start_support: usize, n: usize) -> Result<()> {
    let count = (start_support as u128).saturating_mul(((n_states * n_states) as u128).saturating_pow(n as u32));
    if count > MAX_PAIR_PATHS {
        return Err(BoundsError::EnumerationTooLarge { count, limit: MAX_PAIR_PATHS });
    }
    Ok(())
}

fn start_pairs(xi: &[f64], xi_prime: &[f64]) -> Vec<(u32, f64)> {
    let n = xi.len();
    let mut out = Vec::new();
    for x in 0..n {
        for xp in 0..n {
            let w = xi[x] * xi_prime[xp];
            if w > 0.0 {
                out.push(((x * n + xp) as u32, w));
            }
        }
    }
    out
}

/// Pair-path weights `P(Xbar_0..n = path, d_n = 0)` under the bell-variable chain,
/// enumerating every coin outcome.
pub fn bell_path_weights(
    p: &FiniteKernel,
    cert: &MinorizationCertificate,
    eps_seq: Option<&[f64]>,
    xi: &[f64],
    xi_prime: &[f64],
    n: usize,
) -> Result<HashMap<Vec<u32>, f64>> {
    let ns = p.len();
    check_lens(ns, xi, xi_prime)?;
    let eps = eps_schedule(cert, eps_seq, n)?;
    check_enumeration(ns, start_pairs(xi, xi_prime).len(), n)?;
    let residuals = residual_table(p, cert, &eps)?;
    let mut out = HashMap::new();
    let mut path = Vec::with_capacity(n + 1);
    for (z, w) in start_pairs(xi, xi_prime) {
        path.push(z);
        bell_dfs(p, cert, &eps, &residuals, &mut path, w, n, &mut out);
        path.pop();
    }
    Ok(out)
}

type ResidualTable = Vec<HashMap<usize, Vec<f64>>>;

/// `residuals[k-1][x * |X| + x']` holds the product residual row for step `k`.
fn residual_table(p: &FiniteKernel, cert: &MinorizationCertificate, eps: &[f64]) -> Result<ResidualTable> {
    let ns = p.len();
    eps.iter()
        .map(|&e| {
            let mut m = HashMap::new();
            if e < 1.0 {
                for &(x, xp) in cert.coupling_set() {
                    let nu = cert.nu(x, xp).expect("pair in set");
                    let r = residual_row(p.row(x), nu, e)?;
                    let rp = residual_row(p.row(xp), nu, e)?;
                    m.insert(x * ns + xp, r.iter().flat_map(|a| rp.iter().map(move |b| a * b)).collect());
                }
            }
            Ok(m)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn bell_dfs(
    p: &FiniteKernel,
    cert: &MinorizationCertificate,
    eps: &[f64],
    residuals: &ResidualTable,
    path: &mut Vec<u32>,
    w: f64,
    n: usize,
    out: &mut HashMap<Vec<u32>, f64>,
) {
    // only paths with d_n = 0 are recorded, and the bell is absorbing, so the
    // coin's success branches are never expanded
    let t = path.len() - 1;
    if t == n {
        *out.entry(path.clone()).or_insert(0.0) += w;
        return;
    }
    let ns = p.len();
    let z = *path.last().expect("nonempty") as usize;
    let (x, xp) = (z / ns, z % ns);
    let e = eps[t];
    let mut branch = |path: &mut Vec<u32>, next: usize, q: f64| {
        if q > 0.0 {
            path.push(next as u32);
            bell_dfs(p, cert, eps, residuals, path, w * q, n, out);
            path.pop();
        }
    };
    if cert.nu(x, xp).is_some() {
        if let Some(row) = residuals[t].get(&z) {
            for (next, r) in row.iter().enumerate() {
                branch(path, next, (1.0 - e) * r);
            }
        }
    } else {
        for y in 0..ns {
            for yp in 0..ns {
                branch(path, y * ns + yp, p.entry(x, y) * p.entry(xp, yp));
            }
        }
    }
}

/// Pair-path weights under `P*`, each multiplied by `prod_k (1 - eps_k 1_C(Xbar_{k-1}))`.
pub fn pstar_path_weights(
    p: &FiniteKernel,
    cert: &MinorizationCertificate,
    eps_seq: Option<&[f64]>,
    xi: &[f64],
    xi_prime: &[f64],
    n: usize,
) -> Result<HashMap<Vec<u32>, f64>> {
    let ns = p.len();
    check_lens(ns, xi, xi_prime)?;
    let eps = eps_schedule(cert, eps_seq, n)?;
    check_enumeration(ns, start_pairs(xi, xi_prime).len(), n)?;
    // P*_k for each distinct eps_k
    let mut kernels: Vec<Option<FiniteKernel>> = Vec::with_capacity(n);
    for &e in &eps {
        kernels.push(if e < 1.0 {
            Some(build_product_pstar(p, &cert.with_epsilon(e)?)?.kernel().clone())
        } else {
            None
        });
    }
    let mask = cert.mask();
    let mut out = HashMap::new();
    let mut stack: Vec<(Vec<u32>, f64)> = start_pairs(xi, xi_prime).into_iter().map(|(z, w)| (vec![z], w)).collect();
    while let Some((path, w)) = stack.pop() {
        let t = path.len() - 1;
        if t == n {
            *out.entry(path).or_insert(0.0) += w;
            continue;
        }
        let z = *path.last().expect("nonempty") as usize;
        let keep = if mask[z] { 1.0 - eps[t] } else { 1.0 };
        if keep == 0.0 {
            continue;
        }
        let row: Vec<f64> = match &kernels[t] {
            Some(k) => k.row(z).to_vec(),
            None => {
                // eps_k = 1: off-set rows are still the independent product
                let (x, xp) = (z / ns, z % ns);
                (0..ns * ns).map(|j| p.entry(x, j / ns) * p.entry(xp, j % ns)).collect()
            }
        };
        for (next, q) in row.iter().enumerate() {
            if *q > 0.0 {
                let mut np = path.clone();
                np.push(next as u32);
                stack.push((np, w * keep * q));
            }
        }
    }
    Ok(out)
}

fn check_lens(n: usize, xi: &[f64], xi_prime: &[f64]) -> Result<()> {
    for len in [xi.len(), xi_prime.len()] {
        if len != n {
            return Err(BoundsError::DimensionMismatch { expected: n, got: len });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub diff: f64,
}

fn functional_sum(weights: &HashMap<Vec<u32>, f64>, phi: &PathFunctional, ns: usize) -> f64 {
    // fixed summation order keeps results reproducible
    let mut items: Vec<(&Vec<u32>, &f64)> = weights.iter().collect();
    items.sort_by(|a, b| a.0.cmp(b.0));
    items.iter().map(|(path, w)| *w * phi.eval(path, ns)).sum()
}

/// Both sides of the weighted identity
/// `E[phi(Xbar_0..n) 1(d_n = 0)] = E*[phi(Xbar_0..n) prod_k (1 - eps_k 1_C(Xbar_{k-1}))]`.
pub fn weighted_identity_check(
    p: &FiniteKernel,
    cert: &MinorizationCertificate,
    eps_seq: Option<&[f64]>,
    xi: &[f64],
    xi_prime: &[f64],
    n: usize,
    phi: &PathFunctional,
) -> Result<IdentityReport> {
    let lhs_w = bell_path_weights(p, cert, eps_seq, xi, xi_prime, n)?;
    let rhs_w = pstar_path_weights(p, cert, eps_seq, xi, xi_prime, n)?;
    let lhs = functional_sum(&lhs_w, phi, p.len());
    let rhs = functional_sum(&rhs_w, phi, p.len());
    Ok(IdentityReport { lhs, rhs, diff: (lhs - rhs).abs() })
}

/// Largest discrepancy over every single-path indicator and every time-marginal indicator.
pub fn identity_max_discrepancy(
    p: &FiniteKernel,
    cert: &MinorizationCertificate,
    eps_seq: Option<&[f64]>,
    xi: &[f64],
    xi_prime: &[f64],
    n: usize,
) -> Result<f64> {
    let ns = p.len();
    let lhs = bell_path_weights(p, cert, eps_seq, xi, xi_prime, n)?;
    let rhs = pstar_path_weights(p, cert, eps_seq, xi, xi_prime, n)?;
    let mut worst = 0.0_f64;
    for (path, w) in &lhs {
        worst = worst.max((w - rhs.get(path).copied().unwrap_or(0.0)).abs());
    }
    for (path, w) in &rhs {
        if !lhs.contains_key(path) {
            worst = worst.max(w.abs());
        }
    }
    fn sorted(m: &HashMap<Vec<u32>, f64>) -> Vec<(&Vec<u32>, f64)> {
        let mut items: Vec<(&Vec<u32>, f64)> = m.iter().map(|(k, v)| (k, *v)).collect();
        items.sort_by(|x, y| x.0.cmp(y.0));
        items
    }
    let (ls, rs) = (sorted(&lhs), sorted(&rhs));
    for t in 0..=n {
        let mut a = vec![0.0; ns * ns];
        let mut b = vec![0.0; ns * ns];
        for (path, w) in &ls {
            a[path[t] as usize] += w;
        }
        for (path, w) in &rs {
            b[path[t] as usize] += w;
        }
        for (u, v) in a.iter().zip(&b) {
            worst = worst.max((u - v).abs());
        }
    }
    let total = |m: &HashMap<Vec<u32>, f64>| functional_sum(m, &PathFunctional::One, ns);
    Ok(worst.max((total(&lhs) - total(&rhs)).abs()))
}

/// Laws of `X_n` and `X'_n` under the bell-variable chain, by forward recursion on `(x, x', d)`.
pub fn exact_coupled_marginals(
    m: &FiniteCoupling,
    xi: &[f64],
    xi_prime: &[f64],
    n: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = &m.p;
    let cert = &m.cert;
    let ns = p.len();
    check_lens(ns, xi, xi_prime)?;
    let eps: Vec<f64> = (1..=n).map(|k| m.epsilon(k)).collect();
    let residuals = residual_table(p, cert, &eps)?;
    // dist[d][x * ns + x']
    let mut dist = [vec![0.0; ns * ns], vec![0.0; ns * ns]];
    for (z, w) in start_pairs(xi, xi_prime) {
        dist[0][z as usize] += w;
    }
    for (t, &e) in eps.iter().enumerate() {
        let mut next = [vec![0.0; ns * ns], vec![0.0; ns * ns]];
        for z in 0..ns * ns {
            let (x, xp) = (z / ns, z % ns);
            let w1 = dist[1][z];
            if w1 > 0.0 {
                for y in 0..ns {
                    next[1][y * ns + y] += w1 * p.entry(x, y);
                }
            }
            let w0 = dist[0][z];
            if w0 == 0.0 {
                continue;
            }
            if let Some(nu) = cert.nu(x, xp) {
                for y in 0..ns {
                    next[1][y * ns + y] += w0 * e * nu[y];
                }
                if let Some(row) = residuals[t].get(&z) {
                    for (j, r) in row.iter().enumerate() {
                        next[0][j] += w0 * (1.0 - e) * r;
                    }
                }
            } else {
                for y in 0..ns {
                    for yp in 0..ns {
                        next[0][y * ns + yp] += w0 * p.entry(x, y) * p.entry(xp, yp);
                    }
                }
            }
        }
        dist = next;
    }
    let mut a = vec![0.0; ns];
    let mut b = vec![0.0; ns];
    for d in &dist {
        for (z, w) in d.iter().enumerate() {
            a[z / ns] += w;
            b[z % ns] += w;
        }
    }
    Ok((a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalReport {
    pub exact_max_error: f64,
    pub chi_square_x: Option<f64>,
    pub chi_square_x_prime: Option<f64>,
    pub passed: bool,
}

/// Exact check of both marginals against `xi P^n`, and optionally a chi-square
/// test of simulated endpoints at significance 0.001.
pub fn marginal_consistency_check(
    m: &FiniteCoupling,
    strat: &CouplingStrategies<FiniteCoupling>,
    xi: &[f64],
    xi_prime: &[f64],
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<MarginalReport> {
    use crate::chain::{propagate, FiniteSignedMeasure};
    let p = &m.p;
    let target = propagate(&FiniteSignedMeasure::new(xi.to_vec()), p, n)?.values;
    let target_p = propagate(&FiniteSignedMeasure::new(xi_prime.to_vec()), p, n)?.values;
    let (a, b) = exact_coupled_marginals(m, xi, xi_prime, n)?;
    let exact_max_error = a
        .iter()
        .zip(&target)
        .chain(b.iter().zip(&target_p))
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max);
    let (mut cx, mut cxp) = (None, None);
    let mut passed = exact_max_error <= 1e-10;
    if replicas > 0 {
        let init = |rng: &mut SimRng| (draw_categorical(xi, rng), draw_categorical(xi_prime, rng));
        let (_, ends) = run_coupling(m, strat, &init, n, replicas, seed)?;
        let mut counts = vec![0usize; p.len()];
        let mut counts_p = vec![0usize; p.len()];
        for s in &ends {
            counts[s.x] += 1;
            counts_p[s.x_prime] += 1;
        }
        let rx: ChiSquareResult = chi_square_gof(&counts, &target)?;
        let rxp = chi_square_gof(&counts_p, &target_p)?;
        passed &= rx.p_value > 1e-3 && rxp.p_value > 1e-3;
        cx = Some(rx.p_value);
        cxp = Some(rxp.p_value);
    }
    Ok(MarginalReport { exact_max_error, chi_square_x: cx, chi_square_x_prime: cxp, passed })
}

/// Draws from a probability vector; shared with the simulators of other modules.
pub fn sample_index(probs: &[f64], rng: &mut SimRng) -> usize {
    draw_categorical(probs, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{extract_minorization, propagate, tv_norm, FiniteSignedMeasure};
    use approx::assert_abs_diff_eq;

    fn worked() -> (FiniteKernel, MinorizationCertificate) {
        let p = FiniteKernel::from_rows(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        let cert = extract_minorization(&p, &[(0, 1), (1, 0)]).unwrap();
        (p, cert)
    }

    fn strat(res: &str, joint: &str) -> CouplingStrategies<FiniteCoupling> {
        CouplingStrategies::by_name(res, joint).unwrap()
    }

    #[test]
    fn worked_chain_tails_land_on_0_1() {
        let (p, cert) = worked();
        assert_abs_diff_eq!(cert.epsilon(), 0.7, epsilon = 1e-15);
        let m = FiniteCoupling::new(p, cert, None).unwrap();
        let s = strat("exact", "independent");
        let mut rng = replica_rng(1, 0);
        for _ in 0..2000 {
            let next = coupled_step(CoupledState::start(0, 1), &m, &s, 1, &mut rng).unwrap();
            if !next.bell {
                assert_eq!((next.x, next.x_prime), (0, 1));
            } else {
                assert_eq!(next.x, next.x_prime);
            }
        }
    }

    #[test]
    fn identity_worked_example() {
        let (p, cert) = worked();
        let xi = [1.0, 0.0];
        let xp = [0.0, 1.0];
        let r = weighted_identity_check(&p, &cert, None, &xi, &xp, 1, &PathFunctional::One).unwrap();
        assert_abs_diff_eq!(r.lhs, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(r.rhs, 0.3, epsilon = 1e-15);
        let r = weighted_identity_check(&p, &cert, None, &xi, &xp, 0, &PathFunctional::One).unwrap();
        assert_eq!((r.lhs, r.rhs), (1.0, 1.0));
        let zero = [0.0, 0.0, 0.0];
        let r = weighted_identity_check(&p, &cert, Some(&zero), &xi, &xp, 3, &PathFunctional::One).unwrap();
        assert_abs_diff_eq!(r.lhs, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.rhs, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn certain_heads_couples_immediately() {
        let p = FiniteKernel::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let all = [(0, 0), (0, 1), (1, 0), (1, 1)];
        let cert = extract_minorization(&p, &all).unwrap();
        assert_eq!(cert.epsilon(), 1.0);
        let m = FiniteCoupling::new(p, cert, None).unwrap();
        let init = |_: &mut SimRng| (0usize, 1usize);
        let (r, _) = run_coupling(&m, &strat("exact", "independent"), &init, 3, 500, 3).unwrap();
        assert_eq!(r.t_counts[0], 500);
        assert_eq!(r.p_uncoupled[1], 0.0);
    }

    #[test]
    fn bell_absorption_and_reproducibility() {
        let p = FiniteKernel::from_rows(vec![
            vec![0.5, 0.3, 0.2],
            vec![0.2, 0.5, 0.3],
            vec![0.3, 0.2, 0.5],
        ])
        .unwrap();
        let cert = extract_minorization(&p, &[(0, 1), (1, 0), (0, 2), (2, 0)]).unwrap();
        let m = FiniteCoupling::new(p, cert, None).unwrap();
        for name in ["exact", "accept-reject"] {
            let s = strat(name, "independent");
            let mut rng = replica_rng(5, 1);
            let mut st = CoupledState::start(0usize, 2usize);
            let mut seen_bell = false;
            for k in 1..200 {
                st = coupled_step(st, &m, &s, k, &mut rng).unwrap();
                seen_bell |= st.bell;
                if seen_bell {
                    assert!(st.bell && st.x == st.x_prime);
                }
            }
        }
        let init = |_: &mut SimRng| (0usize, 2usize);
        let s = strat("accept-reject", "common-noise");
        let a = run_coupling(&m, &s, &init, 10, 300, 9).unwrap().0;
        let b = run_coupling(&m, &s, &init, 10, 300, 9).unwrap().0;
        assert_eq!(a, b);
        assert!(a.p_uncoupled.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn simulated_coupling_time_matches_enumeration() {
        let p = FiniteKernel::from_rows(vec![
            vec![0.6, 0.3, 0.1],
            vec![0.3, 0.4, 0.3],
            vec![0.1, 0.3, 0.6],
        ])
        .unwrap();
        let pairs: Vec<(usize, usize)> = (0..3).flat_map(|a| (0..3).map(move |b| (a, b))).filter(|(a, b)| a != b).collect();
        let cert = extract_minorization(&p, &pairs).unwrap();
        let (xi, xp) = ([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        let m = FiniteCoupling::new(p.clone(), cert.clone(), None).unwrap();
        let init = |_: &mut SimRng| (0usize, 2usize);
        let (r, _) = run_coupling(&m, &strat("exact", "independent"), &init, 4, 20_000, 4).unwrap();
        for n in 0..=4 {
            let exact: f64 = bell_path_weights(&p, &cert, None, &xi, &xp, n).unwrap().values().sum();
            assert!((r.p_uncoupled[n] - exact).abs() <= 5.0 * r.se_adjusted[n], "n = {n}");
            let a = propagate(&FiniteSignedMeasure::dirac(3, 0), &p, n).unwrap();
            let b = propagate(&FiniteSignedMeasure::dirac(3, 2), &p, n).unwrap();
            assert!(2.0 * exact >= tv_norm(&a.difference(&b).unwrap()) - 1e-12);
        }
    }

    #[test]
    fn marginals_exact_and_simulated() {
        let p = FiniteKernel::from_rows(vec![
            vec![0.5, 0.3, 0.2],
            vec![0.2, 0.5, 0.3],
            vec![0.1, 0.2, 0.7],
        ])
        .unwrap();
        let cert = extract_minorization(&p, &[(0, 1), (1, 0), (1, 2), (2, 1)]).unwrap();
        let m = FiniteCoupling::new(p, cert, None).unwrap();
        let s = strat("exact", "independent");
        for n in 0..=4 {
            let r = marginal_consistency_check(&m, &s, &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0], n, 0, 0).unwrap();
            assert!(r.exact_max_error <= 1e-12, "n = {n}");
        }
        let (a, _) = exact_coupled_marginals(&m, &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0], 0).unwrap();
        assert_eq!(a, vec![1.0, 0.0, 0.0]);
        let r = marginal_consistency_check(&m, &s, &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0], 3, 20_000, 17).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn enumeration_cap() {
        let p = FiniteKernel::from_rows(vec![vec![1.0 / 6.0; 6]; 6]).unwrap();
        let cert = extract_minorization(&p, &[(0, 1)]).unwrap();
        let xi = FiniteSignedMeasure::dirac(6, 0).values;
        let r = bell_path_weights(&p, &cert, None, &xi, &xi, 6);
        assert!(matches!(r, Err(BoundsError::EnumerationTooLarge { .. })));
    }
}
