//! Finite-state kernels and the exact oracles built on them.
//!
//! Everything here is exact up to floating point: propagation of measures,
//! weighted norms, the stationary law, pairwise minorization constants, drift
//! constants, and the product kernels used by the coupling construction.
//!
//! Norm convention: the total-variation norm of a signed measure is
//! `sup_{|phi| <= 1} |mu(phi)| = sum |mu(x)|`, so the distance between two
//! probability laws lies in `[0, 2]`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, BoundsError, Result};

/// Row-sum tolerance for stochastic matrices.
pub const ROW_TOL: f64 = 1e-12;
/// Target l1 residual of the stationary solve.
pub const STATIONARY_TOL: f64 = 1e-12;
const POWER_ITER_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel", into = "RawKernel")]
pub struct FiniteKernel {
    states: Vec<String>,
    rows: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    #[serde(default)]
    states: Option<Vec<String>>,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<RawKernel> for FiniteKernel {
    type Error = BoundsError;
    fn try_from(raw: RawKernel) -> Result<Self> {
        match raw.states {
            Some(states) => FiniteKernel::new(states, raw.rows),
            None => FiniteKernel::from_rows(raw.rows),
        }
    }
}

impl From<FiniteKernel> for RawKernel {
    fn from(k: FiniteKernel) -> Self {
        RawKernel { states: Some(k.states), rows: k.rows }
    }
}

impl FiniteKernel {
    pub fn new(states: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(invalid("states", "state space must be nonempty"));
        }
        if rows.len() != n {
            return Err(BoundsError::DimensionMismatch { expected: n, got: rows.len() });
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(BoundsError::DimensionMismatch { expected: n, got: row.len() });
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(invalid("rows", format!("row {i} has invalid entry {v}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL {
                return Err(invalid("rows", format!("row {i} sums to {sum}, not 1")));
            }
        }
        Ok(Self { states, rows })
    }

    /// Kernel with states labelled `0..n`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let states = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::new(states, rows)
    }

    pub fn identity(n: usize) -> Result<Self> {
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::from_rows(rows)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x]
    }

    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.rows[x][y]
    }

    /// `(P v)(x) = sum_y P(x, y) v(y)`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().zip(v).map(|(p, f)| p * f).sum())
            .collect()
    }

    /// `(mu P)(y) = sum_x mu(x) P(x, y)`.
    pub fn push_forward(&self, mu: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for (x, row) in self.rows.iter().enumerate() {
            let m = mu[x];
            if m == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(row) {
                *o += m * p;
            }
        }
        out
    }

    fn reachable(&self, start: usize, forward: bool) -> Vec<bool> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(x) = queue.pop_front() {
            for y in 0..n {
                let w = if forward { self.rows[x][y] } else { self.rows[y][x] };
                if w > 0.0 && !seen[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
        seen
    }

    /// Strong connectivity of the transition graph.
    pub fn is_irreducible(&self) -> bool {
        self.reachable(0, true).into_iter().all(|b| b)
            && self.reachable(0, false).into_iter().all(|b| b)
    }
}

/// Signed measure on a finite state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FiniteSignedMeasure {
    pub values: Vec<f64>,
}

impl FiniteSignedMeasure {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dirac(n: usize, x: usize) -> Self {
        let mut values = vec![0.0; n];
        values[x] = 1.0;
        Self { values }
    }

    pub fn uniform(n: usize) -> Self {
        Self { values: vec![1.0 / n as f64; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.values.iter().zip(f).map(|(m, v)| m * v).sum()
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        check_dim(self.len(), other.len())?;
        Ok(Self { values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect() })
    }
}

/// Weight function `f >= 1` on a finite state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightFunction {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for WeightFunction {
    type Error = BoundsError;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        WeightFunction::new(values)
    }
}

impl From<WeightFunction> for Vec<f64> {
    fn from(w: WeightFunction) -> Self {
        w.values
    }
}

impl WeightFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 1.0)) {
            return Err(invalid("f", format!("weight at state {i} is {v}, must be >= 1")));
        }
        Ok(Self { values })
    }

    pub fn constant_one(n: usize) -> Self {
        Self { values: vec![1.0; n] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A kernel on `X x X`; state `(x, x')` sits at index `x * n + x'`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductKernel {
    base: usize,
    kernel: FiniteKernel,
}

impl ProductKernel {
    pub fn from_pair_rows(base: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let states = (0..base * base)
            .map(|i| format!("({},{})", i / base, i % base))
            .collect();
        Ok(Self { base, kernel: FiniteKernel::new(states, rows)? })
    }

    pub fn base_len(&self) -> usize {
        self.base
    }

    pub fn kernel(&self) -> &FiniteKernel {
        &self.kernel
    }

    pub fn pair_index(&self, x: usize, x_prime: usize) -> usize {
        x * self.base + x_prime
    }

    pub fn pair(&self, idx: usize) -> (usize, usize) {
        (idx / self.base, idx % self.base)
    }

    pub fn entry(&self, from: (usize, usize), to: (usize, usize)) -> f64 {
        self.kernel.entry(self.pair_index(from.0, from.1), self.pair_index(to.0, to.1))
    }
}

/// Pairwise minorization `P(x,.) ^ P(x',.) >= epsilon * nu_{x,x'}` on a coupling set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCertificate", into = "RawCertificate")]
pub struct MinorizationCertificate {
    states: usize,
    coupling_set: Vec<(usize, usize)>,
    epsilon: f64,
    nu: Vec<Vec<f64>>,
    #[serde(skip)]
    index: Vec<Option<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCertificate {
    states: usize,
    coupling_set: Vec<(usize, usize)>,
    epsilon: f64,
    nu: Vec<Vec<f64>>,
}

impl TryFrom<RawCertificate> for MinorizationCertificate {
    type Error = BoundsError;
    fn try_from(r: RawCertificate) -> Result<Self> {
        MinorizationCertificate::from_parts(r.states, r.coupling_set, r.epsilon, r.nu)
    }
}

impl From<MinorizationCertificate> for RawCertificate {
    fn from(c: MinorizationCertificate) -> Self {
        RawCertificate { states: c.states, coupling_set: c.coupling_set, epsilon: c.epsilon, nu: c.nu }
    }
}

impl MinorizationCertificate {
    /// Builds a certificate without checking it against a kernel; see [`Self::check`].
    pub fn from_parts(
        states: usize,
        coupling_set: Vec<(usize, usize)>,
        epsilon: f64,
        nu: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(invalid("epsilon", "epsilon must lie in [0,1]"));
        }
        if nu.len() != coupling_set.len() {
            return Err(BoundsError::DimensionMismatch { expected: coupling_set.len(), got: nu.len() });
        }
        let mut index = vec![None; states * states];
        for (k, &(x, xp)) in coupling_set.iter().enumerate() {
            if x >= states || xp >= states {
                return Err(invalid("coupling_set", format!("pair ({x},{xp}) out of range")));
            }
            index[x * states + xp] = Some(k);
            let row = &nu[k];
            check_dim(states, row.len())?;
            let sum: f64 = row.iter().sum();
            if row.iter().any(|v| *v < 0.0) || (sum - 1.0).abs() > ROW_TOL {
                return Err(invalid("nu", format!("nu for pair ({x},{xp}) is not a probability vector")));
            }
        }
        Ok(Self { states, coupling_set, epsilon, nu, index })
    }

    /// Same pairs and `nu`, smaller `epsilon`. Any `eps <= self.epsilon` keeps the bound valid.
    pub fn with_epsilon(&self, eps: f64) -> Result<Self> {
        if !(0.0..=self.epsilon).contains(&eps) {
            return Err(invalid("epsilon", format!("{eps} not in [0, {}]", self.epsilon)));
        }
        Ok(Self { epsilon: eps, ..self.clone() })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn coupling_set(&self) -> &[(usize, usize)] {
        &self.coupling_set
    }

    pub fn contains(&self, x: usize, x_prime: usize) -> bool {
        self.index[x * self.states + x_prime].is_some()
    }

    /// Minorizing law of an in-set pair.
    pub fn nu(&self, x: usize, x_prime: usize) -> Option<&[f64]> {
        self.index[x * self.states + x_prime].map(|k| self.nu[k].as_slice())
    }

    /// Membership mask over pair indices `x * n + x'`.
    pub fn mask(&self) -> Vec<bool> {
        self.index.iter().map(Option::is_some).collect()
    }

    /// Verifies `P(x,y) ^ P(x',y) >= epsilon * nu(y) - 1e-12` for every in-set pair.
    pub fn check(&self, p: &FiniteKernel) -> Result<()> {
        check_dim(self.states, p.len())?;
        for (k, &(x, xp)) in self.coupling_set.iter().enumerate() {
            for y in 0..self.states {
                let overlap = p.entry(x, y).min(p.entry(xp, y));
                if overlap < self.epsilon * self.nu[k][y] - ROW_TOL {
                    return Err(BoundsError::InvalidCertificate(format!(
                        "pair ({x},{xp}) state {y}: overlap {overlap} < epsilon*nu = {}",
                        self.epsilon * self.nu[k][y]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Drift inequality `K Vbar <= lambda Vbar + b 1_C` on a finite (possibly product) space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftCertificate {
    pub vbar: WeightFunction,
    pub lambda: f64,
    pub b: f64,
    pub set_c: Vec<bool>,
}

impl DriftCertificate {
    pub fn holds_for(&self, k: &FiniteKernel) -> bool {
        let kv = k.apply(self.vbar.values());
        kv.iter().zip(self.vbar.values()).zip(&self.set_c).all(|((kv, v), in_c)| {
            *kv <= self.lambda * v + if *in_c { self.b } else { 0.0 } + ROW_TOL
        })
    }
}

/// Smallest drift constants for a given function and set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftCheck {
    pub lambda_min: f64,
    pub b_min: f64,
    /// `C` is the whole space, so the off-set condition constrains nothing.
    pub vacuous: bool,
    kv: Vec<f64>,
    v: Vec<f64>,
    set_c: Vec<bool>,
}

impl DriftCheck {
    /// Smallest `b` that makes the inequality hold for this `lambda`.
    pub fn b_for(&self, lambda: f64) -> f64 {
        self.kv
            .iter()
            .zip(&self.v)
            .zip(&self.set_c)
            .filter(|(_, c)| **c)
            .map(|((kv, v), _)| kv - lambda * v)
            .fold(0.0, f64::max)
    }

    /// Whether `(lambda, b)` satisfies the inequality within `tol`.
    pub fn admits(&self, lambda: f64, b: f64, tol: f64) -> bool {
        self.kv.iter().zip(&self.v).zip(&self.set_c).all(|((kv, v), c)| {
            *kv <= lambda * v + if *c { b } else { 0.0 } + tol
        })
    }

    pub fn certificate(&self, lambda: f64) -> Result<DriftCertificate> {
        if !(self.lambda_min..1.0).contains(&lambda) || lambda <= 0.0 {
            return Err(invalid("lambda", format!("{lambda} not in [{}, 1)", self.lambda_min)));
        }
        Ok(DriftCertificate {
            vbar: WeightFunction::new(self.v.clone())?,
            lambda,
            b: self.b_for(lambda),
            set_c: self.set_c.clone(),
        })
    }

    /// `(K V)(x)` as computed during the check.
    pub fn kv(&self) -> &[f64] {
        &self.kv
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(BoundsError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `xi P^n` by `n` successive vector-matrix products.
pub fn propagate(xi: &FiniteSignedMeasure, p: &FiniteKernel, n: usize) -> Result<FiniteSignedMeasure> {
    check_dim(p.len(), xi.len())?;
    let mut values = xi.values.clone();
    for _ in 0..n {
        values = p.push_forward(&values);
    }
    Ok(FiniteSignedMeasure { values })
}

/// `||mu||_f = sum_x f(x) |mu(x)|`, the supremum being attained at `phi = f sign(mu)`.
pub fn f_norm(mu: &FiniteSignedMeasure, f: &WeightFunction) -> Result<f64> {
    check_dim(f.len(), mu.len())?;
    Ok(mu.values.iter().zip(f.values()).map(|(m, w)| w * m.abs()).sum())
}

/// Total-variation norm (range `[0, 2]` for differences of probability laws).
pub fn tv_norm(mu: &FiniteSignedMeasure) -> f64 {
    mu.values.iter().map(|m| m.abs()).sum()
}

fn stationary_residual(p: &FiniteKernel, pi: &[f64]) -> f64 {
    p.push_forward(pi).iter().zip(pi).map(|(a, b)| (a - b).abs()).sum()
}

/// Unique stationary law of an irreducible kernel.
pub fn stationary(p: &FiniteKernel) -> Result<FiniteSignedMeasure> {
    if !p.is_irreducible() {
        return Err(BoundsError::Reducible);
    }
    let n = p.len();
    // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = p.entry(j, i) - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(n);
    rhs[n - 1] = 1.0;
    let mut pi: Vec<f64> = match a.lu().solve(&rhs) {
        Some(sol) => sol.iter().map(|v| v.max(0.0)).collect(),
        None => vec![1.0 / n as f64; n],
    };
    normalize(&mut pi);
    let mut residual = stationary_residual(p, &pi);
    let mut iter = 0;
    // Lazy kernel (P + I)/2 shares pi and is aperiodic.
    while residual > STATIONARY_TOL && iter < POWER_ITER_CAP {
        let next = p.push_forward(&pi);
        for (v, w) in pi.iter_mut().zip(next) {
            *v = 0.5 * (*v + w);
        }
        normalize(&mut pi);
        residual = stationary_residual(p, &pi);
        iter += 1;
    }
    if residual > STATIONARY_TOL {
        return Err(BoundsError::StationaryNotConverged { residual });
    }
    Ok(FiniteSignedMeasure { values: pi })
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
}

/// `ln ||delta_x P^n - pi||_f`, computed through the deflated operator
/// `Q = P - 1 pi` with per-step renormalisation so that geometrically small
/// distances keep full relative precision instead of hitting the rounding floor.
pub fn log_distance_to_stationarity(
    p: &FiniteKernel,
    pi: &FiniteSignedMeasure,
    x: usize,
    f: &WeightFunction,
    n: usize,
) -> Result<f64> {
    check_dim(p.len(), pi.len())?;
    check_dim(p.len(), f.len())?;
    let mut mu = FiniteSignedMeasure::dirac(p.len(), x).difference(pi)?.values;
    let mut log_scale = 0.0;
    for _ in 0..n {
        let mut next = p.push_forward(&mu);
        let mass: f64 = mu.iter().sum();
        for (v, s) in next.iter_mut().zip(&pi.values) {
            *v -= mass * s;
        }
        let size: f64 = next.iter().map(|v| v.abs()).sum();
        if size == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        next.iter_mut().for_each(|v| *v /= size);
        log_scale += size.ln();
        mu = next;
    }
    let norm = f_norm(&FiniteSignedMeasure::new(mu), f)?;
    Ok(log_scale + norm.ln())
}

/// Per-pair overlaps, `epsilon = min overlap`, `nu_{x,x'} = (P(x,.) ^ P(x',.)) / overlap`.
pub fn extract_minorization(p: &FiniteKernel, pairs: &[(usize, usize)]) -> Result<MinorizationCertificate> {
    if pairs.is_empty() {
        return Err(invalid("pairs", "coupling set must be nonempty"));
    }
    let n = p.len();
    let mut epsilon = f64::INFINITY;
    let mut nus = Vec::with_capacity(pairs.len());
    for &(x, xp) in pairs {
        if x >= n || xp >= n {
            return Err(invalid("pairs", format!("pair ({x},{xp}) out of range")));
        }
        let mins: Vec<f64> = (0..n).map(|y| p.entry(x, y).min(p.entry(xp, y))).collect();
        let mut overlap: f64 = mins.iter().sum();
        if (overlap - 1.0).abs() <= 1e-12 {
            // rows that agree up to rounding
            overlap = 1.0;
        }
        if overlap <= 0.0 {
            return Err(BoundsError::DegenerateMinorization { x, x_prime: xp });
        }
        epsilon = epsilon.min(overlap);
        nus.push(mins.into_iter().map(|m| m / overlap).collect());
    }
    MinorizationCertificate::from_parts(n, pairs.to_vec(), epsilon.min(1.0), nus)
}

/// Minimal `(lambda, b)` for `K V <= lambda V + b 1_C`.
pub fn verify_drift(k: &FiniteKernel, v: &WeightFunction, set_c: &[bool]) -> Result<DriftCheck> {
    check_dim(k.len(), v.len())?;
    check_dim(k.len(), set_c.len())?;
    let kv = k.apply(v.values());
    let vacuous = set_c.iter().all(|c| *c);
    let lambda_min = if vacuous {
        0.0
    } else {
        kv.iter()
            .zip(v.values())
            .zip(set_c)
            .filter(|(_, c)| !**c)
            .map(|((kv, v), _)| kv / v)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    if lambda_min >= 1.0 {
        return Err(BoundsError::DriftViolation { lambda_min });
    }
    let mut check = DriftCheck {
        lambda_min,
        b_min: 0.0,
        vacuous,
        kv,
        v: v.values().to_vec(),
        set_c: set_c.to_vec(),
    };
    check.b_min = check.b_for(lambda_min);
    Ok(check)
}

/// Residual law `(P(x,.) - eps nu) / (1 - eps)`, with rounding negatives clipped.
pub fn residual_row(p_row: &[f64], nu: &[f64], eps: f64) -> Result<Vec<f64>> {
    if eps >= 1.0 {
        return Err(BoundsError::ResidualUndefined);
    }
    let mut row = Vec::with_capacity(p_row.len());
    for (p, n) in p_row.iter().zip(nu) {
        let r = (p - eps * n) / (1.0 - eps);
        if r < -ROW_TOL {
            return Err(BoundsError::InvalidCertificate(format!(
                "residual mass {r} is negative; epsilon exceeds the pair overlap"
            )));
        }
        row.push(r.max(0.0));
    }
    Ok(row)
}

fn tensor(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}

/// The kernel `P*`: independent product off the coupling set, product of the
/// two marginal residuals on it.
pub fn build_product_pstar(p: &FiniteKernel, cert: &MinorizationCertificate) -> Result<ProductKernel> {
    product_kernel(p, cert, false)
}

/// The joint kernel `Pbar`: as `P*` off the set, and
/// `(1 - eps) Rbar + eps nu(A ^ A')` on it.
pub fn build_product_pbar(p: &FiniteKernel, cert: &MinorizationCertificate) -> Result<ProductKernel> {
    product_kernel(p, cert, true)
}

fn product_kernel(p: &FiniteKernel, cert: &MinorizationCertificate, with_coupling: bool) -> Result<ProductKernel> {
    let n = p.len();
    check_dim(n, cert.states())?;
    let eps = cert.epsilon();
    if eps >= 1.0 && !with_coupling {
        return Err(BoundsError::ResidualUndefined);
    }
    cert.check(p)?;
    let mut rows = Vec::with_capacity(n * n);
    for x in 0..n {
        for xp in 0..n {
            let row = match cert.nu(x, xp) {
                None => tensor(p.row(x), p.row(xp)),
                Some(nu) => {
                    let mut row = if eps < 1.0 {
                        tensor(&residual_row(p.row(x), nu, eps)?, &residual_row(p.row(xp), nu, eps)?)
                    } else {
                        vec![0.0; n * n]
                    };
                    if with_coupling {
                        row.iter_mut().for_each(|v| *v *= 1.0 - eps);
                        for y in 0..n {
                            row[y * n + y] += eps * nu[y];
                        }
                    }
                    row
                }
            };
            rows.push(row);
        }
    }
    ProductKernel::from_pair_rows(n, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_state() -> FiniteKernel {
        FiniteKernel::from_rows(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap()
    }

    fn reflecting_walk() -> FiniteKernel {
        FiniteKernel::from_rows(vec![
            vec![0.5, 0.5, 0.0],
            vec![0.25, 0.5, 0.25],
            vec![0.0, 0.5, 0.5],
        ])
        .unwrap()
    }

    #[test]
    fn kernel_validation() {
        assert!(FiniteKernel::from_rows(vec![vec![0.5, 0.6], vec![0.5, 0.5]]).is_err());
        assert!(FiniteKernel::from_rows(vec![vec![1.2, -0.2], vec![0.5, 0.5]]).is_err());
        assert!(FiniteKernel::from_rows(vec![vec![1.0, 0.0]]).is_err());
        let json = r#"{"rows":[[0.7,0.3],[0.4,0.6]]}"#;
        let k: FiniteKernel = serde_json::from_str(json).unwrap();
        assert_eq!(k, two_state());
        assert!(serde_json::from_str::<FiniteKernel>(r#"{"rows":[[0.7,0.3]],"x":1}"#).is_err());
    }

    #[test]
    fn propagate_examples() {
        let p = two_state();
        let xi = FiniteSignedMeasure::dirac(2, 0);
        assert_eq!(propagate(&xi, &p, 0).unwrap(), xi);
        let one = propagate(&xi, &p, 1).unwrap();
        assert_abs_diff_eq!(one.values[0], 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(one.values[1], 0.3, epsilon = 1e-15);
        let pi = FiniteSignedMeasure::new(vec![4.0 / 7.0, 3.0 / 7.0]);
        let later = propagate(&pi, &p, 25).unwrap();
        for (a, b) in later.values.iter().zip(&pi.values) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert!(propagate(&FiniteSignedMeasure::dirac(3, 0), &p, 1).is_err());
    }

    #[test]
    fn f_norm_examples() {
        let mu = FiniteSignedMeasure::new(vec![0.3, -0.3]);
        let f = WeightFunction::new(vec![1.0, 2.0]).unwrap();
        // brute force over sign patterns of phi in {+-f(x)}
        let mut best = 0.0_f64;
        for s0 in [-1.0, 1.0] {
            for s1 in [-1.0, 1.0] {
                best = best.max((0.3 * s0 * 1.0 - 0.3 * s1 * 2.0_f64).abs());
            }
        }
        assert_abs_diff_eq!(f_norm(&mu, &f).unwrap(), best, epsilon = 1e-15);
        assert_abs_diff_eq!(best, 0.9, epsilon = 1e-15);
        let zero = FiniteSignedMeasure::new(vec![0.0, 0.0]);
        assert_eq!(f_norm(&zero, &f).unwrap(), 0.0);
        let single = FiniteSignedMeasure::new(vec![0.5]);
        assert_eq!(f_norm(&single, &WeightFunction::new(vec![3.0]).unwrap()).unwrap(), 1.5);
        assert!(WeightFunction::new(vec![0.5, 2.0]).is_err());
    }

    #[test]
    fn stationary_examples() {
        let pi = stationary(&FiniteKernel::identity(1).unwrap()).unwrap();
        assert_eq!(pi.values, vec![1.0]);
        let pi = stationary(&two_state()).unwrap();
        assert_abs_diff_eq!(pi.values[0], 4.0 / 7.0, epsilon = 1e-14);
        assert_abs_diff_eq!(pi.values[1], 3.0 / 7.0, epsilon = 1e-14);
        let ds = FiniteKernel::from_rows(vec![
            vec![0.2, 0.5, 0.3],
            vec![0.3, 0.2, 0.5],
            vec![0.5, 0.3, 0.2],
        ])
        .unwrap();
        for v in stationary(&ds).unwrap().values {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-14);
        }
        let periodic = FiniteKernel::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_abs_diff_eq!(stationary(&periodic).unwrap().values[0], 0.5, epsilon = 1e-14);
        assert_eq!(stationary(&FiniteKernel::identity(2).unwrap()), Err(BoundsError::Reducible));
    }

    #[test]
    fn minorization_examples() {
        let p = two_state();
        let cert = extract_minorization(&p, &[(0, 1)]).unwrap();
        assert_abs_diff_eq!(cert.epsilon(), 0.7, epsilon = 1e-15);
        let nu = cert.nu(0, 1).unwrap();
        assert_abs_diff_eq!(nu[0], 4.0 / 7.0, epsilon = 1e-15);
        assert_abs_diff_eq!(nu[1], 3.0 / 7.0, epsilon = 1e-15);
        cert.check(&p).unwrap();

        let same = FiniteKernel::from_rows(vec![vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap();
        assert_abs_diff_eq!(extract_minorization(&same, &[(0, 1)]).unwrap().epsilon(), 1.0, epsilon = 1e-15);

        let disjoint = FiniteKernel::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(
            extract_minorization(&disjoint, &[(0, 1)]),
            Err(BoundsError::DegenerateMinorization { x: 0, x_prime: 1 })
        );
        assert!(extract_minorization(&p, &[]).is_err());
    }

    #[test]
    fn drift_examples() {
        let k = reflecting_walk();
        let v = WeightFunction::new(vec![1.0, 2.0, 4.0]).unwrap();
        let check = verify_drift(&k, &v, &[true, true, false]).unwrap();
        assert_abs_diff_eq!(check.lambda_min, 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(check.b_min, 0.75, epsilon = 1e-15);
        let cert = check.certificate(0.9).unwrap();
        assert!(cert.holds_for(&k));

        let ones = WeightFunction::constant_one(3);
        assert!(matches!(
            verify_drift(&k, &ones, &[true, false, false]),
            Err(BoundsError::DriftViolation { .. })
        ));

        let full = verify_drift(&k, &v, &[true, true, true]).unwrap();
        assert!(full.vacuous);
        assert_eq!(full.lambda_min, 0.0);
        assert_abs_diff_eq!(full.b_min, 3.0, epsilon = 1e-15);

        // everything outside C = {0} jumps to 0, V minimised on C
        let det = FiniteKernel::from_rows(vec![
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        let v = WeightFunction::new(vec![1.0, 3.0, 5.0]).unwrap();
        let check = verify_drift(&det, &v, &[true, false, false]).unwrap();
        let expected = [3.0_f64, 5.0].iter().map(|w| 1.0 / w).fold(f64::MIN, f64::max);
        assert_abs_diff_eq!(check.lambda_min, expected, epsilon = 1e-15);
    }

    #[test]
    fn pstar_examples() {
        let p = two_state();
        let cert = extract_minorization(&p, &[(0, 1)]).unwrap();
        let ps = build_product_pstar(&p, &cert).unwrap();
        // in-set pair (0,1): residual rows (1,0) and (0,1), product mass at (0,1)
        let row = ps.kernel().row(ps.pair_index(0, 1));
        assert_abs_diff_eq!(row[ps.pair_index(0, 1)], 1.0, epsilon = 1e-12);
        // off-set pair (1,0): tensor product of rows
        let row = ps.kernel().row(ps.pair_index(1, 0));
        for a in 0..2 {
            for b in 0..2 {
                assert_abs_diff_eq!(row[ps.pair_index(a, b)], p.entry(1, a) * p.entry(0, b), epsilon = 1e-15);
            }
        }

        let same = FiniteKernel::from_rows(vec![vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap();
        let cert = extract_minorization(&same, &[(0, 1)]).unwrap();
        assert_eq!(build_product_pstar(&same, &cert), Err(BoundsError::ResidualUndefined));
        let lowered = cert.with_epsilon(0.4).unwrap();
        let ps = build_product_pstar(&same, &lowered).unwrap();
        let r = residual_row(same.row(0), lowered.nu(0, 1).unwrap(), 0.4).unwrap();
        assert_abs_diff_eq!(r[0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(r[1], 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(ps.entry((0, 1), (1, 1)), 0.49, epsilon = 1e-15);

        let bad = MinorizationCertificate::from_parts(2, vec![(0, 1)], 0.9, vec![vec![0.5, 0.5]]).unwrap();
        assert!(matches!(build_product_pstar(&p, &bad), Err(BoundsError::InvalidCertificate(_))));
    }

    #[test]
    fn pbar_couples_on_diagonal() {
        let p = two_state();
        let cert = extract_minorization(&p, &[(0, 1), (1, 0)]).unwrap();
        let pb = build_product_pbar(&p, &cert).unwrap();
        let row = pb.kernel().row(pb.pair_index(0, 1));
        // eps nu on the diagonal, (1-eps) point mass at (0,1)
        assert_abs_diff_eq!(row[pb.pair_index(0, 0)], 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(row[pb.pair_index(1, 1)], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(row[pb.pair_index(0, 1)], 0.3, epsilon = 1e-12);
    }

    #[test]
    fn log_distance_matches_direct_norm() {
        let p = reflecting_walk();
        let pi = stationary(&p).unwrap();
        let f = WeightFunction::new(vec![1.0, 2.0, 4.0]).unwrap();
        for n in [1, 3, 10] {
            let direct = propagate(&FiniteSignedMeasure::dirac(3, 2), &p, n).unwrap();
            let direct = f_norm(&direct.difference(&pi).unwrap(), &f).unwrap();
            let logd = log_distance_to_stationarity(&p, &pi, 2, &f, n).unwrap();
            assert_abs_diff_eq!(logd.exp(), direct, epsilon = 1e-12);
        }
        // far below the rounding floor of the direct route
        let deep = log_distance_to_stationarity(&p, &pi, 0, &f, 400).unwrap();
        assert!(deep < -200.0 && deep.is_finite());
    }
}
