//! Explicit convergence bounds.
//!
//! Homogeneous chains: the coupling bound in total variation and in a
//! weighted norm, its minimisation over the free index `j`, the asymptotic
//! rate, the translation of a univariate drift/small-set condition into
//! bivariate constants, and the bounds that follow from it. Inhomogeneous
//! chains: the same bound with per-step constants and extremal products.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, BoundsError, Result};

/// Which norm a bound controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Tv,
    F,
}

/// Above these sizes powers and products are evaluated in log space.
const LOG_SPACE_STEPS: usize = 200;
const LOG_SPACE_B: f64 = 10.0;

/// Constants `(epsilon, lambda, b, B, v0)` where `v0 = (xi x xi')(Vbar)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomogeneousBoundInput {
    pub epsilon: f64,
    pub lambda: f64,
    pub b: f64,
    #[serde(rename = "B")]
    pub big_b: f64,
    pub v0: f64,
}

impl HomogeneousBoundInput {
    pub fn new(epsilon: f64, lambda: f64, b: f64, big_b: f64, v0: f64) -> Result<Self> {
        let inp = Self { epsilon, lambda, b, big_b, v0 };
        inp.validate()?;
        Ok(inp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(invalid("epsilon", "epsilon must lie in (0,1]"));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(invalid("lambda", "lambda must lie in (0,1)"));
        }
        if !(self.b >= 0.0 && self.b.is_finite()) {
            return Err(invalid("b", "b must be >= 0"));
        }
        if !(self.big_b >= 1.0 && self.big_b.is_finite()) {
            return Err(invalid("B", "B must be >= 1"));
        }
        if !(self.v0 >= 1.0 && self.v0.is_finite()) {
            return Err(invalid("v0", "v0 must be >= 1"));
        }
        Ok(())
    }

    fn log_space(&self, n: usize) -> bool {
        n > LOG_SPACE_STEPS || self.big_b > LOG_SPACE_B
    }

    /// `(1 - eps)^j`.
    fn coupling_term(&self, n: usize, j: usize) -> f64 {
        pow_policy(1.0 - self.epsilon, j, self.log_space(n))
    }

    /// `lambda^n B^(j-1) v0`.
    fn drift_term(&self, n: usize, j: usize) -> f64 {
        if self.log_space(n) {
            (n as f64 * self.lambda.ln() + (j - 1) as f64 * self.big_b.ln() + self.v0.ln()).exp()
        } else {
            self.lambda.powi(n as i32) * self.big_b.powi(j as i32 - 1) * self.v0
        }
    }
}

fn pow_policy(base: f64, e: usize, log_space: bool) -> f64 {
    if e == 0 {
        1.0
    } else if base == 0.0 {
        0.0
    } else if log_space {
        (e as f64 * base.ln()).exp()
    } else {
        base.powi(e as i32)
    }
}

fn check_j(n: usize, j: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("n", "n must be >= 1"));
    }
    if j == 0 || j > n + 1 {
        return Err(invalid("j", format!("j = {j} must lie in 1..={}", n + 1)));
    }
    Ok(())
}

/// `2 (1-eps)^j 1(j <= n) + 2 lambda^n B^(j-1) v0`, unclamped.
pub fn bound_tv_homog(inp: &HomogeneousBoundInput, n: usize, j: usize) -> Result<f64> {
    inp.validate()?;
    check_j(n, j)?;
    let first = if j <= n { 2.0 * inp.coupling_term(n, j) } else { 0.0 };
    Ok(first + 2.0 * inp.drift_term(n, j))
}

/// `2 (1-eps)^j (b/(1-lambda) + lambda^n v0) 1(j <= n) + 2 lambda^n B^(j-1) v0`.
pub fn bound_f_homog(inp: &HomogeneousBoundInput, n: usize, j: usize) -> Result<f64> {
    inp.validate()?;
    check_j(n, j)?;
    let first = if j <= n {
        let lam_n = pow_policy(inp.lambda, n, inp.log_space(n));
        2.0 * inp.coupling_term(n, j) * (inp.b / (1.0 - inp.lambda) + lam_n * inp.v0)
    } else {
        0.0
    };
    Ok(first + 2.0 * inp.drift_term(n, j))
}

/// Exhaustive scan of `j = 1..=n+1`; the smallest minimiser wins ties.
pub fn optimize_j(inp: &HomogeneousBoundInput, n: usize, kind: BoundKind) -> Result<(usize, f64)> {
    let eval = |j| match kind {
        BoundKind::Tv => bound_tv_homog(inp, n, j),
        BoundKind::F => bound_f_homog(inp, n, j),
    };
    argmin_j(n, eval)
}

fn argmin_j(n: usize, mut eval: impl FnMut(usize) -> Result<f64>) -> Result<(usize, f64)> {
    let mut best = (1, eval(1)?);
    for j in 2..=n + 1 {
        let v = eval(j)?;
        if v < best.1 {
            best = (j, v);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundPoint {
    pub n: usize,
    pub j_star_tv: usize,
    pub tv_bound: f64,
    pub j_star_f: usize,
    pub f_bound: f64,
}

/// Optimised bounds for `n = 1..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCurve {
    pub points: Vec<BoundPoint>,
}

impl BoundCurve {
    pub fn homogeneous(inp: &HomogeneousBoundInput, n_max: usize, clamp: bool) -> Result<Self> {
        let mut points = Vec::with_capacity(n_max);
        for n in 1..=n_max {
            let (j_star_tv, tv) = optimize_j(inp, n, BoundKind::Tv)?;
            let (j_star_f, f) = optimize_j(inp, n, BoundKind::F)?;
            points.push(BoundPoint {
                n,
                j_star_tv,
                tv_bound: if clamp { tv.min(2.0) } else { tv },
                j_star_f,
                f_bound: f,
            });
        }
        Ok(Self { points })
    }

    pub fn inhomogeneous(s: &InhomogeneousSchedule, n_max: usize, clamp: bool) -> Result<Self> {
        let mut points = Vec::with_capacity(n_max);
        for n in 1..=n_max {
            let (j_star_tv, tv) = optimize_j_inhom(s, n, BoundKind::Tv)?;
            let (j_star_f, f) = optimize_j_inhom(s, n, BoundKind::F)?;
            points.push(BoundPoint {
                n,
                j_star_tv,
                tv_bound: if clamp { tv.min(2.0) } else { tv },
                j_star_f,
                f_bound: f,
            });
        }
        Ok(Self { points })
    }
}

/// Asymptotic rate `limsup n^-1 log ||P^n(x,.) - pi||_f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateBound {
    pub rate: f64,
    /// `j(n) = floor(coeff * n)` realises the rate when `(M - eps)/lambda >= 1`.
    pub witness_coeff: Option<f64>,
}

impl RateBound {
    pub fn witness_j(&self, n: usize) -> Option<usize> {
        self.witness_coeff.map(|c| (c * n as f64).floor() as usize)
    }
}

/// `M = sup over the coupling set of Pbar Vbar`.
pub fn rate_bound(epsilon: f64, lambda: f64, m: f64) -> Result<RateBound> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(invalid("epsilon", "epsilon must lie in (0,1]"));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(invalid("lambda", "lambda must lie in (0,1)"));
    }
    if !(m >= epsilon) {
        return Err(invalid("M", "M must be >= epsilon"));
    }
    let ratio = (m - epsilon) / lambda;
    if ratio < 1.0 || epsilon >= 1.0 {
        return Ok(RateBound { rate: lambda.ln(), witness_coeff: None });
    }
    let log_keep = (1.0 - epsilon).ln();
    let denom = ratio.ln() - log_keep;
    Ok(RateBound {
        rate: -lambda.ln() * log_keep / denom,
        witness_coeff: Some(-lambda.ln() / denom),
    })
}

/// Bivariate `(lambda, b)` from a univariate drift towards a small level set.
pub fn derive_s_params(lambda_c: f64, b_c: f64, c: f64, epsilon: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(invalid("epsilon", "epsilon must lie in [0,1)"));
    }
    if !(lambda_c > 0.0 && lambda_c < 1.0) {
        return Err(invalid("lambda_c", "lambda_c must lie in (0,1)"));
    }
    if !(b_c >= 0.0) {
        return Err(invalid("b_c", "b_c must be >= 0"));
    }
    if !(c >= 1.0) {
        return Err(invalid("c", "c must be >= 1"));
    }
    let lambda = lambda_c + b_c / (1.0 + c);
    if lambda >= 1.0 {
        return Err(BoundsError::SConditionViolated { value: lambda });
    }
    let excess = (c * epsilon * lambda_c / (1.0 - epsilon) - c * b_c / (1.0 + c)).max(0.0);
    Ok((lambda, excess + (b_c - epsilon) / (1.0 - epsilon)))
}

/// Constants of the univariate condition plus the two initial moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SConditionInput {
    pub epsilon: f64,
    pub lambda_c: f64,
    pub b_c: f64,
    pub c: f64,
    pub xi_v: f64,
    pub xi_prime_v: f64,
    #[serde(default)]
    pub sup_rv: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem5Bounds {
    pub tv: f64,
    pub f: f64,
    pub lambda: f64,
    pub b: f64,
    pub big_b: f64,
    pub sup_rv: f64,
    /// `sup_C RV` was replaced by `(lambda_c c + b_c - eps)/(1 - eps)`.
    pub surrogate: bool,
    /// The surrogate was negative and clamped at zero.
    pub clamped: bool,
}

impl SConditionInput {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(invalid("epsilon", "epsilon must lie in (0,1]"));
        }
        if !(self.xi_v >= 1.0 && self.xi_prime_v >= 1.0) {
            return Err(invalid("xi_v", "xi(V) and xi'(V) must be >= 1"));
        }
        if let Some(s) = self.sup_rv {
            if !(s >= 0.0) {
                return Err(invalid("sup_rv", "sup_C RV must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Bounds in TV and V-norm under the univariate condition, with
/// `xi(V) + xi'(V)` in place of `2 (xi x xi')(Vbar)`.
pub fn theorem5_bounds(inp: &SConditionInput, n: usize, j: usize) -> Result<Theorem5Bounds> {
    inp.validate()?;
    if inp.epsilon >= 1.0 {
        return Err(BoundsError::ResidualUndefined);
    }
    let (lambda, b) = derive_s_params(inp.lambda_c, inp.b_c, inp.c, inp.epsilon)?;
    let (raw, surrogate) = match inp.sup_rv {
        Some(s) => (s, false),
        None => ((inp.lambda_c * inp.c + inp.b_c - inp.epsilon) / (1.0 - inp.epsilon), true),
    };
    let clamped = raw < 0.0;
    let sup_rv = raw.max(0.0);
    let big_b = ((1.0 - inp.epsilon) * sup_rv / lambda).max(1.0);
    let hom = HomogeneousBoundInput::new(inp.epsilon, lambda, b.max(0.0), big_b, 0.5 * (inp.xi_v + inp.xi_prime_v))?;
    Ok(Theorem5Bounds {
        tv: bound_tv_homog(&hom, n, j)?,
        f: bound_f_homog(&hom, n, j)?,
        lambda,
        b,
        big_b,
        sup_rv,
        surrogate,
        clamped,
    })
}

/// Largest product over `j`-subsets of nonnegative values: the `j` largest. `j = 0` gives 1.
pub fn extremal_subset_product(values: &[f64], j: usize) -> Result<f64> {
    Ok(log_extremal_subset_product(values, j)?.exp())
}

fn top_j(values: &[f64], j: usize) -> Result<Vec<f64>> {
    if j > values.len() {
        return Err(invalid("j", format!("j = {j} exceeds {} values", values.len())));
    }
    if values.iter().any(|v| !(*v >= 0.0)) {
        return Err(invalid("values", "values must be >= 0"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.truncate(j);
    Ok(sorted)
}

fn log_extremal_subset_product(values: &[f64], j: usize) -> Result<f64> {
    Ok(top_j(values, j)?.iter().map(|v| v.ln()).sum())
}

fn linear_extremal_subset_product(values: &[f64], j: usize) -> Result<f64> {
    Ok(top_j(values, j)?.iter().product())
}

/// Per-step constants: `eps_seq[k-1] = eps_k`, `lambda_seq[s] = lambda_s`,
/// `b_seq[s] = b_s`, `big_b_seq[k-1] = B_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InhomogeneousSchedule {
    pub eps_seq: Vec<f64>,
    pub lambda_seq: Vec<f64>,
    pub b_seq: Vec<f64>,
    #[serde(rename = "B_seq")]
    pub big_b_seq: Vec<f64>,
    pub v0: f64,
}

impl InhomogeneousSchedule {
    pub fn constant(inp: &HomogeneousBoundInput, len: usize) -> Self {
        Self {
            eps_seq: vec![inp.epsilon; len],
            lambda_seq: vec![inp.lambda; len],
            b_seq: vec![inp.b; len],
            big_b_seq: vec![inp.big_b; len],
            v0: inp.v0,
        }
    }

    pub fn len(&self) -> usize {
        self.eps_seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps_seq.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.eps_seq.len();
        for (name, len) in [
            ("lambda_seq", self.lambda_seq.len()),
            ("b_seq", self.b_seq.len()),
            ("B_seq", self.big_b_seq.len()),
        ] {
            if len != n {
                return Err(invalid(
                    match name {
                        "lambda_seq" => "lambda_seq",
                        "b_seq" => "b_seq",
                        _ => "B_seq",
                    },
                    format!("length {len} differs from eps_seq length {n}"),
                ));
            }
        }
        if self.eps_seq.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(invalid("eps_seq", "each eps_k must lie in [0,1]"));
        }
        if self.lambda_seq.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(invalid("lambda_seq", "each lambda_k must lie in [0,1]"));
        }
        if self.b_seq.iter().any(|b| !(*b >= 0.0)) {
            return Err(invalid("b_seq", "each b_k must be >= 0"));
        }
        if self.big_b_seq.iter().any(|b| !(*b >= 1.0)) {
            return Err(invalid("B_seq", "each B_k must be >= 1"));
        }
        if !(self.v0 >= 1.0) {
            return Err(invalid("v0", "v0 must be >= 1"));
        }
        Ok(())
    }

    /// `D_n` by `D_0 = v0`, `D_{k+1} = lambda_k D_k + b_k`.
    pub fn d_n(&self, n: usize) -> f64 {
        self.lambda_seq[..n]
            .iter()
            .zip(&self.b_seq[..n])
            .fold(self.v0, |d, (l, b)| l * d + b)
    }

    fn log_space(&self, n: usize) -> bool {
        n > LOG_SPACE_STEPS || self.big_b_seq[..n].iter().any(|b| *b > LOG_SPACE_B)
    }
}

/// Time-inhomogeneous bound; reduces to the homogeneous TV bound for constant schedules.
pub fn bound_inhom(s: &InhomogeneousSchedule, n: usize, j: usize, kind: BoundKind) -> Result<f64> {
    s.validate()?;
    check_j(n, j)?;
    if s.len() < n {
        return Err(invalid("n", format!("schedule has {} steps, n = {n}", s.len())));
    }
    let keep: Vec<f64> = s.eps_seq[..n].iter().map(|e| 1.0 - e).collect();
    let big_b = &s.big_b_seq[..n];
    let log_space = s.log_space(n);
    let first = if j <= n {
        let weight = match kind {
            BoundKind::Tv => 1.0,
            BoundKind::F => s.d_n(n),
        };
        let keep_j = if log_space {
            extremal_subset_product(&keep, j)?
        } else {
            linear_extremal_subset_product(&keep, j)?
        };
        2.0 * keep_j * weight
    } else {
        0.0
    };
    let second = if log_space {
        let log_lam: f64 = s.lambda_seq[..n].iter().map(|l| l.ln()).sum();
        2.0 * (log_lam + log_extremal_subset_product(big_b, j - 1)? + s.v0.ln()).exp()
    } else {
        let lam: f64 = s.lambda_seq[..n].iter().product();
        2.0 * lam * linear_extremal_subset_product(big_b, j - 1)? * s.v0
    };
    Ok(first + second)
}

pub fn optimize_j_inhom(s: &InhomogeneousSchedule, n: usize, kind: BoundKind) -> Result<(usize, f64)> {
    argmin_j(n, |j| bound_inhom(s, n, j, kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn inp(e: f64, l: f64, b: f64, bb: f64, v0: f64) -> HomogeneousBoundInput {
        HomogeneousBoundInput::new(e, l, b, bb, v0).unwrap()
    }

    #[test]
    fn tv_examples() {
        assert_abs_diff_eq!(bound_tv_homog(&inp(0.3, 0.5, 0.0, 1.0, 1.0), 1, 2).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(bound_tv_homog(&inp(0.5, 0.5, 0.0, 1.0, 1.0), 3, 2).unwrap(), 0.75, epsilon = 1e-15);
        let i = inp(1.0, 0.7, 0.0, 1.5, 3.0);
        assert_abs_diff_eq!(
            bound_tv_homog(&i, 5, 2).unwrap(),
            2.0 * 0.7_f64.powi(5) * 1.5 * 3.0,
            epsilon = 1e-15
        );
        assert!(bound_tv_homog(&i, 5, 0).is_err());
        assert!(bound_tv_homog(&i, 5, 7).is_err());
    }

    #[test]
    fn f_examples() {
        let i = inp(0.5, 0.5, 0.0, 2.0, 2.0);
        assert_abs_diff_eq!(
            bound_f_homog(&i, 4, 5).unwrap(),
            bound_tv_homog(&i, 4, 5).unwrap(),
            epsilon = 1e-15
        );
        // high-precision oracle value
        assert_abs_diff_eq!(bound_f_homog(&inp(0.5, 0.5, 1.0, 2.0, 2.0), 4, 2).unwrap(), 1.5625, epsilon = 1e-14);
        let i = inp(1.0, 0.5, 3.0, 2.0, 2.0);
        assert_abs_diff_eq!(bound_f_homog(&i, 4, 2).unwrap(), 2.0 * 0.0625 * 2.0 * 2.0, epsilon = 1e-15);
        assert!(HomogeneousBoundInput::new(0.5, 1.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn optimize_examples() {
        let i = inp(0.3, 0.6, 0.0, 1.0, 2.0);
        let (j, v) = optimize_j(&i, 10, BoundKind::Tv).unwrap();
        assert_eq!(j, 11);
        assert_abs_diff_eq!(v, 2.0 * 0.6_f64.powi(10) * 2.0, epsilon = 1e-15);
        let i = inp(1.0, 0.6, 0.0, 1.3, 2.0);
        let (j, v) = optimize_j(&i, 10, BoundKind::Tv).unwrap();
        assert_eq!(j, 1);
        assert_abs_diff_eq!(v, 2.0 * 0.6_f64.powi(10) * 2.0, epsilon = 1e-15);
        // exhaustive-scan oracle value
        let (j, v) = optimize_j(&inp(0.5, 0.5, 0.0, 1.2, 10.0), 20, BoundKind::Tv).unwrap();
        assert_eq!(j, 15);
        assert_abs_diff_eq!(v, 3.0592316905e-4, epsilon = 1e-15);
    }

    #[test]
    fn rate_examples() {
        let r = rate_bound(0.5, 0.5, 1.5).unwrap();
        assert_abs_diff_eq!(r.rate, -0.346_573_590_279_972_65, epsilon = 1e-14);
        assert!(r.witness_coeff.is_some());
        let r = rate_bound(0.5, 0.8, 1.0).unwrap();
        assert_abs_diff_eq!(r.rate, 0.8_f64.ln(), epsilon = 1e-15);
        assert_eq!(r.witness_j(10), None);
        let r = rate_bound(1.0, 0.5, 3.0).unwrap();
        assert_abs_diff_eq!(r.rate, 0.5_f64.ln(), epsilon = 1e-15);
        let near = rate_bound(1.0 - 1e-12, 0.5, 3.0).unwrap();
        assert!((near.rate - 0.5_f64.ln()).abs() < 0.05);
        assert!(rate_bound(0.5, 0.5, 0.4).is_err());
    }

    #[test]
    fn s_params_examples() {
        let (l, b) = derive_s_params(0.5, 1.0, 9.0, 0.5).unwrap();
        assert_abs_diff_eq!(l, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 4.6, epsilon = 1e-14);
        let (l, b) = derive_s_params(0.5, 1.0, 9.0, 0.0).unwrap();
        assert_abs_diff_eq!(l, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 1.0, epsilon = 1e-15);
        assert!(matches!(
            derive_s_params(0.5, 5.0, 9.0, 0.5),
            Err(BoundsError::SConditionViolated { .. })
        ));
    }

    #[test]
    fn theorem5_examples() {
        let s = SConditionInput { epsilon: 0.5, lambda_c: 0.5, b_c: 1.0, c: 9.0, xi_v: 1.0, xi_prime_v: 1.0, sup_rv: None };
        let t = theorem5_bounds(&s, 10, 3).unwrap();
        assert!(t.surrogate && !t.clamped);
        assert_abs_diff_eq!(t.sup_rv, 10.0, epsilon = 1e-14);
        assert_abs_diff_eq!(t.big_b, 25.0 / 3.0, epsilon = 1e-13);
        assert_abs_diff_eq!(t.tv, 1.089808, epsilon = 1e-12);
        assert_abs_diff_eq!(t.f, 3.7163196544, epsilon = 1e-12);
        let t = theorem5_bounds(&s, 10, 11).unwrap();
        approx::assert_relative_eq!(t.tv, 0.6_f64.powi(10) * (25.0_f64 / 3.0).powi(10) * 2.0, max_relative = 1e-13);

        let neg = SConditionInput { epsilon: 0.9, lambda_c: 0.05, b_c: 0.1, c: 1.0, ..s };
        let t = theorem5_bounds(&neg, 5, 2).unwrap();
        assert!(t.clamped);
        assert_eq!(t.big_b, 1.0);
    }

    #[test]
    fn extremal_examples() {
        let v = [0.9, 0.5, 0.7];
        let mut brute = 0.0_f64;
        for a in 0..3 {
            for b in a + 1..3 {
                brute = brute.max(v[a] * v[b]);
            }
        }
        assert_abs_diff_eq!(extremal_subset_product(&v, 2).unwrap(), brute, epsilon = 1e-15);
        assert_abs_diff_eq!(brute, 0.63, epsilon = 1e-15);
        assert_eq!(extremal_subset_product(&v, 0).unwrap(), 1.0);
        assert_abs_diff_eq!(extremal_subset_product(&v, 3).unwrap(), 0.315, epsilon = 1e-15);
        assert!(extremal_subset_product(&v, 4).is_err());
    }

    #[test]
    fn inhom_examples() {
        let s = InhomogeneousSchedule {
            eps_seq: vec![0.1, 0.2],
            lambda_seq: vec![0.5, 0.8],
            b_seq: vec![1.0, 2.0],
            big_b_seq: vec![1.0, 1.0],
            v0: 1.0,
        };
        assert_abs_diff_eq!(s.d_n(2), 3.2, epsilon = 1e-15);
        // literal sum-product form of D_n
        let lit = 0.5 * 0.8 * 1.0 + 0.8 * 1.0 + 2.0;
        assert_abs_diff_eq!(s.d_n(2), lit, epsilon = 1e-15);

        let s = InhomogeneousSchedule {
            eps_seq: vec![0.3, 1.0, 0.6],
            lambda_seq: vec![0.9; 3],
            b_seq: vec![0.0; 3],
            big_b_seq: vec![1.0; 3],
            v0: 1.0,
        };
        let tv = bound_inhom(&s, 3, 1, BoundKind::Tv).unwrap();
        // singleton brute force: max(1 - eps_l) = 0.7
        assert_abs_diff_eq!(tv, 2.0 * 0.7 + 2.0 * 0.9_f64.powi(3), epsilon = 1e-15);

        let bad = InhomogeneousSchedule { b_seq: vec![0.0; 2], ..s.clone() };
        assert!(bound_inhom(&bad, 2, 1, BoundKind::Tv).is_err());
    }

    #[test]
    fn constant_schedule_reduces_to_homogeneous() {
        let i = inp(0.3, 0.7, 0.0, 1.4, 2.5);
        let s = InhomogeneousSchedule::constant(&i, 30);
        for n in 1..=30 {
            for j in 1..=n + 1 {
                let h = bound_tv_homog(&i, n, j).unwrap();
                let g = bound_inhom(&s, n, j, BoundKind::Tv).unwrap();
                assert!((h - g).abs() <= 1e-12 * h.max(1.0));
                let h = bound_f_homog(&i, n, j).unwrap();
                let g = bound_inhom(&s, n, j, BoundKind::F).unwrap();
                assert!((h - g).abs() <= 1e-12 * h.max(1.0));
            }
        }
    }

    #[test]
    fn log_space_agrees_with_linear() {
        let i = inp(0.2, 0.9, 0.5, 12.0, 3.0);
        let v = bound_tv_homog(&i, 20, 4).unwrap();
        let lin = 2.0 * 0.8_f64.powi(4) + 2.0 * 0.9_f64.powi(20) * 12.0_f64.powi(3) * 3.0;
        assert_abs_diff_eq!(v, lin, epsilon = 1e-12 * lin);
        let far = bound_tv_homog(&inp(0.2, 0.9, 0.0, 1.5, 1.0), 5000, 5001).unwrap();
        assert!(far.is_finite() || far == f64::INFINITY);
    }

    proptest! {
        #[test]
        fn f_dominates_tv(e in 0.01..1.0_f64, l in 0.01..0.99_f64, b in 0.0..5.0_f64,
                          bb in 1.0..3.0_f64, v0 in 1.0..10.0_f64, n in 1usize..40, jf in 0.0..1.0_f64) {
            let i = inp(e, l, b, bb, v0);
            let j = 1 + ((n as f64) * jf) as usize;
            prop_assume!(b / (1.0 - l) + l.powi(n as i32) * v0 >= 1.0);
            prop_assert!(bound_f_homog(&i, n, j).unwrap() >= bound_tv_homog(&i, n, j).unwrap());
        }

        #[test]
        fn monotone_in_constants(e in 0.01..0.9_f64, l in 0.01..0.9_f64, b in 0.0..5.0_f64,
                                 bb in 1.0..3.0_f64, v0 in 1.0..10.0_f64, n in 1usize..40, d in 0.001..0.09_f64) {
            let base = inp(e, l, b, bb, v0);
            let tighter = [inp(e + d, l, b, bb, v0)];
            let looser = [inp(e, l + d, b, bb, v0), inp(e, l, b + d, bb, v0), inp(e, l, b, bb + d, v0), inp(e, l, b, bb, v0 + d)];
            for kind in [BoundKind::Tv, BoundKind::F] {
                let (_, v) = optimize_j(&base, n, kind).unwrap();
                for t in &tighter {
                    prop_assert!(optimize_j(t, n, kind).unwrap().1 <= v * (1.0 + 1e-12));
                }
                for t in &looser {
                    prop_assert!(optimize_j(t, n, kind).unwrap().1 >= v * (1.0 - 1e-12));
                }
            }
        }

        #[test]
        fn extremal_matches_brute_force(vals in proptest::collection::vec(0.0..3.0_f64, 1..12), jf in 0.0..1.0_f64) {
            let j = ((vals.len() as f64) * jf).round() as usize;
            let k = vals.len();
            let mut best = if j == 0 { 1.0 } else { 0.0_f64 };
            for mask in 0u32..(1 << k) {
                if mask.count_ones() as usize == j && j > 0 {
                    let p: f64 = (0..k).filter(|i| mask >> i & 1 == 1).map(|i| vals[i]).product();
                    best = best.max(p);
                }
            }
            let got = extremal_subset_product(&vals, j).unwrap();
            prop_assert!((got - best).abs() <= 1e-12 * best.max(1.0));
        }
    }
}
