//! Random-walk Metropolis-Hastings at inverse temperature `gamma`, its drift and
//! minorization constants, a logarithmic cooling schedule, and the annealing runner.
//!
//! Quantities built on `V_s = exp(s f)` overflow quickly, so `b`, `c0` and `c`
//! are stored as logarithms and every drift inequality is checked after
//! dividing through by `V_s`.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::densities::Density1d;
use crate::error::{invalid, BoundsError, Result};
use crate::quadrature::integrate_with_breaks;
use crate::registry::{positive_param, Registry};
use crate::rng::{replica_rng, SimRng};

/// Absolute tolerance for densities, normalisers and kernel integrals.
pub const QUAD_TOL: f64 = 1e-10;
/// Truncated tail mass allowed for `pi_gamma`.
pub const TAIL_TOL: f64 = 1e-12;
/// Margin applied to the grid maximum defining `b`.
pub const B_MARGIN: f64 = 1.01;
/// Multiples of `gamma_underline` on which `b` is maximised and the drift checked.
pub const GAMMA_GRID: [f64; 8] = [1.0, 1.25, 1.5, 2.0, 3.0, 5.0, 7.5, 10.0];

pub trait Objective: Send + Sync {
    fn name(&self) -> String;
    fn f(&self, x: f64) -> f64;
    fn df(&self, x: f64) -> f64;
    fn d2f(&self, x: f64) -> f64;
    /// Slope in `f(y) - f(x) >= alpha (y - x)` for `y >= x >= x1` (mirrored on the left).
    fn alpha(&self) -> f64;
    fn x1(&self) -> f64;
    /// Global minimisers.
    fn minima(&self) -> Vec<f64>;
    /// Stationary points, used as candidates when optimising over intervals.
    fn critical_points(&self) -> Vec<f64> {
        self.minima()
    }
    fn f_min(&self) -> f64 {
        self.minima().iter().map(|m| self.f(*m)).fold(f64::INFINITY, f64::min)
    }
    /// All `y` with `f(y) = level`.
    fn level_points(&self, level: f64) -> Vec<f64> {
        scan_roots(|y| self.f(y) - level, -50.0, 50.0, 10_000)
    }
}

fn scan_roots(g: impl Fn(f64) -> f64, lo: f64, hi: f64, cells: usize) -> Vec<f64> {
    let h = (hi - lo) / cells as f64;
    let mut out = Vec::new();
    let mut a = lo;
    let mut ga = g(a);
    for i in 1..=cells {
        let b = lo + h * i as f64;
        let gb = g(b);
        if ga == 0.0 {
            out.push(a);
        } else if ga * gb < 0.0 {
            let (mut l, mut r) = (a, b);
            for _ in 0..80 {
                let m = 0.5 * (l + r);
                if g(m) * ga > 0.0 {
                    l = m;
                } else {
                    r = m;
                }
            }
            out.push(0.5 * (l + r));
        }
        a = b;
        ga = gb;
    }
    out
}

/// `f(x) = k x^2 / 2`.
pub struct Quadratic {
    k: f64,
}

impl Objective for Quadratic {
    fn name(&self) -> String {
        format!("quadratic:{}", self.k)
    }
    fn f(&self, x: f64) -> f64 {
        0.5 * self.k * x * x
    }
    fn df(&self, x: f64) -> f64 {
        self.k * x
    }
    fn d2f(&self, _x: f64) -> f64 {
        self.k
    }
    fn alpha(&self) -> f64 {
        1.0
    }
    fn x1(&self) -> f64 {
        1.0 / self.k
    }
    fn minima(&self) -> Vec<f64> {
        vec![0.0]
    }
    fn level_points(&self, level: f64) -> Vec<f64> {
        if level < 0.0 {
            return vec![];
        }
        let r = (2.0 * level / self.k).sqrt();
        vec![-r, r]
    }
}

/// `f(x) = (x^2 - 1)^2`.
pub struct DoubleWell;

impl Objective for DoubleWell {
    fn name(&self) -> String {
        "doublewell".into()
    }
    fn f(&self, x: f64) -> f64 {
        let u = x * x - 1.0;
        u * u
    }
    fn df(&self, x: f64) -> f64 {
        4.0 * x * (x * x - 1.0)
    }
    fn d2f(&self, x: f64) -> f64 {
        12.0 * x * x - 4.0
    }
    fn alpha(&self) -> f64 {
        1.0
    }
    fn x1(&self) -> f64 {
        1.5
    }
    fn minima(&self) -> Vec<f64> {
        vec![-1.0, 1.0]
    }
    fn critical_points(&self) -> Vec<f64> {
        vec![-1.0, 0.0, 1.0]
    }
    fn level_points(&self, level: f64) -> Vec<f64> {
        if level < 0.0 {
            return vec![];
        }
        let r = level.sqrt();
        let mut out = vec![-(1.0 + r).sqrt(), (1.0 + r).sqrt()];
        if r <= 1.0 {
            let inner = (1.0 - r).sqrt();
            out.extend([-inner, inner]);
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

pub fn objective_registry() -> Registry<dyn Objective> {
    Registry::new("objective")
        .with("quadratic", |p| Ok(Box::new(Quadratic { k: positive_param(p, 1.0, "k")? }) as _))
        .with("doublewell", |p| match p {
            None => Ok(Box::new(DoubleWell) as _),
            Some(_) => Err(invalid("objective", "doublewell takes no parameter")),
        })
}

/// Grid check of the growth condition: worst `alpha (y - x) - (f(y) - f(x))` over `x1 <= x <= y <= x_max` and mirror.
pub fn growth_violation(obj: &dyn Objective, x_max: f64, points: usize) -> f64 {
    let (a, x1) = (obj.alpha(), obj.x1());
    let h = (x_max - x1) / points as f64;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..=points {
        let x = x1 + h * i as f64;
        for j in i..=points {
            let y = x1 + h * j as f64;
            worst = worst.max(a * (y - x) - (obj.f(y) - obj.f(x)));
            worst = worst.max(a * (y - x) - (obj.f(-y) - obj.f(-x)));
        }
    }
    worst
}

/// `1 ^ exp(-gamma (f(y) - f(x)))`.
pub fn accept_prob(obj: &dyn Objective, x: f64, y: f64, gamma: f64) -> f64 {
    accept_from_delta(obj.f(y) - obj.f(x), gamma)
}

fn accept_from_delta(delta: f64, gamma: f64) -> f64 {
    if gamma == 0.0 || delta <= 0.0 {
        1.0
    } else {
        (-gamma * delta).exp()
    }
}

pub fn rwmh_step(obj: &dyn Objective, x: f64, gamma: f64, proposal: &dyn Density1d, rng: &mut SimRng) -> f64 {
    let y = x + proposal.sample(rng);
    let a = accept_prob(obj, x, y, gamma);
    if a >= 1.0 || rng.random::<f64>() < a {
        y
    } else {
        x
    }
}

/// `pi_gamma` on a truncated support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PiGamma {
    pub gamma: f64,
    pub half_width: f64,
    pub f_min: f64,
    /// `int exp(-gamma f)`.
    pub z_raw: f64,
    /// `int exp(-gamma f) / sup exp(-gamma f)`.
    pub z: f64,
}

fn support_half_width(obj: &dyn Objective, gamma: f64) -> f64 {
    let (a, x1) = (obj.alpha(), obj.x1());
    let f_edge = obj.f(x1).min(obj.f(-x1)) - obj.f_min();
    let reach = obj.minima().iter().fold(x1, |m, v| m.max(v.abs()));
    // tail beyond A is at most exp(-gamma f_edge) exp(-gamma a (A - x1)) / (gamma a) per side
    let need = ((-(TAIL_TOL * gamma * a).ln() - gamma * f_edge) / (gamma * a)).max(0.0);
    (x1 + need).max(reach + 1.0)
}

impl PiGamma {
    pub fn new(obj: &dyn Objective, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid("gamma", "gamma must be > 0"));
        }
        let f_min = obj.f_min();
        let half_width = support_half_width(obj, gamma);
        let z = integrate_with_breaks(
            |x| (-gamma * (obj.f(x) - f_min)).exp(),
            -half_width,
            half_width,
            &obj.critical_points(),
            QUAD_TOL,
        )?
        .value;
        Ok(Self { gamma, half_width, f_min, z_raw: z * (-gamma * f_min).exp(), z })
    }

    pub fn density(&self, obj: &dyn Objective, x: f64) -> f64 {
        if x.abs() > self.half_width {
            return 0.0;
        }
        (-self.gamma * (obj.f(x) - self.f_min)).exp() / self.z
    }

    /// Mass of `[a, b]`.
    pub fn mass(&self, obj: &dyn Objective, a: f64, b: f64) -> Result<f64> {
        let (a, b) = (a.max(-self.half_width), b.min(self.half_width));
        if a >= b {
            return Ok(0.0);
        }
        Ok(integrate_with_breaks(|x| self.density(obj, x), a, b, &obj.critical_points(), QUAD_TOL)?.value)
    }
}

/// `sqrt(2 pi / gamma) sum_m f''(m)^(-1/2)` over the global minimisers.
pub fn laplace_z(gamma: f64, obj: &dyn Objective) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(invalid("gamma", "gamma must be > 0"));
    }
    let mut s = 0.0;
    for m in obj.minima() {
        let c = obj.d2f(m);
        if !(c > 0.0) {
            return Err(invalid("objective", format!("f'' = {c} at minimum {m} is not > 0")));
        }
        s += c.powf(-0.5);
    }
    Ok((2.0 * std::f64::consts::PI / gamma).sqrt() * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PiShift {
    pub bound: f64,
    pub exact_tv: f64,
    /// `(h/|h|)^gamma >= (h/|h|)^gamma'` held on the check grid.
    pub domination: bool,
}

/// `2 log(Z(gamma) / Z(gamma'))` against `int |pi_gamma - pi_gamma'|`.
pub fn pi_shift_tv_bound(gamma: f64, gamma_prime: f64, obj: &dyn Objective) -> Result<PiShift> {
    if gamma_prime < gamma {
        return Err(invalid("gamma_prime", "gamma' must be >= gamma"));
    }
    if gamma_prime == gamma {
        return Ok(PiShift { bound: 0.0, exact_tv: 0.0, domination: true });
    }
    let p = PiGamma::new(obj, gamma)?;
    let pp = PiGamma::new(obj, gamma_prime)?;
    let bound = 2.0 * (p.z / pp.z).ln();
    // densities cross where (gamma' - gamma)(f - f_min) = log(Z / Z')
    let level = p.f_min + (p.z / pp.z).ln() / (gamma_prime - gamma);
    let mut breaks = obj.level_points(level);
    breaks.extend(obj.critical_points());
    let a = p.half_width.max(pp.half_width);
    let exact_tv = integrate_with_breaks(|x| (p.density(obj, x) - pp.density(obj, x)).abs(), -a, a, &breaks, QUAD_TOL)?.value;
    let f_min = p.f_min;
    let domination = (0..=4000).all(|i| {
        let x = -a + 2.0 * a * i as f64 / 4000.0;
        let g = obj.f(x) - f_min;
        (-gamma * g).exp() >= (-gamma_prime * g).exp()
    });
    Ok(PiShift { bound, exact_tv, domination })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinorizationGamma {
    /// `inf_{x, y in C} q(y - x)`.
    pub eps: f64,
    /// Oscillation of `f` on `C`.
    pub d: f64,
    pub len: f64,
    pub eps_gamma: f64,
}

impl MinorizationGamma {
    /// `log eps_gamma`, finite even when `eps_gamma` underflows.
    pub fn ln_eps_gamma(&self, gamma: f64) -> f64 {
        self.eps.ln() - gamma * self.d + self.len.ln()
    }
}

/// Oscillation `sup_C f - inf_C f` on `[lo, hi]`.
pub fn oscillation(obj: &dyn Objective, lo: f64, hi: f64) -> f64 {
    let mut cands: Vec<f64> = (0..=10_000).map(|i| lo + (hi - lo) * i as f64 / 10_000.0).collect();
    cands.extend(obj.critical_points().into_iter().filter(|c| (lo..=hi).contains(c)));
    let (mn, mx) = cands
        .iter()
        .map(|x| obj.f(*x))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    mx - mn
}

/// Uniform minorization of `K_gamma` on the interval `[lo, hi]` with `nu` uniform on it.
pub fn minorization_gamma(lo: f64, hi: f64, gamma: f64, proposal: &dyn Density1d, obj: &dyn Objective) -> Result<MinorizationGamma> {
    if !(hi > lo) {
        return Err(invalid("C", "coupling interval must have positive length"));
    }
    let len = hi - lo;
    let eps = if proposal.symmetric_unimodal() {
        proposal.pdf(len)
    } else {
        (0..=10_000).map(|i| proposal.pdf(-len + 2.0 * len * i as f64 / 10_000.0)).fold(f64::INFINITY, f64::min)
    };
    if !(eps > 0.0) {
        return Err(BoundsError::DegenerateMinorization { x: 0, x_prime: 0 });
    }
    let d = oscillation(obj, lo, hi);
    Ok(MinorizationGamma { eps, d, len, eps_gamma: eps * (-gamma * d).exp() * len })
}

/// `1 - t^(gamma/s) + t^((gamma - s)/s)` with `t = (gamma - s)/gamma`.
pub fn r_gamma_s(gamma: f64, s: f64) -> Result<f64> {
    if !(s > 0.0 && s < gamma) {
        return Err(invalid("s", "need 0 < s < gamma"));
    }
    let lt = ((gamma - s) / gamma).ln();
    Ok(1.0 - (gamma / s * lt).exp() + ((gamma - s) / s * lt).exp())
}

/// `u^-s (u^gamma ^ 1) + 1 - (u^gamma ^ 1)`.
pub fn phi_gamma_s(gamma: f64, s: f64, u: f64) -> f64 {
    let a = if u >= 1.0 { 1.0 } else { u.powf(gamma) };
    u.powf(-s) * a + 1.0 - a
}

/// `phi_{gamma,s}(exp(-delta))`, stable for large `|delta|`.
fn phi_of_delta(gamma: f64, s: f64, delta: f64) -> f64 {
    if delta <= 0.0 {
        (s * delta).exp()
    } else {
        (-(gamma - s) * delta).exp() + 1.0 - (-gamma * delta).exp()
    }
}

/// `K_gamma V_s(x) / V_s(x)` by quadrature over the proposal increment.
pub fn drift_ratio(obj: &dyn Objective, proposal: &dyn Density1d, gamma: f64, s: f64, x: f64) -> Result<f64> {
    let r = proposal.radius(1e-14);
    let fx = obj.f(x);
    let mut breaks: Vec<f64> = obj.level_points(fx).into_iter().map(|y| y - x).collect();
    breaks.extend(proposal.kinks());
    breaks.push(0.0);
    Ok(integrate_with_breaks(
        |z| proposal.pdf(z) * phi_of_delta(gamma, s, obj.f(x + z) - fx),
        -r,
        r,
        &breaks,
        QUAD_TOL,
    )?
    .value)
}

/// Constants of the drift towards `{V_s <= c}` uniformly in `gamma >= gamma_underline`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftConstants {
    pub beta: f64,
    pub eps_slack: f64,
    pub m: f64,
    pub s: f64,
    pub x_underline: f64,
    pub gamma_underline: f64,
    pub r_target: f64,
    pub lambda0: f64,
    pub lambda: f64,
    pub ln_b: f64,
    pub ln_c0: f64,
    pub ln_c: f64,
    /// The `gamma` values over which `b` was maximised.
    pub gamma_grid: Vec<f64>,
}

impl DriftConstants {
    /// `{V_s <= c} = {f <= ln c / s}`.
    pub fn level(&self) -> f64 {
        self.ln_c / self.s
    }
}

fn bisect(mut lo: f64, mut hi: f64, ok: impl Fn(f64) -> bool, iters: usize) -> f64 {
    // invariant: !ok(lo), ok(hi)
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

/// Derives `(s, M, x_underline, gamma_underline, lambda0, lambda, b, c0, c)`.
/// `lambda` defaults to `(lambda0 + 1)/2`.
pub fn derive_drift_constants(
    obj: &dyn Objective,
    proposal: &dyn Density1d,
    beta: f64,
    lambda: Option<f64>,
) -> Result<DriftConstants> {
    if !(beta > 0.5 && beta < 1.0) {
        return Err(invalid("beta", "beta must lie in (1/2, 1)"));
    }
    let eps_slack = (2.0 * beta - 1.0) / 3.0;
    let half = 0.5 * eps_slack;
    let r = proposal.radius(1e-15);
    let m = if proposal.sf(0.0) <= half { 0.0 } else { bisect(0.0, r, |t| proposal.sf(t) <= half, 200) };

    let alpha = obj.alpha();
    let inner = |s: f64| -> Result<f64> {
        Ok(integrate_with_breaks(|z| (alpha * s * z).exp() * proposal.pdf(z), -m, 0.0, &proposal.kinks(), QUAD_TOL)?.value)
    };
    let mut s_hi = 1.0;
    while inner(s_hi)? > half {
        s_hi *= 2.0;
        if s_hi > 1e8 {
            return Err(BoundsError::Infeasible("no drift exponent s found".into()));
        }
    }
    let s = bisect(0.0, s_hi, |s| inner(s).map(|v| v <= half).unwrap_or(false), 100);
    let x_underline = obj.x1() + m;

    let r_target = (beta - half) / (0.5 * (1.0 + eps_slack));
    let gamma_cap = 1e6;
    if r_gamma_s(gamma_cap, s)? > r_target {
        return Err(BoundsError::Infeasible(format!("r(gamma, s) stays above {r_target} for gamma <= 1e6")));
    }
    let gamma_underline = bisect(s, gamma_cap, |g| r_gamma_s(g, s).map(|r| r <= r_target).unwrap_or(false), 200);

    let lambda0 = beta;
    let lambda = lambda.unwrap_or(0.5 * (lambda0 + 1.0));
    if !(lambda > lambda0 && lambda < 1.0) {
        return Err(invalid("lambda", "lambda must lie in (lambda0, 1)"));
    }
    let xs = grid(-x_underline, x_underline, 1201);
    let ln_c0 = s * xs.iter().map(|x| obj.f(*x)).fold(f64::NEG_INFINITY, f64::max);
    let gamma_grid: Vec<f64> = GAMMA_GRID.iter().map(|k| k * gamma_underline).collect();
    let mut ln_b = f64::NEG_INFINITY;
    for &g in &gamma_grid {
        let vals: Vec<f64> = xs
            .par_iter()
            .map(|&x| drift_ratio(obj, proposal, g, s, x).map(|rho| (x, rho)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|(_, rho)| *rho > lambda0)
            .map(|(x, rho)| s * obj.f(x) + (rho - lambda0).ln())
            .collect();
        ln_b = vals.into_iter().fold(ln_b, f64::max);
    }
    ln_b += B_MARGIN.ln();
    // c = (b/(lambda - lambda0) - 1) v c0
    let t = ln_b - (lambda - lambda0).ln();
    let ln_c = if t > 0.0 { (t + (-(-t).exp()).ln_1p()).max(ln_c0) } else { ln_c0 };
    Ok(DriftConstants {
        beta,
        eps_slack,
        m,
        s,
        x_underline,
        gamma_underline,
        r_target,
        lambda0,
        lambda,
        ln_b,
        ln_c0,
        ln_c,
        gamma_grid,
    })
}

/// Largest excess over each drift inequality on the check grids (all in ratio form).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftVerification {
    /// `max (K V / V - r(gamma, s))` over `x in [-20, 20]`, `gamma in {2s, 4s, 10s}`.
    pub prop10_i: f64,
    /// `max (K V / V - beta)` over `x_underline <= |x| <= 20`, `gamma` on the `b` grid.
    pub prop10_ii: f64,
    /// Univariate drift with `(lambda0, b, c0)`.
    pub eq39: f64,
    /// Bivariate drift with `(lambda, b, c)`, relative to `Vbar`.
    pub eq40: f64,
}

impl DriftVerification {
    pub fn passes(&self, tol: f64) -> bool {
        [self.prop10_i, self.prop10_ii, self.eq39, self.eq40].iter().all(|v| *v <= tol)
    }
}

/// Grid checks of the derived constants; `points` nodes on `[-20, 20]`.
pub fn verify_drift_constants(
    obj: &dyn Objective,
    proposal: &dyn Density1d,
    dc: &DriftConstants,
    points: usize,
) -> Result<DriftVerification> {
    let s = dc.s;
    let mut xs = grid(-20.0, 20.0, points);
    xs.extend([-dc.x_underline, dc.x_underline]);
    xs.sort_by(f64::total_cmp);
    let ratios = |g: f64| -> Result<Vec<f64>> { xs.par_iter().map(|&x| drift_ratio(obj, proposal, g, s, x)).collect() };

    let mut prop10_i = f64::NEG_INFINITY;
    for k in [2.0, 4.0, 10.0] {
        let g = k * s;
        let r = r_gamma_s(g, s)?;
        prop10_i = ratios(g)?.into_iter().map(|rho| rho - r).fold(prop10_i, f64::max);
    }

    let level_c0 = dc.ln_c0 / s;
    let level_c = dc.ln_c / s;
    let (mut prop10_ii, mut eq39, mut eq40) = (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let fs: Vec<f64> = xs.iter().map(|x| obj.f(*x)).collect();
    for &g in &dc.gamma_grid {
        let rho = ratios(g)?;
        for (i, x) in xs.iter().enumerate() {
            if x.abs() >= dc.x_underline - 1e-12 {
                prop10_ii = prop10_ii.max(rho[i] - dc.beta);
            }
            let allowance = if fs[i] <= level_c0 { (dc.ln_b - s * fs[i]).exp() } else { 0.0 };
            eq39 = eq39.max(rho[i] - dc.lambda0 - allowance);
        }
        let worst = (0..xs.len())
            .into_par_iter()
            .map(|i| {
                let mut w = f64::NEG_INFINITY;
                for j in 0..xs.len() {
                    let (a, b) = (s * fs[i], s * fs[j]);
                    let top = a.max(b);
                    let (wa, wb) = ((a - top).exp(), (b - top).exp());
                    let vbar = 0.5 * (wa + wb);
                    let lhs = 0.5 * (wa * rho[i] + wb * rho[j]);
                    let in_c = fs[i] <= level_c && fs[j] <= level_c;
                    let rhs = dc.lambda * vbar + if in_c { (dc.ln_b - top).exp() } else { 0.0 };
                    w = w.max((lhs - rhs) / vbar);
                }
                w
            })
            .reduce(|| f64::NEG_INFINITY, f64::max);
        eq40 = eq40.max(worst);
    }
    Ok(DriftVerification { prop10_i, prop10_ii, eq39, eq40 })
}

/// `gamma_i = log(i + 1)/(d (1 + xi)) + gamma_underline`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoolingSchedule {
    pub d: f64,
    pub xi: f64,
    pub gamma_underline: f64,
}

impl CoolingSchedule {
    pub fn new(d: f64, xi: f64, gamma_underline: f64) -> Result<Self> {
        if !(d > 0.0 && d.is_finite()) {
            return Err(invalid("d", "d must be > 0"));
        }
        if !(xi >= 0.0) {
            return Err(invalid("xi", "xi must be >= 0"));
        }
        if !(gamma_underline >= 0.0) {
            return Err(invalid("gamma_underline", "gamma_underline must be >= 0"));
        }
        Ok(Self { d, xi, gamma_underline })
    }

    pub fn gamma(&self, i: usize) -> f64 {
        ((i + 1) as f64).ln() / (self.d * (1.0 + self.xi)) + self.gamma_underline
    }
}

/// Coupling level set `{f <= level}` as an interval hull.
pub fn level_interval(obj: &dyn Objective, level: f64) -> Result<(f64, f64)> {
    let pts = obj.level_points(level);
    if pts.len() < 2 {
        return Err(invalid("level", format!("{{f <= {level}}} is not a bounded interval")));
    }
    let lo = pts.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = pts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// Schedule whose `d` is the oscillation of `f` on the coupling level set of `dc`.
pub fn schedule_from_constants(obj: &dyn Objective, dc: &DriftConstants, xi: f64) -> Result<(CoolingSchedule, (f64, f64))> {
    let (lo, hi) = level_interval(obj, dc.level())?;
    Ok((CoolingSchedule::new(oscillation(obj, lo, hi), xi, dc.gamma_underline)?, (lo, hi)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checkpoint {
    pub n: usize,
    pub gamma_n: f64,
    /// `sum_bins |empirical - pi_{gamma_n}|` plus mass outside the binned range.
    pub tv_estimate: f64,
    /// `int |pi - binned pi|`: what the binning cannot resolve.
    pub binning_bias: f64,
    /// Expected `tv_estimate` for exact draws from `pi_{gamma_n}`, by the normal approximation.
    pub noise_floor: f64,
    /// Fraction of replicas within `MINIMUM_RADIUS` of each minimiser.
    pub mass_near_minima: Vec<f64>,
    pub mass_near_minima_se: Vec<f64>,
    pub histogram: Vec<usize>,
    pub outside: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnealingRun {
    pub replicas: usize,
    pub bin_edges: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
}

pub const BIN_WIDTH: f64 = 0.05;
pub const MINIMUM_RADIUS: f64 = 0.25;

/// Replicated annealing chains; step `i` uses `K_{gamma_i}`. Replica `r` uses stream `r` of `seed`.
pub fn run_annealing(
    obj: &dyn Objective,
    proposal: &dyn Density1d,
    sched: &CoolingSchedule,
    x0: f64,
    replicas: usize,
    checkpoints: &[usize],
    seed: u64,
) -> Result<AnnealingRun> {
    if replicas == 0 {
        return Err(invalid("replicas", "replicas must be >= 1"));
    }
    let mut cps = checkpoints.to_vec();
    cps.sort_unstable();
    cps.dedup();
    let n_max = *cps.last().ok_or_else(|| invalid("checkpoints", "need at least one checkpoint"))?;
    let states: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, r as u64);
            let mut x = x0;
            let mut out = Vec::with_capacity(cps.len());
            let mut next = 0;
            for i in 1..=n_max {
                x = rwmh_step(obj, x, sched.gamma(i), proposal, &mut rng);
                if i == cps[next] {
                    out.push(x);
                    next += 1;
                }
            }
            out
        })
        .collect();

    let a = support_half_width(obj, sched.gamma(1).max(f64::MIN_POSITIVE));
    let bins = (2.0 * a / BIN_WIDTH).ceil() as usize;
    let lo = -0.5 * bins as f64 * BIN_WIDTH;
    let edges: Vec<f64> = (0..=bins).map(|k| lo + BIN_WIDTH * k as f64).collect();
    let mf = replicas as f64;
    let mut out = Vec::with_capacity(cps.len());
    for (c, &n) in cps.iter().enumerate() {
        let gamma_n = sched.gamma(n);
        let pi = PiGamma::new(obj, gamma_n)?;
        let mut hist = vec![0usize; bins];
        let mut outside = 0;
        for s in &states {
            let x = s[c];
            let k = ((x - lo) / BIN_WIDTH).floor();
            if k >= 0.0 && (k as usize) < bins {
                hist[k as usize] += 1;
            } else {
                outside += 1;
            }
        }
        let cells: Vec<(f64, f64)> = (0..bins)
            .into_par_iter()
            .map(|k| {
                let (a, b) = (edges[k], edges[k + 1]);
                let mass = pi.mass(obj, a, b)?;
                let mean = mass / BIN_WIDTH;
                let mut breaks = obj.level_points(pi.f_min - (mean * pi.z).ln() / gamma_n);
                breaks.extend(obj.critical_points());
                let bias = integrate_with_breaks(|x| (pi.density(obj, x) - mean).abs(), a, b, &breaks, QUAD_TOL)?.value;
                Ok((mass, bias))
            })
            .collect::<Result<_>>()?;
        let tv = hist.iter().zip(&cells).map(|(h, (p, _))| (*h as f64 / mf - p).abs()).sum::<f64>() + outside as f64 / mf;
        let mass_near: Vec<f64> = obj
            .minima()
            .iter()
            .map(|m| states.iter().filter(|s| (s[c] - m).abs() <= MINIMUM_RADIUS).count() as f64 / mf)
            .collect();
        let se = mass_near.iter().map(|p| (p * (1.0 - p) / mf).sqrt()).collect();
        out.push(Checkpoint {
            n,
            gamma_n,
            tv_estimate: tv,
            binning_bias: cells.iter().map(|(_, b)| b).sum(),
            noise_floor: cells
                .iter()
                .map(|(p, _)| (2.0 * p * (1.0 - p) / (std::f64::consts::PI * mf)).sqrt())
                .sum(),
            mass_near_minima: mass_near,
            mass_near_minima_se: se,
            histogram: hist,
            outside,
        });
    }
    Ok(AnnealingRun { replicas, bin_edges: edges, checkpoints: out })
}

/// `max_y |(pi K_gamma)(y) - pi(y)|` over `points` nodes, each side by quadrature.
pub fn pi_invariance_residual(obj: &dyn Objective, proposal: &dyn Density1d, gamma: f64, points: usize) -> Result<f64> {
    let pi = PiGamma::new(obj, gamma)?;
    let a = pi.half_width;
    let r = proposal.radius(1e-14);
    let ys = grid(-a, a, points);
    let res: Vec<f64> = ys
        .par_iter()
        .map(|&y| {
            let fy = obj.f(y);
            let mut breaks = obj.level_points(fy);
            breaks.extend(obj.critical_points());
            breaks.extend(proposal.kinks().iter().map(|k| y - k));
            let inflow = integrate_with_breaks(
                |x| pi.density(obj, x) * accept_from_delta(fy - obj.f(x), gamma) * proposal.pdf(y - x),
                (y - r).max(-a),
                (y + r).min(a),
                &breaks,
                QUAD_TOL,
            )?
            .value;
            let zb: Vec<f64> = obj.level_points(fy).into_iter().map(|v| v - y).chain(proposal.kinks()).collect();
            let accept = integrate_with_breaks(|z| accept_from_delta(obj.f(y + z) - fy, gamma) * proposal.pdf(z), -r, r, &zb, QUAD_TOL)?.value;
            Ok((inflow + pi.density(obj, y) * (1.0 - accept) - pi.density(obj, y)).abs())
        })
        .collect::<Result<_>>()?;
    Ok(res.into_iter().fold(0.0, f64::max))
}
