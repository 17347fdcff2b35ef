//! Lipschitz autoregression `X_{k+1} = g(X_k) + Z_k` on the real line.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{bound_tv_homog, optimize_j, BoundKind, HomogeneousBoundInput};
use crate::chain::FiniteKernel;
use crate::coupling::{CouplingModel, MAX_REJECTIONS};
use crate::densities::{overlap_quadrature, Density1d};
use crate::error::{invalid, BoundsError, Result};
use crate::quadrature::integrate_with_breaks;
use crate::registry::Registry;
use crate::rng::{replica_rng, SimRng};

/// Number of shifts scanned when the noise is not declared symmetric unimodal.
pub const SHIFT_GRID: usize = 10_000;

pub trait ContractionMap: Send + Sync {
    fn name(&self) -> String;
    fn eval(&self, x: f64) -> f64;
    fn lipschitz(&self) -> f64;
}

pub struct Linear(f64);

impl ContractionMap for Linear {
    fn name(&self) -> String {
        format!("linear:{}", self.0)
    }
    fn eval(&self, x: f64) -> f64 {
        self.0 * x
    }
    fn lipschitz(&self) -> f64 {
        self.0.abs()
    }
}

/// `a tanh(x)`.
pub struct Tanh(f64);

impl ContractionMap for Tanh {
    fn name(&self) -> String {
        format!("tanh:{}", self.0)
    }
    fn eval(&self, x: f64) -> f64 {
        self.0 * x.tanh()
    }
    fn lipschitz(&self) -> f64 {
        self.0.abs()
    }
}

fn contraction_param(p: Option<f64>) -> Result<f64> {
    let a = p.ok_or_else(|| invalid("map", "map needs a coefficient, e.g. linear:0.5"))?;
    if !(a.abs() < 1.0) {
        return Err(invalid("map", format!("Lipschitz constant |{a}| must be < 1")));
    }
    Ok(a)
}

pub fn map_registry() -> Registry<dyn ContractionMap> {
    Registry::new("contraction map")
        .with("linear", |p| Ok(Box::new(Linear(contraction_param(p)?)) as _))
        .with("tanh", |p| Ok(Box::new(Tanh(contraction_param(p)?)) as _))
}

pub struct ArModel {
    map: Box<dyn ContractionMap>,
    noise: Box<dyn Density1d>,
    delta: f64,
    lambda: f64,
}

impl ArModel {
    pub fn new(map: Box<dyn ContractionMap>, noise: Box<dyn Density1d>, delta: f64, lambda: f64) -> Result<Self> {
        let l = map.lipschitz();
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(invalid("delta", "delta must be > 0"));
        }
        if !(lambda > l && lambda < 1.0) {
            return Err(invalid("lambda", format!("lambda must lie in (L, 1) = ({l}, 1)")));
        }
        let r = noise.radius(1e-12);
        let mass = integrate_with_breaks(|z| noise.pdf(z), -r, r, &noise.kinks(), 1e-10)?.value;
        if (mass - 1.0).abs() > 1e-8 {
            return Err(invalid("noise", format!("density integrates to {mass}, not 1")));
        }
        Ok(Self { map, noise, delta, lambda })
    }

    pub fn by_name(map: &str, noise: &str, delta: f64, lambda: f64) -> Result<Self> {
        Self::new(map_registry().build(map)?, crate::densities::density_registry().build(noise)?, delta, lambda)
    }

    pub fn g(&self, x: f64) -> f64 {
        self.map.eval(x)
    }

    pub fn lipschitz(&self) -> f64 {
        self.map.lipschitz()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn noise(&self) -> &dyn Density1d {
        self.noise.as_ref()
    }

    /// Smallest radius for which the drift off the coupling set holds: `(1 - lambda)/(lambda - L)`.
    pub fn delta_threshold(&self) -> f64 {
        (1.0 - self.lambda) / (self.lambda - self.lipschitz())
    }

    pub fn check_delta(&self) -> Result<()> {
        let threshold = self.delta_threshold();
        if self.delta <= threshold {
            return Err(BoundsError::DeltaTooSmall { delta: self.delta, threshold });
        }
        Ok(())
    }

    /// `eps(delta)`: the smallest overlap of two noise laws shifted by at most `L delta`, by quadrature.
    pub fn eps_delta(&self) -> Result<f64> {
        let u = self.lipschitz() * self.delta;
        if self.noise.symmetric_unimodal() {
            return overlap_quadrature(self.noise.as_ref(), u);
        }
        let mut worst = 1.0_f64;
        for i in 0..=SHIFT_GRID {
            let s = -u + 2.0 * u * i as f64 / SHIFT_GRID as f64;
            worst = worst.min(overlap_quadrature(self.noise.as_ref(), s)?);
        }
        Ok(worst)
    }

    /// Closed-form overlap at the boundary shift, where the density provides one.
    pub fn eps_delta_closed_form(&self) -> f64 {
        self.noise.overlap(self.lipschitz() * self.delta)
    }

    /// `B = 1 v (1 + L delta - eps) / lambda`.
    pub fn big_b(&self, eps: f64) -> f64 {
        ((1.0 + self.lipschitz() * self.delta - eps) / self.lambda).max(1.0)
    }

    fn bound_input(&self, cross_moment: f64) -> Result<HomogeneousBoundInput> {
        self.check_delta()?;
        let eps = self.eps_delta()?;
        if eps <= 0.0 {
            return Err(invalid("delta", "eps(delta) vanishes"));
        }
        HomogeneousBoundInput::new(eps, self.lambda, 0.0, self.big_b(eps), cross_moment)
    }

    /// `2 (1 - eps)^j 1(j <= n) + 2 lambda^n B^(j-1) cross_moment`.
    pub fn prop6_bound(&self, n: usize, j: usize, cross_moment: f64) -> Result<f64> {
        bound_tv_homog(&self.bound_input(cross_moment)?, n, j)
    }

    /// `(j*, bound)` minimised over `j` for `n = 1..=n_max`.
    pub fn prop6_curve(&self, n_max: usize, cross_moment: f64) -> Result<Vec<(usize, f64)>> {
        let inp = self.bound_input(cross_moment)?;
        (1..=n_max).map(|n| optimize_j(&inp, n, BoundKind::Tv)).collect()
    }

    /// One transition from `x`.
    pub fn step(&self, x: f64, rng: &mut SimRng) -> f64 {
        self.g(x) + self.noise.sample(rng)
    }

    /// `Pbar Vbar(x, x') = 1 + |g(x) - g(x')|` under common noise.
    pub fn pbar_vbar_common(&self, x: f64, xp: f64) -> f64 {
        1.0 + (self.g(x) - self.g(xp)).abs()
    }

    /// Row-normalised discretisation on `points` equally spaced nodes of `[lo, hi]`.
    pub fn discretize(&self, lo: f64, hi: f64, points: usize) -> Result<(Vec<f64>, FiniteKernel)> {
        if points < 2 || !(hi > lo) {
            return Err(invalid("grid", "need at least two nodes on a nonempty interval"));
        }
        let h = (hi - lo) / (points - 1) as f64;
        let nodes: Vec<f64> = (0..points).map(|i| lo + h * i as f64).collect();
        let rows = nodes
            .par_iter()
            .map(|&x| {
                let gx = self.g(x);
                let w: Vec<f64> = nodes.iter().map(|&y| self.noise.pdf(y - gx)).collect();
                let s: f64 = w.iter().sum();
                if s > 0.0 {
                    w.into_iter().map(|v| v / s).collect()
                } else {
                    // no mass on the grid: send to the nearest node
                    let k = (((gx - lo) / h).round().clamp(0.0, (points - 1) as f64)) as usize;
                    let mut r = vec![0.0; points];
                    r[k] = 1.0;
                    r
                }
            })
            .collect();
        Ok((nodes, FiniteKernel::from_rows(rows)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdLowerBound {
    pub n: usize,
    /// `max_t |E phi_t(X_n) - E phi_t(X'_n)|` with `phi_t = 2 1{x <= t} - 1`.
    pub estimate: f64,
    pub se: f64,
    /// `estimate - 3 se`.
    pub lower: f64,
}

/// Monte Carlo TV lower bounds from independent runs started at `x0` and `x0_prime`.
pub fn threshold_lower_bounds(
    m: &ArModel,
    x0: f64,
    x0_prime: f64,
    n_max: usize,
    replicas: usize,
    thresholds: &[f64],
    seed: u64,
) -> Result<Vec<ThresholdLowerBound>> {
    if replicas == 0 {
        return Err(invalid("replicas", "replicas must be >= 1"));
    }
    let paths = |start: f64, offset: u64| -> Vec<Vec<f64>> {
        (0..replicas)
            .into_par_iter()
            .map(|r| {
                let mut rng = replica_rng(seed, offset + r as u64);
                let mut x = start;
                (0..n_max)
                    .map(|_| {
                        x = m.step(x, &mut rng);
                        x
                    })
                    .collect()
            })
            .collect()
    };
    let a = paths(x0, 0);
    let b = paths(x0_prime, replicas as u64);
    let mf = replicas as f64;
    let mut out = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let mut xa: Vec<f64> = a.iter().map(|p| p[n - 1]).collect();
        let mut xb: Vec<f64> = b.iter().map(|p| p[n - 1]).collect();
        xa.sort_by(f64::total_cmp);
        xb.sort_by(f64::total_cmp);
        let mut best = ThresholdLowerBound { n, estimate: 0.0, se: 0.0, lower: f64::NEG_INFINITY };
        for &t in thresholds {
            let fa = xa.partition_point(|x| *x <= t) as f64 / mf;
            let fb = xb.partition_point(|x| *x <= t) as f64 / mf;
            let est = 2.0 * (fa - fb).abs();
            let se = 2.0 * ((fa * (1.0 - fa) + fb * (1.0 - fb)) / mf).sqrt();
            if est - 3.0 * se > best.lower {
                best = ThresholdLowerBound { n, estimate: est, se, lower: est - 3.0 * se };
            }
        }
        out.push(best);
    }
    Ok(out)
}

/// The AR chain with coupling set `{|x - x'| <= delta}` and common-noise moves off it.
pub struct ArCoupling {
    model: ArModel,
    eps: f64,
}

impl ArCoupling {
    pub fn new(model: ArModel) -> Result<Self> {
        let eps = model.eps_delta()?;
        Ok(Self { model, eps })
    }

    /// Coupling with an explicit coin probability; it must not exceed `eps(delta)`.
    pub fn with_epsilon(model: ArModel, eps: f64) -> Result<Self> {
        let max = model.eps_delta()?;
        if !(0.0..=max + 1e-12).contains(&eps) {
            return Err(invalid("epsilon", format!("epsilon must lie in [0, {max}]")));
        }
        Ok(Self { model, eps: eps.min(1.0) })
    }

    pub fn model(&self) -> &ArModel {
        &self.model
    }

    fn pair_overlap(&self, x: f64, xp: f64) -> f64 {
        self.model.noise.overlap(self.model.g(x) - self.model.g(xp))
    }

    fn nu_density(&self, x: f64, xp: f64, y: f64) -> f64 {
        let (gx, gxp) = (self.model.g(x), self.model.g(xp));
        let q = &self.model.noise;
        q.pdf(y - gx).min(q.pdf(y - gxp)) / self.pair_overlap(x, xp)
    }
}

impl CouplingModel for ArCoupling {
    type State = f64;

    fn step(&self, x: f64, rng: &mut SimRng) -> f64 {
        self.model.step(x, rng)
    }

    fn in_set(&self, x: f64, xp: f64) -> bool {
        (x - xp).abs() <= self.model.delta
    }

    fn epsilon(&self, _k: usize) -> f64 {
        self.eps
    }

    /// Accept-reject from the equal mixture of the two transition densities.
    fn sample_nu(&self, x: f64, xp: f64, _k: usize, rng: &mut SimRng) -> Result<f64> {
        let (gx, gxp) = (self.model.g(x), self.model.g(xp));
        let q = &self.model.noise;
        for _ in 0..MAX_REJECTIONS {
            let centre = if rng.random::<bool>() { gx } else { gxp };
            let y = centre + q.sample(rng);
            let (a, b) = (q.pdf(y - gx), q.pdf(y - gxp));
            if rng.random::<f64>() * 0.5 * (a + b) < a.min(b) {
                return Ok(y);
            }
        }
        Err(BoundsError::SamplerStalled(MAX_REJECTIONS))
    }

    fn nu_ratio(&self, from: f64, x: f64, xp: f64, y: f64) -> Option<f64> {
        let p = self.model.noise.pdf(y - self.model.g(from));
        Some(if p > 0.0 { self.nu_density(x, xp, y) / p } else { 0.0 })
    }

    fn common_step(&self, x: f64, xp: f64, rng: &mut SimRng) -> Option<(f64, f64)> {
        let z = self.model.noise.sample(rng);
        Some((self.model.g(x) + z, self.model.g(xp) + z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{coupled_step, CoupledState, CouplingStrategies};
    use crate::densities::{density_registry, Gaussian};
    use crate::stats::ks_two_sample;
    use approx::assert_abs_diff_eq;

    fn model(delta: f64) -> ArModel {
        ArModel::by_name("linear:0.5", "gauss:1", delta, 0.8).unwrap()
    }

    #[test]
    fn eps_delta_examples() {
        let m = model(4.0);
        let q = m.eps_delta().unwrap();
        assert_abs_diff_eq!(q, 0.317_311, epsilon = 1e-6);
        assert!((q - m.eps_delta_closed_form()).abs() <= 1e-6);
        assert_abs_diff_eq!(model(1e-12).eps_delta().unwrap(), 1.0, epsilon = 1e-9);
        assert!(model(200.0).eps_delta().unwrap() < 1e-12);
        let mut last = 1.0;
        for d in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let e = model(d).eps_delta().unwrap();
            assert!(e <= last && e > 0.0);
            last = e;
        }
    }

    #[test]
    fn non_symmetric_branch_scans_shifts() {
        struct Declared(Gaussian);
        impl Density1d for Declared {
            fn name(&self) -> String {
                "declared".into()
            }
            fn pdf(&self, z: f64) -> f64 {
                self.0.pdf(z)
            }
            fn sample(&self, rng: &mut SimRng) -> f64 {
                self.0.sample(rng)
            }
            fn sf(&self, t: f64) -> f64 {
                self.0.sf(t)
            }
            fn symmetric_unimodal(&self) -> bool {
                false
            }
        }
        let m = ArModel::new(map_registry().build("linear:0.5").unwrap(), Box::new(Declared(Gaussian::new(1.0))), 4.0, 0.8)
            .unwrap();
        assert_abs_diff_eq!(m.eps_delta().unwrap(), 0.317_311, epsilon = 1e-6);
    }

    #[test]
    fn prop6_examples() {
        let m = model(4.0);
        let eps = m.eps_delta().unwrap();
        assert_abs_diff_eq!(m.big_b(eps), 3.353_361, epsilon = 1e-6);
        let n = 7;
        let b = m.big_b(eps);
        let v = m.prop6_bound(n, n + 1, 2.5).unwrap();
        assert_abs_diff_eq!(v, 2.0 * 0.8_f64.powi(7) * b.powi(7) * 2.5, epsilon = 1e-9);
        let v = m.prop6_bound(n, 3, 1.0).unwrap();
        assert_abs_diff_eq!(v, 2.0 * (1.0 - eps).powi(3) + 2.0 * 0.8_f64.powi(7) * b * b, epsilon = 1e-12);
        let tight = model(0.5);
        assert!(matches!(tight.prop6_bound(3, 1, 1.0), Err(BoundsError::DeltaTooSmall { .. })));
        assert!(ArModel::by_name("linear:0.5", "gauss:1", 4.0, 0.4).is_err());
        assert!(map_registry().build("linear:1.2").is_err());
    }

    #[test]
    fn common_noise_contracts_pathwise() {
        let c = ArCoupling::new(model(4.0)).unwrap();
        let m = c.model();
        let mut rng = replica_rng(3, 0);
        let (y, yp) = (0.5 * 0.0 + 1.0, 0.5 * 3.0 + 1.0);
        assert_eq!((y, yp), (1.0, 2.5));
        for _ in 0..1000 {
            let x: f64 = rng.random_range(-20.0..20.0);
            let xp: f64 = rng.random_range(-20.0..20.0);
            let (a, b) = c.common_step(x, xp, &mut rng).unwrap();
            assert!((a - b).abs() <= 0.5 * (x - xp).abs() + 1e-12);
            assert_abs_diff_eq!(1.0 + (a - b).abs(), m.pbar_vbar_common(x, xp), epsilon = 1e-12);
        }
    }

    #[test]
    fn lambda_drift_off_set() {
        let m = model(4.0);
        let l = m.lipschitz();
        for i in 0..2000 {
            let r = m.delta() + 0.01 * i as f64;
            assert!(1.0 + l * r <= m.lambda() * (1.0 + r) + 1e-12);
        }
    }

    #[test]
    fn certain_coin_couples() {
        let c = ArCoupling::new(model(1e-9)).unwrap();
        let s = CouplingStrategies::by_name("accept-reject", "common-noise").unwrap();
        let mut rng = replica_rng(1, 1);
        let next = coupled_step(CoupledState::start(0.0, 1e-10), &c, &s, 1, &mut rng).unwrap();
        assert!(next.bell);
    }

    #[test]
    fn coupled_marginals_match_direct_simulation() {
        let c = ArCoupling::new(model(4.0)).unwrap();
        let m = c.model();
        let s = CouplingStrategies::by_name("accept-reject", "common-noise").unwrap();
        for (x, xp) in [(0.0, 1.5), (-2.0, 1.0), (0.0, 9.0)] {
            let mut rng = replica_rng(21, 0);
            let mut coupled = Vec::new();
            let mut coupled_p = Vec::new();
            for _ in 0..20_000 {
                let st = coupled_step(CoupledState::start(x, xp), &c, &s, 1, &mut rng).unwrap();
                coupled.push(st.x);
                coupled_p.push(st.x_prime);
            }
            let direct: Vec<f64> = (0..20_000).map(|_| m.step(x, &mut rng)).collect();
            let direct_p: Vec<f64> = (0..20_000).map(|_| m.step(xp, &mut rng)).collect();
            assert!(ks_two_sample(&coupled, &direct).unwrap().p_value > 1e-3);
            assert!(ks_two_sample(&coupled_p, &direct_p).unwrap().p_value > 1e-3);
        }
    }

    #[test]
    fn discretisation_rows_are_stochastic() {
        let m = ArModel::by_name("tanh:0.9", "laplace:1", 4.0, 0.95).unwrap();
        let (nodes, k) = m.discretize(-5.0, 5.0, 101).unwrap();
        assert_eq!(nodes.len(), 101);
        for r in k.rows() {
            assert_abs_diff_eq!(r.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        assert!(density_registry().build("gauss:0").is_err());
    }
}
