//! Symmetric one-dimensional densities used as AR noise and RWMH proposals.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use crate::error::Result;
use crate::quadrature::integrate_with_breaks;
use crate::registry::{positive_param, Registry};
use crate::rng::SimRng;

/// Absolute tolerance used for the overlap quadrature.
pub const OVERLAP_TOL: f64 = 1e-10;

pub trait Density1d: Send + Sync {
    fn name(&self) -> String;
    fn pdf(&self, z: f64) -> f64;
    fn sample(&self, rng: &mut SimRng) -> f64;
    /// `P(Z > t)`.
    fn sf(&self, t: f64) -> f64;
    /// Points where the density is not smooth.
    fn kinks(&self) -> Vec<f64> {
        vec![]
    }
    /// Symmetric about zero and nonincreasing in `|z|`.
    fn symmetric_unimodal(&self) -> bool {
        true
    }
    /// Radius `r` with `P(|Z| > r) <= tol`.
    fn radius(&self, tol: f64) -> f64 {
        let mut r = 1.0;
        while 2.0 * self.sf(r) > tol {
            r *= 2.0;
        }
        let (mut lo, mut hi) = (0.0, r);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if 2.0 * self.sf(mid) > tol {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
    /// `int min(q(z - u), q(z)) dz`, i.e. one minus the half L1 distance of a shift by `u`.
    fn overlap(&self, u: f64) -> f64 {
        overlap_quadrature(self, u).unwrap_or(f64::NAN)
    }
}

/// Overlap of `q` and its shift by `u`, by adaptive quadrature.
pub fn overlap_quadrature<D: Density1d + ?Sized>(q: &D, u: f64) -> Result<f64> {
    let u = u.abs();
    if u == 0.0 {
        return Ok(1.0);
    }
    let r = q.radius(1e-14) + u;
    let mut breaks = vec![0.0, u, 0.5 * u];
    for k in q.kinks() {
        breaks.push(k);
        breaks.push(k + u);
    }
    let l1 = integrate_with_breaks(|z| (q.pdf(z - u) - q.pdf(z)).abs(), -r, r, &breaks, OVERLAP_TOL)?;
    Ok((1.0 - 0.5 * l1.value).clamp(0.0, 1.0))
}

pub struct Gaussian {
    sigma: f64,
    normal: Normal<f64>,
    cdf: StatNormal,
}

impl Gaussian {
    pub fn new(sigma: f64) -> Self {
        Self {
            sigma,
            normal: Normal::new(0.0, sigma).expect("sigma > 0"),
            cdf: StatNormal::new(0.0, sigma).expect("sigma > 0"),
        }
    }
}

impl Density1d for Gaussian {
    fn name(&self) -> String {
        format!("gauss:{}", self.sigma)
    }
    fn pdf(&self, z: f64) -> f64 {
        let t = z / self.sigma;
        (-0.5 * t * t).exp() / (self.sigma * (2.0 * std::f64::consts::PI).sqrt())
    }
    fn sample(&self, rng: &mut SimRng) -> f64 {
        self.normal.sample(rng)
    }
    fn sf(&self, t: f64) -> f64 {
        self.cdf.sf(t)
    }
    fn overlap(&self, u: f64) -> f64 {
        2.0 * self.cdf.cdf(-0.5 * u.abs())
    }
}

/// Uniform on `[-h, h]`.
pub struct Uniform {
    h: f64,
}

impl Density1d for Uniform {
    fn name(&self) -> String {
        format!("uniform:{}", self.h)
    }
    fn pdf(&self, z: f64) -> f64 {
        if z.abs() <= self.h {
            0.5 / self.h
        } else {
            0.0
        }
    }
    fn sample(&self, rng: &mut SimRng) -> f64 {
        rng.random_range(-self.h..=self.h)
    }
    fn sf(&self, t: f64) -> f64 {
        ((self.h - t) / (2.0 * self.h)).clamp(0.0, 1.0)
    }
    fn kinks(&self) -> Vec<f64> {
        vec![-self.h, self.h]
    }
    fn radius(&self, _tol: f64) -> f64 {
        self.h
    }
    fn overlap(&self, u: f64) -> f64 {
        (1.0 - u.abs() / (2.0 * self.h)).max(0.0)
    }
}

/// Laplace with scale `b`.
pub struct Laplace {
    b: f64,
}

impl Density1d for Laplace {
    fn name(&self) -> String {
        format!("laplace:{}", self.b)
    }
    fn pdf(&self, z: f64) -> f64 {
        (-z.abs() / self.b).exp() / (2.0 * self.b)
    }
    fn sample(&self, rng: &mut SimRng) -> f64 {
        let u: f64 = rng.random::<f64>() - 0.5;
        -self.b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    }
    fn sf(&self, t: f64) -> f64 {
        if t >= 0.0 {
            0.5 * (-t / self.b).exp()
        } else {
            1.0 - 0.5 * (t / self.b).exp()
        }
    }
    fn kinks(&self) -> Vec<f64> {
        vec![0.0]
    }
    fn overlap(&self, u: f64) -> f64 {
        (-u.abs() / (2.0 * self.b)).exp()
    }
}

pub fn density_registry() -> Registry<dyn Density1d> {
    Registry::new("density")
        .with("gauss", |p| Ok(Box::new(Gaussian::new(positive_param(p, 1.0, "sigma")?)) as _))
        .with("uniform", |p| Ok(Box::new(Uniform { h: positive_param(p, 1.0, "h")? }) as _))
        .with("laplace", |p| Ok(Box::new(Laplace { b: positive_param(p, 1.0, "b")? }) as _))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_with_breaks;
    use crate::rng::replica_rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normalised_and_symmetric() {
        for spec in ["gauss", "gauss:0.5", "uniform:2", "laplace:0.7"] {
            let q = density_registry().build(spec).unwrap();
            let r = q.radius(1e-13);
            let mass = integrate_with_breaks(|z| q.pdf(z), -r, r, &q.kinks(), 1e-11).unwrap().value;
            assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-8);
            for i in 0..200 {
                let z = -5.0 + 0.05 * i as f64;
                assert!((q.pdf(z) - q.pdf(-z)).abs() <= 1e-10, "{spec} at {z}");
            }
        }
    }

    #[test]
    fn closed_form_overlap_matches_quadrature() {
        for spec in ["gauss", "gauss:2", "uniform:1.5", "laplace:0.7"] {
            let q = density_registry().build(spec).unwrap();
            for u in [0.0, 0.1, 1.0, 2.0, 2.9, 5.0] {
                let quad = overlap_quadrature(q.as_ref(), u).unwrap();
                assert_abs_diff_eq!(q.overlap(u), quad, epsilon = 1e-8);
            }
        }
        // 2 Phi(-1)
        assert_abs_diff_eq!(Gaussian::new(1.0).overlap(2.0), 0.317_310_507_862_914_1, epsilon = 1e-10);
    }

    #[test]
    fn sampler_matches_sf() {
        for spec in ["gauss:1.3", "uniform:2", "laplace:0.7"] {
            let q = density_registry().build(spec).unwrap();
            let mut rng = replica_rng(11, 0);
            let m = 200_000;
            let t = 0.8;
            let hits = (0..m).filter(|_| q.sample(&mut rng) > t).count();
            let p = q.sf(t);
            let se = (p * (1.0 - p) / m as f64).sqrt();
            assert!(((hits as f64 / m as f64) - p).abs() < 5.0 * se, "{spec}");
        }
    }
}
