//! Globally adaptive Gauss-Kronrod 7/15 quadrature on finite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{BoundsError, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Maximum number of subintervals kept by one adaptive run.
pub const MAX_INTERVALS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Segment {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error)
    }
}

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let dx = h * XGK[k];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[k] * s;
        if k % 2 == 1 {
            gauss += WG[k / 2] * s;
        }
    }
    Segment { a, b, value: kronrod * h, error: ((kronrod - gauss) * h).abs() }
}

/// `int_a^b f` to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<Quadrature> {
    integrate_with_breaks(f, a, b, &[], tol)
}

/// As [`integrate`], with the interval first split at `breaks` (kinks or peaks of `f`).
pub fn integrate_with_breaks(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], tol: f64) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature { value: 0.0, error: 0.0 });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|x| *x > lo && *x < hi).collect();
    cuts.push(lo);
    cuts.push(hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut heap: BinaryHeap<Segment> = cuts.windows(2).map(|w| gk15(&f, w[0], w[1])).collect();
    loop {
        let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
        if !value.is_finite() {
            return Err(BoundsError::QuadratureNotConverged { achieved: f64::NAN, requested: tol });
        }
        if error <= tol {
            return Ok(Quadrature { value: sign * value, error });
        }
        let worst = heap.pop().expect("nonempty");
        let mid = 0.5 * (worst.a + worst.b);
        if heap.len() + 2 > MAX_INTERVALS || mid <= worst.a || mid >= worst.b {
            return Err(BoundsError::QuadratureNotConverged { achieved: error, requested: tol });
        }
        heap.push(gk15(&f, worst.a, mid));
        heap.push(gk15(&f, mid, worst.b));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polynomials_and_gaussians() {
        let q = integrate(|x| x * x, 0.0, 3.0, 1e-12).unwrap();
        assert_abs_diff_eq!(q.value, 9.0, epsilon = 1e-12);
        let q = integrate(|x| (-x * x / 2.0).exp(), -12.0, 12.0, 1e-12).unwrap();
        assert_abs_diff_eq!(q.value, (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-11);
        let q = integrate(|x| x.sin(), 1.0, 0.0, 1e-12).unwrap();
        assert_abs_diff_eq!(q.value, -(1.0 - 1.0_f64.cos()), epsilon = 1e-12);
    }

    #[test]
    fn kinks_with_and_without_breaks() {
        let f = |x: f64| (x - 0.3).abs();
        let exact = 0.5 * (1.3 * 1.3 + 0.7 * 0.7);
        assert_abs_diff_eq!(integrate(f, -1.0, 1.0, 1e-10).unwrap().value, exact, epsilon = 1e-10);
        let q = integrate_with_breaks(f, -1.0, 1.0, &[0.3], 1e-12).unwrap();
        assert_abs_diff_eq!(q.value, exact, epsilon = 1e-13);
    }

    #[test]
    fn singular_integrand_reports_failure() {
        let r = integrate(|x| 1.0 / x, 0.0, 1.0, 1e-8);
        assert!(matches!(r, Err(BoundsError::QuadratureNotConverged { .. })));
    }
}
