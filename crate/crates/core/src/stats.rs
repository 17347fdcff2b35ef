//! Goodness-of-fit tests and binomial summaries.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Result};

/// Wald standard error of a proportion.
pub fn binomial_se(p_hat: f64, m: usize) -> f64 {
    (p_hat * (1.0 - p_hat) / m as f64).sqrt()
}

/// Standard error from the Agresti-Coull adjusted proportion `(k + 2)/(m + 4)`.
/// Unlike the Wald form it does not collapse to zero when `k = 0`.
pub fn adjusted_binomial_se(k: usize, m: usize) -> f64 {
    let p = (k as f64 + 2.0) / (m as f64 + 4.0);
    (p * (1.0 - p) / (m as f64 + 4.0)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson test of observed counts against expected probabilities. Cells with
/// expected count below 5 are pooled into one.
pub fn chi_square_gof(counts: &[usize], probs: &[f64]) -> Result<ChiSquareResult> {
    if counts.len() != probs.len() {
        return Err(invalid("probs", "counts and probabilities differ in length"));
    }
    let m: usize = counts.iter().sum();
    if m == 0 {
        return Err(invalid("counts", "no observations"));
    }
    let mf = m as f64;
    let (mut stat, mut cells) = (0.0, 0usize);
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        let e = p * mf;
        if e < 5.0 {
            pooled_obs += c as f64;
            pooled_exp += e;
        } else {
            stat += (c as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    if pooled_exp > 0.0 {
        stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        cells += 1;
    } else if pooled_obs > 0.0 {
        return Ok(ChiSquareResult { statistic: f64::INFINITY, dof: cells, p_value: 0.0 });
    }
    if cells < 2 {
        return Ok(ChiSquareResult { statistic: stat, dof: 0, p_value: 1.0 });
    }
    let dof = cells - 1;
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    Ok(ChiSquareResult { statistic: stat, dof, p_value: dist.sf(stat) })
}

/// Kolmogorov distribution tail `P(K > t)`.
fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 1.0 {
        // small-t form converges faster here
        let c = (2.0 * std::f64::consts::PI).sqrt() / t;
        let s: f64 = (1..=50)
            .map(|k| (-((2 * k - 1) as f64).powi(2) * std::f64::consts::PI.powi(2) / (8.0 * t * t)).exp())
            .sum();
        return (1.0 - c * s).clamp(0.0, 1.0);
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * (k * k) as f64 * t * t).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("samples", "both samples must be nonempty"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    let p = kolmogorov_sf((en + 0.12 + 0.11 / en) * d);
    Ok(KsResult { statistic: d, p_value: p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kolmogorov_reference_points() {
        // scipy.special.kolmogorov
        assert_abs_diff_eq!(kolmogorov_sf(1.0), 0.269_999_671_677_355_8, epsilon = 1e-9);
        assert_abs_diff_eq!(kolmogorov_sf(0.5), 0.963_945_243_664_875_1, epsilon = 1e-9);
        assert_abs_diff_eq!(kolmogorov_sf(1.36), 0.049_485_876_755_377_88, epsilon = 1e-9);
    }

    #[test]
    fn chi_square_perfect_fit() {
        let r = chi_square_gof(&[250, 250, 500], &[0.25, 0.25, 0.5]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_abs_diff_eq!(r.p_value, 1.0, epsilon = 1e-12);
        let r = chi_square_gof(&[400, 100, 500], &[0.25, 0.25, 0.5]).unwrap();
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn ks_identical_and_shifted() {
        let a: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        assert!(ks_two_sample(&a, &a).unwrap().p_value > 0.99);
        let b: Vec<f64> = a.iter().map(|x| x + 0.2).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        assert_abs_diff_eq!(r.statistic, 0.2, epsilon = 2e-3);
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn se_forms() {
        assert_eq!(binomial_se(0.0, 100), 0.0);
        assert!(adjusted_binomial_se(0, 100) > 0.0);
        assert_abs_diff_eq!(binomial_se(0.5, 100), 0.05, epsilon = 1e-15);
    }
}
