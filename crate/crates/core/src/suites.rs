//! Reproducible verification suites shared by the acceptance tests and the CLI.

use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::annealing::{
    derive_drift_constants, laplace_z, objective_registry, pi_shift_tv_bound, run_annealing, schedule_from_constants,
    verify_drift_constants, PiGamma,
};
use crate::ar::{threshold_lower_bounds, ArModel};
use crate::bounds::{
    bound_f_homog, bound_inhom, bound_tv_homog, derive_s_params, optimize_j, rate_bound, BoundKind,
    HomogeneousBoundInput, InhomogeneousSchedule,
};
use crate::chain::{
    build_product_pbar, build_product_pstar, extract_minorization, f_norm, log_distance_to_stationarity, propagate,
    stationary, tv_norm, verify_drift, FiniteKernel, FiniteSignedMeasure, MinorizationCertificate, WeightFunction,
};
use crate::coupling::{identity_max_discrepancy, run_coupling, CouplingStrategies, FiniteCoupling};
use crate::densities::Gaussian;
use crate::error::{BoundsError, Result};
use crate::rng::{aux_rng, SimRng};

/// Outcome of one suite.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub instances: usize,
    pub checks: usize,
    pub violations: usize,
    /// Smallest margin by which a checked inequality held; negative on violation.
    pub worst_margin: f64,
    pub seconds: f64,
    pub detail: String,
}

impl SuiteReport {
    pub fn line(&self) -> String {
        format!(
            "{} {}: instances={} checks={} violations={} worst_margin={:.3e} time={:.1}s {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.instances,
            self.checks,
            self.violations,
            self.worst_margin,
            self.seconds,
            self.detail
        )
    }
}

struct Tally {
    checks: usize,
    violations: usize,
    worst: f64,
}

impl Tally {
    fn new() -> Self {
        Self { checks: 0, violations: 0, worst: f64::INFINITY }
    }

    /// Records `margin >= -tol`.
    fn check(&mut self, margin: f64, tol: f64) {
        self.checks += 1;
        self.worst = self.worst.min(margin);
        if !(margin >= -tol) {
            self.violations += 1;
        }
    }

    fn report(self, name: &'static str, instances: usize, start: Instant, extra_ok: bool, detail: String) -> SuiteReport {
        SuiteReport {
            name,
            passed: self.violations == 0 && extra_ok,
            instances,
            checks: self.checks,
            violations: self.violations,
            worst_margin: self.worst,
            seconds: start.elapsed().as_secs_f64(),
            detail,
        }
    }
}

/// A random finite chain with a level-set coupling set and a certified bivariate drift.
#[derive(Debug, Clone)]
pub struct CertifiedChain {
    pub p: FiniteKernel,
    /// Increasing Lyapunov function, `V >= 1`.
    pub v: Vec<f64>,
    /// `C = {0, ..., level}` = `{V <= V[level]}`.
    pub level: usize,
    pub cert: MinorizationCertificate,
    pub vbar: WeightFunction,
    pub pair_mask: Vec<bool>,
    pub lambda: f64,
    pub b: f64,
    pub big_b: f64,
}

impl CertifiedChain {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn bound_input(&self, v0: f64) -> Result<HomogeneousBoundInput> {
        HomogeneousBoundInput::new(self.cert.epsilon(), self.lambda, self.b, self.big_b, v0)
    }

    pub fn v_weight(&self) -> Result<WeightFunction> {
        WeightFunction::new(self.v.clone())
    }
}

fn random_probs(n: usize, rng: &mut SimRng) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn pair_mask(n: usize, level: usize) -> Vec<bool> {
    (0..n * n).map(|k| k / n <= level && k % n <= level).collect()
}

fn try_certify(p: FiniteKernel, v: Vec<f64>, level: usize) -> Result<Option<CertifiedChain>> {
    let n = p.len();
    if !p.is_irreducible() {
        return Ok(None);
    }
    let pairs: Vec<(usize, usize)> = (0..=level).flat_map(|x| (0..=level).map(move |y| (x, y))).collect();
    let cert = extract_minorization(&p, &pairs)?;
    if cert.epsilon() >= 1.0 {
        return Ok(None);
    }
    let pstar = build_product_pstar(&p, &cert)?;
    let vbar = WeightFunction::new((0..n * n).map(|k| 0.5 * (v[k / n] + v[k % n])).collect())?;
    let mask = pair_mask(n, level);
    let drift = match verify_drift(pstar.kernel(), &vbar, &mask) {
        Ok(d) => d,
        Err(BoundsError::DriftViolation { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let lambda = drift.lambda_min;
    if !(lambda > 0.0) {
        return Ok(None);
    }
    let b = drift.b_for(lambda);
    let sup_rv = drift.kv().iter().zip(&mask).filter(|(_, c)| **c).map(|(k, _)| *k).fold(0.0, f64::max);
    let big_b = ((1.0 - cert.epsilon()) * sup_rv / lambda).max(1.0);
    Ok(Some(CertifiedChain { p, v, level, cert, vbar, pair_mask: mask, lambda, b, big_b }))
}

/// Draws chains until `count` are certified. Rows favour low states so that an
/// increasing `V` tends to drift; returns the chains and the number of draws.
pub fn random_certified_chains(count: usize, seed: u64) -> Result<(Vec<CertifiedChain>, usize)> {
    let mut rng = aux_rng(seed, 1);
    let mut out = Vec::with_capacity(count);
    let mut draws = 0;
    while out.len() < count {
        draws += 1;
        if draws > 1000 * count.max(1) {
            return Err(BoundsError::Infeasible(format!("only {} certified chains in {draws} draws", out.len())));
        }
        let n = rng.random_range(2..=6usize);
        let rho: f64 = rng.random_range(0.15..0.6);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let w: Vec<f64> = (0..n).map(|y| (0.05 + rng.random::<f64>()) * rho.powi(y as i32)).collect();
                let s: f64 = w.iter().sum();
                w.into_iter().map(|v| v / s).collect()
            })
            .collect();
        let mut v = vec![1.0];
        for _ in 1..n {
            let last = *v.last().unwrap();
            v.push(last * (1.0 + rng.random_range(0.3..3.0)));
        }
        let level = rng.random_range(0..n - 1);
        if let Some(c) = try_certify(FiniteKernel::from_rows(rows)?, v, level)? {
            out.push(c);
        }
    }
    Ok((out, draws))
}

/// Starting pairs: every pair of point masses plus `extra` random pairs of laws.
fn starting_laws(n: usize, extra: usize, rng: &mut SimRng) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut out = Vec::new();
    for x in 0..n {
        for y in 0..n {
            out.push((FiniteSignedMeasure::dirac(n, x).values, FiniteSignedMeasure::dirac(n, y).values));
        }
    }
    for _ in 0..extra {
        out.push((random_probs(n, rng), random_probs(n, rng)));
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Optimised TV and V-norm bounds against exact distances for `n <= n_max`.
pub fn domination_suite(chains: &[CertifiedChain], n_max: usize, seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut rng = aux_rng(seed, 2);
    let mut tally = Tally::new();
    for c in chains {
        let f = c.v_weight()?;
        for (xi, xp) in starting_laws(c.len(), 3, &mut rng) {
            let v0 = 0.5 * (dot(&xi, &c.v) + dot(&xp, &c.v));
            let inp = c.bound_input(v0)?;
            let mut a = FiniteSignedMeasure::new(xi);
            let mut b = FiniteSignedMeasure::new(xp);
            for n in 1..=n_max {
                a = propagate(&a, &c.p, 1)?;
                b = propagate(&b, &c.p, 1)?;
                let diff = a.difference(&b)?;
                let (_, tv_bound) = optimize_j(&inp, n, BoundKind::Tv)?;
                let (_, f_bound) = optimize_j(&inp, n, BoundKind::F)?;
                tally.check(tv_bound - tv_norm(&diff), 1e-9);
                tally.check(f_bound - f_norm(&diff, &f)?, 1e-9);
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let detail = format!("n<={n_max}");
    Ok(tally.report("domination", chains.len(), start, elapsed < 60.0, detail))
}

/// Bell-chain path weights against the `P*` representation on small chains.
pub fn identity_suite(instances: usize, seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut rng = aux_rng(seed, 3);
    let mut tally = Tally::new();
    for i in 0..instances {
        // cycle through sizes so every |X| in 2..=4 is covered
        let n = 2 + i % 3;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| random_probs(n, &mut rng)).collect();
        let p = FiniteKernel::from_rows(rows)?;
        let mut pairs: Vec<(usize, usize)> =
            (0..n).flat_map(|x| (0..n).map(move |y| (x, y))).filter(|_| rng.random_bool(0.5)).collect();
        if pairs.is_empty() {
            pairs.push((0, n - 1));
        }
        let mut cert = extract_minorization(&p, &pairs)?;
        if cert.epsilon() >= 1.0 {
            cert = cert.with_epsilon(0.9)?;
        }
        let xi = random_probs(n, &mut rng);
        let xp = random_probs(n, &mut rng);
        // |X| = 4 at n = 4 enumerates 16^5 pair paths per start, so only two instances go that deep
        let n_top = if n == 4 && i > 5 { 3 } else { 4 };
        for steps in 1..=n_top {
            let per_step: Vec<f64> = (0..steps).map(|_| rng.random::<f64>() * cert.epsilon()).collect();
            for eps in [None, Some(per_step.as_slice())] {
                let d = identity_max_discrepancy(&p, &cert, eps, &xi, &xp, steps)?;
                tally.check(1e-10 - d, 0.0);
            }
        }
    }
    Ok(tally.report("identity", instances, start, true, "|X|<=4 n<=4".into()))
}

/// Constant schedules reproduce the homogeneous bounds.
pub fn homogeneous_reduction_suite(points: usize, n_max: usize, seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut rng = aux_rng(seed, 4);
    let mut tally = Tally::new();
    let mut literal_f = 0;
    let mut f_checks = 0;
    for k in 0..points {
        let eps = rng.random_range(0.05..0.95);
        let lambda = rng.random_range(0.1..0.99);
        // every tenth point has b = 0, where the two V-norm bounds coincide exactly
        let b = if k % 10 == 0 { 0.0 } else { rng.random_range(0.0..5.0) };
        let big_b = rng.random_range(1.0..5.0);
        let v0 = rng.random_range(1.0..10.0);
        let inp = HomogeneousBoundInput::new(eps, lambda, b, big_b, v0)?;
        let sched = InhomogeneousSchedule::constant(&inp, n_max);
        for n in 1..=n_max {
            for j in 1..=n + 1 {
                let scale = |x: f64| 1e-12 * x.abs().max(1.0);
                let h = bound_tv_homog(&inp, n, j)?;
                let g = bound_inhom(&sched, n, j, BoundKind::Tv)?;
                tally.check(scale(h) - (h - g).abs(), 0.0);
                // the schedule weight is the exact D_n; the homogeneous one drops -b lambda^n/(1 - lambda)
                let hf = bound_f_homog(&inp, n, j)?;
                let gf = bound_inhom(&sched, n, j, BoundKind::F)?;
                let gap = if j <= n { 2.0 * (1.0 - eps).powi(j as i32) * b * lambda.powi(n as i32) / (1.0 - lambda) } else { 0.0 };
                tally.check(scale(hf) - (hf - gf - gap).abs(), 0.0);
                f_checks += 1;
                if (hf - gf).abs() <= scale(hf) {
                    literal_f += 1;
                }
            }
        }
    }
    let detail = format!("n<={n_max} literal_f_equal={literal_f}/{f_checks}");
    Ok(tally.report("homogeneous-reduction", points, start, true, detail))
}

/// Empirical decay slope at `n` against the asymptotic rate, plus `slack`.
pub fn rate_suite(chains: &[CertifiedChain], n: usize, slack: f64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut tally = Tally::new();
    for c in chains {
        let pi = stationary(&c.p)?;
        let f = c.v_weight()?;
        let pbar = build_product_pbar(&c.p, &c.cert)?;
        let pv = pbar.kernel().apply(c.vbar.values());
        let m = pv.iter().zip(&c.pair_mask).filter(|(_, k)| **k).map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
        let rate = rate_bound(c.cert.epsilon(), c.lambda, m)?.rate;
        for x in 0..c.len() {
            let slope = log_distance_to_stationarity(&c.p, &pi, x, &f, n)? / n as f64;
            tally.check(rate + slack - slope, 0.0);
        }
    }
    Ok(tally.report("rate", chains.len(), start, true, format!("n={n} slack={slack}")))
}

/// Bivariate constants from a univariate drift pass the product-kernel check.
/// Every level of every chain is tried; levels that fail the univariate condition are skipped.
pub fn s_condition_suite(chains: &[CertifiedChain], tol: f64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut tally = Tally::new();
    let mut instances = 0;
    for c in chains {
        let n = c.len();
        let pv = c.p.apply(&c.v);
        for level in 0..n - 1 {
            let in_c = |x: usize| x <= level;
            let mins: Vec<f64> = (0..n).map(|y| (0..=level).map(|x| c.p.entry(x, y)).fold(f64::INFINITY, f64::min)).collect();
            let eps: f64 = mins.iter().sum();
            if !(eps > 0.0 && eps < 1.0 - 1e-12) {
                continue;
            }
            let nu: Vec<f64> = mins.iter().map(|m| m / eps).collect();
            let lambda_c = (0..n).filter(|x| !in_c(*x)).map(|x| pv[x] / c.v[x]).fold(f64::NEG_INFINITY, f64::max);
            let b_c = (0..=level).map(|x| (pv[x] - lambda_c * c.v[x]).max(0.0)).fold(0.0, f64::max);
            if !(lambda_c > 0.0 && lambda_c < 1.0) {
                continue;
            }
            let (lambda, b) = match derive_s_params(lambda_c, b_c, c.v[level], eps) {
                Ok(v) => v,
                Err(BoundsError::SConditionViolated { .. }) => continue,
                Err(e) => return Err(e),
            };
            instances += 1;
            let pairs: Vec<(usize, usize)> = (0..=level).flat_map(|x| (0..=level).map(move |y| (x, y))).collect();
            let cert = MinorizationCertificate::from_parts(n, pairs.clone(), eps, vec![nu; pairs.len()])?;
            let pstar = build_product_pstar(&c.p, &cert)?;
            let vbar = WeightFunction::new((0..n * n).map(|k| 0.5 * (c.v[k / n] + c.v[k % n])).collect())?;
            let mask = pair_mask(n, level);
            let kv = pstar.kernel().apply(vbar.values());
            for (k, (kv, v)) in kv.iter().zip(vbar.values()).enumerate() {
                let allowance = if mask[k] { b } else { 0.0 };
                tally.check(lambda * v + allowance - kv, tol);
            }
            let admits = verify_drift(pstar.kernel(), &vbar, &mask).map(|d| d.admits(lambda, b, tol)).unwrap_or(false);
            tally.check(if admits { 0.0 } else { -1.0 }, 0.0);
        }
    }
    let ok = instances > 0;
    Ok(tally.report("s-condition", instances, start, ok, format!("tol={tol}")))
}

/// Coupling-time tail against exact TV from the pair of extreme point masses.
pub fn coupling_validity_suite(chains: &[CertifiedChain], n_max: usize, replicas: usize, seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut tally = Tally::new();
    let strat = CouplingStrategies::<FiniteCoupling>::by_name("exact", "independent")?;
    for (i, c) in chains.iter().enumerate() {
        let n = c.len();
        let model = FiniteCoupling::new(c.p.clone(), c.cert.clone(), None)?;
        let init = move |_: &mut SimRng| (0usize, n - 1);
        let (run, _) = run_coupling(&model, &strat, &init, n_max, replicas, seed.wrapping_add(i as u64))?;
        let mut a = FiniteSignedMeasure::dirac(n, 0);
        let mut b = FiniteSignedMeasure::dirac(n, n - 1);
        for k in 1..=n_max {
            a = propagate(&a, &c.p, 1)?;
            b = propagate(&b, &c.p, 1)?;
            let tv = tv_norm(&a.difference(&b)?);
            tally.check(2.0 * run.p_uncoupled[k] + 3.0 * run.se_adjusted[k] - tv, 0.0);
        }
    }
    Ok(tally.report("coupling-validity", chains.len(), start, true, format!("replicas={replicas} n<={n_max}")))
}

/// The linear-Gaussian AR example: overlap, `B`, and domination of exact and Monte Carlo TV.
pub fn ar_suite(replicas: usize, seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut tally = Tally::new();
    let model = ArModel::by_name("linear:0.5", "gauss", 4.0, 0.8)?;
    let eps = model.eps_delta()?;
    let closed = model.eps_delta_closed_form();
    tally.check(1e-6 - (eps - 0.317311).abs(), 0.0);
    tally.check(1e-6 - (closed - eps).abs(), 0.0);
    let big_b = model.big_b(eps);
    tally.check(1e-6 - (big_b - 3.353361).abs(), 0.0);
    let (x0, x1): (f64, f64) = (-3.0, 3.0);
    let n_max = 30;
    let curve = model.prop6_curve(n_max, 1.0 + (x1 - x0).abs())?;
    let (nodes, p) = model.discretize(-10.0, 10.0, 2001)?;
    let at = |x: f64| nodes.iter().position(|v| (v - x).abs() < 1e-9).expect("grid node");
    let mut a = FiniteSignedMeasure::dirac(nodes.len(), at(x0));
    let mut b = FiniteSignedMeasure::dirac(nodes.len(), at(x1));
    let thresholds: Vec<f64> = (0..=48).map(|k| -6.0 + 0.25 * k as f64).collect();
    let mc = threshold_lower_bounds(&model, x0, x1, n_max, replicas, &thresholds, seed)?;
    for n in 1..=n_max {
        a = propagate(&a, &p, 1)?;
        b = propagate(&b, &p, 1)?;
        let bound = curve[n - 1].1;
        tally.check(bound - tv_norm(&a.difference(&b)?), 0.0);
        tally.check(bound - mc[n - 1].lower, 0.0);
    }
    let detail = format!("eps={eps:.7} closed={closed:.7} B={big_b:.7} replicas={replicas}");
    Ok(tally.report("ar-example", 1, start, true, detail))
}

/// Drift constants of the double well and their grid checks.
pub fn annealing_constants_suite(points: usize, tol: f64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut tally = Tally::new();
    let obj = objective_registry().build("doublewell")?;
    let q = Gaussian::new(1.0);
    let dc = derive_drift_constants(obj.as_ref(), &q, 0.75, None)?;
    let v = verify_drift_constants(obj.as_ref(), &q, &dc, points)?;
    for m in [v.prop10_i, v.prop10_ii, v.eq39, v.eq40] {
        tally.check(-m, tol);
    }
    let detail = format!(
        "s={:.4} M={:.4} x={:.4} gamma={:.4} ln_b={:.4} ln_c={:.4} excess=[{:.2e},{:.2e},{:.2e},{:.2e}]",
        dc.s, dc.m, dc.x_underline, dc.gamma_underline, dc.ln_b, dc.ln_c, v.prop10_i, v.prop10_ii, v.eq39, v.eq40
    );
    Ok(tally.report("annealing-constants", 1, start, true, detail))
}

/// Laplace approximation at `gamma = 50` and the normaliser-ratio TV bound on a grid of temperatures.
pub fn laplace_shift_suite() -> Result<SuiteReport> {
    let start = Instant::now();
    let mut tally = Tally::new();
    let obj = objective_registry().build("doublewell")?;
    let lz = laplace_z(50.0, obj.as_ref())?;
    let z = PiGamma::new(obj.as_ref(), 50.0)?.z;
    let rel = (lz - z).abs() / z;
    tally.check(0.05 - rel, 0.0);
    tally.check(1e-4 - (lz - 0.2507).abs(), 0.0);
    let grid = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0];
    for (i, g) in grid.iter().enumerate() {
        for gp in &grid[i + 1..] {
            let s = pi_shift_tv_bound(*g, *gp, obj.as_ref())?;
            tally.check(s.bound - s.exact_tv, 1e-8);
            tally.check(if s.domination { 0.0 } else { -1.0 }, 0.0);
        }
    }
    Ok(tally.report("laplace-shift", 1, start, true, format!("Z={z:.6} laplace={lz:.6} rel={rel:.4}")))
}

/// Replicated annealing of the double well under the derived schedule.
pub fn annealing_convergence_suite(replicas: usize, checkpoints: &[usize], seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut tally = Tally::new();
    let obj = objective_registry().build("doublewell")?;
    let q = Gaussian::new(1.0);
    let dc = derive_drift_constants(obj.as_ref(), &q, 0.75, None)?;
    let (sched, _) = schedule_from_constants(obj.as_ref(), &dc, 0.0)?;
    let run = run_annealing(obj.as_ref(), &q, &sched, 0.0, replicas, checkpoints, seed)?;
    let cps = &run.checkpoints;
    for w in cps.windows(2) {
        tally.check(w[0].tv_estimate - w[1].tv_estimate, 0.0);
        if w[0].tv_estimate == w[1].tv_estimate {
            tally.violations += 1;
        }
    }
    let last = cps.last().expect("checkpoint");
    tally.check(0.15 - last.tv_estimate, 0.0);
    tally.check(last.mass_near_minima.iter().sum::<f64>() - 0.9, 0.0);
    let elapsed = start.elapsed().as_secs_f64();
    let tv: Vec<String> = cps.iter().map(|c| format!("{}:{:.4}(floor {:.4})", c.n, c.tv_estimate, c.noise_floor)).collect();
    let detail = format!(
        "d={:.3} gamma_underline={:.3} tv=[{}] bin_bias={:.4} mass={:.4}",
        sched.d,
        sched.gamma_underline,
        tv.join(" "),
        last.binning_bias,
        last.mass_near_minima.iter().sum::<f64>()
    );
    Ok(tally.report("annealing-convergence", replicas, start, elapsed < 600.0, detail))
}
