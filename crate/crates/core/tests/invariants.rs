use coupling_bounds::annealing::{objective_registry, pi_shift_tv_bound};
use coupling_bounds::bounds::{optimize_j, optimize_j_inhom, BoundKind, HomogeneousBoundInput, InhomogeneousSchedule};
use coupling_bounds::chain::{extract_minorization, propagate, stationary, tv_norm, FiniteKernel, FiniteSignedMeasure};
use coupling_bounds::coupling::identity_max_discrepancy;
use proptest::prelude::*;

fn kernel(n: usize) -> impl Strategy<Value = FiniteKernel> {
    prop::collection::vec(prop::collection::vec(0.05..1.0_f64, n), n).prop_map(|rows| {
        let rows = rows
            .into_iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.into_iter().map(|v| v / s).collect()
            })
            .collect();
        FiniteKernel::from_rows(rows).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_between_laws_never_grows(p in kernel(4), x in 0usize..4, y in 0usize..4) {
        let mut a = FiniteSignedMeasure::dirac(4, x);
        let mut b = FiniteSignedMeasure::dirac(4, y);
        let mut prev = tv_norm(&a.difference(&b).unwrap());
        for _ in 0..15 {
            a = propagate(&a, &p, 1).unwrap();
            b = propagate(&b, &p, 1).unwrap();
            prop_assert!((a.mass() - 1.0).abs() < 1e-12);
            let d = tv_norm(&a.difference(&b).unwrap());
            prop_assert!(d <= prev + 1e-12);
            prev = d;
        }
    }

    #[test]
    fn stationary_law_is_fixed(p in kernel(5)) {
        let pi = stationary(&p).unwrap();
        let next = propagate(&pi, &p, 1).unwrap();
        prop_assert!(tv_norm(&next.difference(&pi).unwrap()) < 1e-10);
    }

    #[test]
    fn bell_identity_on_random_chains(p in kernel(3), xi in kernel(3), steps in 1usize..4) {
        let cert = extract_minorization(&p, &[(0, 2), (1, 1), (2, 0)]).unwrap();
        let d = identity_max_discrepancy(&p, &cert, None, xi.row(0), xi.row(1), steps).unwrap();
        prop_assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn constant_schedule_matches_homogeneous_tv(e in 0.05..0.95_f64, l in 0.05..0.95_f64, bb in 1.0..3.0_f64,
                                                 v0 in 1.0..10.0_f64, n in 1usize..25) {
        let inp = HomogeneousBoundInput::new(e, l, 0.5, bb, v0).unwrap();
        let s = InhomogeneousSchedule::constant(&inp, n);
        let (_, h) = optimize_j(&inp, n, BoundKind::Tv).unwrap();
        let (_, i) = optimize_j_inhom(&s, n, BoundKind::Tv).unwrap();
        prop_assert!((h - i).abs() <= 1e-12 * h.max(1.0));
    }

    #[test]
    fn shift_bound_dominates_exact(g in 0.2..20.0_f64, r in 1.01..4.0_f64) {
        let obj = objective_registry().build("doublewell").unwrap();
        let s = pi_shift_tv_bound(g, g * r, obj.as_ref()).unwrap();
        prop_assert!(s.bound >= s.exact_tv - 1e-8);
    }
}
