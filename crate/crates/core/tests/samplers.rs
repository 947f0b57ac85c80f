use btf_core::constraints::{ConstraintSet, Monotone};
use btf_core::linalg::BandedSym;
use btf_core::model::LocalScales;
use btf_core::rng::seeded;
use btf_core::samplers::{
    constraint_intervals, gass_step, horseshoe_block_update, pav_monotone_projection, polya_gamma_sample,
    GassConfig, MvnPrior, ShrinkageUpdate,
};
use proptest::prelude::*;
use std::f64::consts::PI;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn intervals_agree_with_direct_evaluation(a in -3.0..3.0f64, b in -3.0..3.0f64, c in -4.0..4.0f64) {
        let set = constraint_intervals(a, b, c);
        for g in 0..2000 {
            let th = -PI + 2.0 * PI * (g as f64 + 0.5) / 2000.0;
            let lhs = a * th.cos() + b * th.sin();
            // Skip angles within rounding distance of a boundary.
            if (lhs - c).abs() > 1e-9 {
                prop_assert_eq!(set.contains(th), lhs >= c, "theta {}", th);
            }
        }
    }

    #[test]
    fn pav_is_monotone_idempotent_and_sum_preserving(y in prop::collection::vec(-10.0..10.0f64, 1..30), up in any::<bool>()) {
        let dir = if up { Monotone::Nondecreasing } else { Monotone::Nonincreasing };
        let p = pav_monotone_projection(&y, dir).unwrap();
        for w in p.windows(2) {
            if up {
                prop_assert!(w[0] <= w[1] + 1e-12);
            } else {
                prop_assert!(w[0] + 1e-12 >= w[1]);
            }
        }
        let again = pav_monotone_projection(&p, dir).unwrap();
        for (x, z) in p.iter().zip(&again) {
            prop_assert!((x - z).abs() < 1e-12);
        }
        let (s1, s2): (f64, f64) = (y.iter().sum(), p.iter().sum());
        prop_assert!((s1 - s2).abs() < 1e-9);
    }

    #[test]
    fn pav_directions_are_mirror_images(y in prop::collection::vec(-10.0..10.0f64, 1..20)) {
        let down = pav_monotone_projection(&y, Monotone::Nonincreasing).unwrap();
        let neg: Vec<f64> = y.iter().map(|x| -x).collect();
        let up = pav_monotone_projection(&neg, Monotone::Nondecreasing).unwrap();
        for (a, b) in down.iter().zip(&up) {
            prop_assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn polya_gamma_draws_are_positive(b in 0.05..250.0f64, c in -60.0..60.0f64, seed in 0u64..1000) {
        let mut rng = seeded(seed);
        let x = polya_gamma_sample(b, c, &mut rng).unwrap();
        prop_assert!(x.is_finite() && x > 0.0);
    }

    #[test]
    fn gass_keeps_box_and_order_constraints(
        start in prop::collection::vec(0.2..0.8f64, 2..6),
        seed in 0u64..1000,
    ) {
        let d = start.len();
        let mut x = start.clone();
        x.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let (mut rows, mut gamma) = (Vec::new(), Vec::new());
        for t in 0..d {
            let mut lo = vec![0.0; d];
            lo[t] = 1.0;
            rows.push(lo);
            gamma.push(0.1);
            let mut hi = vec![0.0; d];
            hi[t] = -1.0;
            rows.push(hi);
            gamma.push(-1.0);
            if t + 1 < d {
                let mut ord = vec![0.0; d];
                ord[t] = 1.0;
                ord[t + 1] = -1.0;
                rows.push(ord);
                gamma.push(0.0);
            }
        }
        let cons = ConstraintSet::new(rows, gamma, d).unwrap();
        let prior = MvnPrior::from_covariance(vec![0.5; d], &BandedSym::identity_scaled(d, 0, 0.3)).unwrap();
        let loglik = |z: &[f64]| -z.iter().map(|v| (v - 0.4).powi(2)).sum::<f64>();
        let mut rng = seeded(seed);
        for _ in 0..50 {
            x = gass_step(&x, &prior, &loglik, &cons, &GassConfig::default(), &mut rng).unwrap().x;
            prop_assert!(cons.is_satisfied(&x));
        }
    }

    #[test]
    fn horseshoe_scales_stay_positive(norms in prop::collection::vec(0.0..1e6f64, 1..8), rho2 in 1e-4..10.0f64, seed in 0u64..100) {
        let mut s = LocalScales::ones(norms.len());
        let mut rng = seeded(seed);
        for variant in [ShrinkageUpdate::Standard, ShrinkageUpdate::TotalNorm] {
            for _ in 0..20 {
                horseshoe_block_update(&norms, rho2, 3, &mut s, variant, &mut rng).unwrap();
                prop_assert!(s.all_positive());
                prop_assert!(s.tau2.iter().chain(&s.c).chain(&s.phi).chain(&s.eta).all(|x| x.is_finite()));
            }
        }
    }
}
