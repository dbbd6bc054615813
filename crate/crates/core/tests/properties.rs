use proptest::prelude::*;

use tap_core::free_energy::{energy, onsager_correction, LinearModel, Objective, VariationalState};
use tap_core::rs_potential::RsPotential;
use tap_core::scalar_channel::{
    dual_solve, envelopes, neg_entropy, tilted_moments, DualPair, MomentPair, Prior, PriorSpec, QuadratureSpec,
};
use tap_core::experiments::{instance_from_seed, Design};

fn three_point() -> Prior {
    Prior::three_point()
}

fn bg() -> Prior {
    PriorSpec::BernoulliGaussian {
        sparsity: 0.5,
        variance: 1.0,
    }
    .to_prior_with_nodes(41)
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn dual_roundtrip(lambda in -8.0f64..8.0, gamma in -8.0f64..8.0) {
        let prior = three_point();
        let t = tilted_moments(&prior, DualPair::new(lambda, gamma)).unwrap();
        let back = dual_solve(&prior, t.moments(), None).unwrap();
        prop_assert!((back.lambda - lambda).abs() < 1e-8 * (1.0 + lambda.abs()));
        prop_assert!((back.gamma - gamma).abs() < 1e-8 * (1.0 + gamma.abs()));
    }

    #[test]
    fn moments_stay_inside_envelopes(lambda in -8.0f64..8.0, gamma in -0.5f64..8.0) {
        for prior in [three_point(), bg()] {
            let t = tilted_moments(&prior, DualPair::new(lambda, gamma)).unwrap();
            let (lo, hi) = envelopes(&prior, t.m);
            prop_assert!(t.s >= lo - 1e-12 && t.s <= hi + 1e-12);
            prop_assert!(t.s - t.m * t.m >= -1e-12);
        }
    }

    #[test]
    fn mean_increases_in_lambda(lambda in -6.0f64..6.0, gamma in -2.0f64..6.0, d in 1e-3f64..1.0) {
        let prior = three_point();
        let a = tilted_moments(&prior, DualPair::new(lambda, gamma)).unwrap();
        let b = tilted_moments(&prior, DualPair::new(lambda + d, gamma)).unwrap();
        prop_assert!(b.m >= a.m);
        let c = tilted_moments(&prior, DualPair::new(lambda, gamma + d)).unwrap();
        prop_assert!(c.s <= a.s);
    }

    #[test]
    fn jacobian_is_covariance(lambda in -4.0f64..4.0, gamma in -2.0f64..4.0) {
        let prior = three_point();
        let t = tilted_moments(&prior, DualPair::new(lambda, gamma)).unwrap();
        let h = 1e-6;
        let up = tilted_moments(&prior, DualPair::new(lambda + h, gamma)).unwrap();
        let dn = tilted_moments(&prior, DualPair::new(lambda - h, gamma)).unwrap();
        let dm = (up.m - dn.m) / (2.0 * h);
        let ds = (up.s - dn.s) / (2.0 * h);
        prop_assert!((dm - t.cov_matrix[0][0]).abs() < 1e-6);
        prop_assert!((ds - t.cov_matrix[0][1]).abs() < 1e-6);
        let up = tilted_moments(&prior, DualPair::new(lambda, gamma + h)).unwrap();
        let dn = tilted_moments(&prior, DualPair::new(lambda, gamma - h)).unwrap();
        let ds = (up.s - dn.s) / (2.0 * h);
        prop_assert!((ds + 0.5 * t.cov_matrix[1][1]).abs() < 1e-6);
    }

    #[test]
    fn neg_entropy_midpoint_convex(
        l1 in -5.0f64..5.0, g1 in -2.0f64..5.0, l2 in -5.0f64..5.0, g2 in -2.0f64..5.0,
    ) {
        let prior = three_point();
        let a = tilted_moments(&prior, DualPair::new(l1, g1)).unwrap().moments();
        let b = tilted_moments(&prior, DualPair::new(l2, g2)).unwrap().moments();
        let mid = MomentPair::new(0.5 * (a.m + b.m), 0.5 * (a.s + b.s));
        let (fa, fb, fm) = (
            neg_entropy(&prior, a).unwrap(),
            neg_entropy(&prior, b).unwrap(),
            neg_entropy(&prior, mid).unwrap(),
        );
        prop_assert!(fm <= 0.5 * (fa + fb) + 1e-9);
        prop_assert!(fa >= -1e-12);
    }

    #[test]
    fn mmse_decreasing(g in 1e-3f64..50.0, ratio in 1.01f64..3.0) {
        let pot = RsPotential::new(three_point(), 0.09, 1.0, QuadratureSpec::default()).unwrap();
        let (a, b) = (pot.mmse(g), pot.mmse(g * ratio));
        prop_assert!(b <= a + 1e-12);
        prop_assert!(a <= three_point().variance() + 1e-12);
    }

    #[test]
    fn onsager_orders_energies(seed in 0u64..10_000, spread in 0.0f64..3.0) {
        let spec = PriorSpec::ThreePoint;
        let (model, _): (LinearModel, _) =
            instance_from_seed(&spec, Design::Gaussian, 24, 16, 0.5, seed).unwrap();
        let prior = three_point();
        let duals = (0..16)
            .map(|j| DualPair::new(spread * ((j as f64) - 7.5) / 7.5, 1.0 + spread * ((j * 7 % 5) as f64)))
            .collect();
        let state = VariationalState::from_duals(&prior, duals).unwrap();
        let tap = energy(&model, &state, Objective::Tap).unwrap();
        let mf = energy(&model, &state, Objective::Mf).unwrap();
        let ons = onsager_correction(&model, &state);
        prop_assert!(ons <= 0.0);
        prop_assert!(tap <= mf);
        prop_assert!((mf + ons - tap).abs() < 1e-9 * (1.0 + mf.abs()));
    }
}
