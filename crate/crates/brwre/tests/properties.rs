//! Property-based invariants over randomly generated models.

use brwre::analytics::{annealed_log_laplace, solve_theta_star};
use brwre::env::{EnvironmentModel, PointProcessLaw};
use brwre::fit::weighted_linear_fit;
use brwre::rwre::{BarrierShape, BarrierSide, BarrierSpec};
use proptest::prelude::*;

fn arb_mixture() -> impl Strategy<Value = PointProcessLaw> {
    (
        0.1f64..0.9,
        prop::collection::vec(-2.0f64..2.0, 2..4),
        prop::collection::vec(-2.0f64..2.0, 1..3),
    )
        .prop_map(|(w, d1, d2)| PointProcessLaw::mixture(vec![(w, d1), (1.0 - w, d2)]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn theta_star_is_a_root_when_it_exists(law in arb_mixture()) {
        let model = EnvironmentModel::single(law);
        prop_assume!(model.validate().is_ok());
        if let Ok(theta) = solve_theta_star(&model) {
            prop_assert!(theta > 0.0);
            let a = annealed_log_laplace(&model, theta).unwrap();
            // theta kappa'(theta) - kappa(theta) vanishes at the minimizer
            prop_assert!((theta * a.d1 - a.kappa).abs() < 1e-8,
                "g({theta}) = {}", theta * a.d1 - a.kappa);
        }
    }

    #[test]
    fn log_laplace_is_convex(law in arb_mixture(), theta in 0.1f64..3.0) {
        let model = EnvironmentModel::single(law);
        prop_assume!(model.validate().is_ok());
        let a = annealed_log_laplace(&model, theta).unwrap();
        prop_assert!(a.d2 >= -1e-12, "kappa''({theta}) = {}", a.d2);
    }

    #[test]
    fn excursion_barrier_shape_is_symmetric(n in 4usize..200, alpha in 0.0f64..0.49) {
        let spec = BarrierSpec {
            shape: BarrierShape::ExcursionCeiling { alpha },
            side: BarrierSide::StayBelow,
        };
        spec.validate().unwrap();
        prop_assert_eq!(spec.r(0, n), 0.0);
        prop_assert_eq!(spec.r(n, n), 0.0);
        for j in 0..=n {
            prop_assert!(spec.r(j, n) >= 0.0);
            prop_assert!((spec.r(j, n) - spec.r(n - j, n)).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_fit_recovers_exact_lines(
        a in -5.0f64..5.0,
        b in -5.0f64..5.0,
        ws in prop::collection::vec(0.1f64..10.0, 4..12),
    ) {
        let pts: Vec<(f64, f64, f64)> = ws
            .iter()
            .enumerate()
            .map(|(i, &w)| (i as f64, a + b * i as f64, w))
            .collect();
        let fit = weighted_linear_fit(&pts).unwrap();
        prop_assert!((fit.slope - b).abs() < 1e-9);
        prop_assert!((fit.intercept - a).abs() < 1e-8);
    }
}
