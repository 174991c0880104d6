mod common;

use common::SLACK;
use multilevel_prox::diagnostics::bound_constants;
use multilevel_prox::schedules::{nested_weights, rate_constant_j, uniform_tail_weights};
use multilevel_prox::{gallery, Schedule, Vector};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn proxgrad_maps_are_nonexpansive(seed in any::<u64>()) {
        prop_assert!(common::nonexpansive(seed) >= -SLACK);
    }

    #[test]
    fn projections_are_firmly_nonexpansive(seed in any::<u64>()) {
        prop_assert!(common::firm_projection(seed) >= -SLACK);
    }

    #[test]
    fn selector_step_contracts(seed in any::<u64>()) {
        prop_assert!(common::contraction(seed) >= -SLACK);
    }

    #[test]
    fn identity_minus_t_is_monotone(seed in any::<u64>()) {
        prop_assert!(common::monotone_residual(seed) >= -SLACK);
    }

    #[test]
    fn identity_minus_s_is_strongly_monotone(seed in any::<u64>()) {
        prop_assert!(common::strongly_monotone_residual(seed) >= -SLACK);
    }

    #[test]
    fn residual_bounded_by_subgradient_distance(seed in any::<u64>()) {
        prop_assert!(common::residual_bound(seed) >= -SLACK);
    }

    #[test]
    fn prox_step_descends_toward_any_point(seed in any::<u64>()) {
        prop_assert!(common::descent(seed) >= -SLACK);
    }

    #[test]
    fn three_point_inequality(seed in any::<u64>()) {
        prop_assert!(common::three_point(seed) >= -SLACK);
    }

    #[test]
    fn gradients_match_central_differences(seed in any::<u64>()) {
        prop_assert!(common::gradient_error(seed) <= 1e-6);
    }

    #[test]
    fn power_steps_lie_in_unit_interval(
        lambda in 0.01f64..3.0,
        gamma in 0.01f64..3.0,
        oscillate in any::<bool>(),
        k in 1usize..1_000_000,
    ) {
        let s = if oscillate {
            Schedule::oscillating_power(lambda, gamma).unwrap()
        } else {
            Schedule::power(lambda, gamma).unwrap()
        };
        let (a, b) = s.at(k).unwrap();
        prop_assert!(a > 0.0 && a <= 1.0 && b > 0.0 && b <= 1.0);
        let (a, b) = Schedule::monomial(lambda, gamma).unwrap().at(k).unwrap();
        prop_assert!(a > 0.0 && a <= 1.0 && b > 0.0 && b <= 1.0);
    }

    #[test]
    fn rate_schedule_shape(r in 0.0f64..0.999, k in 1usize..1_000_000) {
        let s = Schedule::rate(r).unwrap();
        let j = rate_constant_j(r) as usize;
        let (a, b) = s.at(k).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(a > 0.0 && a <= 1.0);
        if k <= j {
            prop_assert_eq!(a, 1.0);
        } else {
            prop_assert!(a < 1.0);
            prop_assert!(s.at(k + 1).unwrap().0 < a);
        }
    }

    #[test]
    fn ratio_counterexample_ratio_stays_in_band(k in 1usize..1_000_000) {
        let (a, b) = Schedule::RatioCounterexample.at(k).unwrap();
        let ratio = b / a;
        prop_assert!(ratio > 0.4999 && ratio < 0.7501);
    }

    #[test]
    fn nested_weights_form_convex_combination(
        a in 1e-6f64..=1.0,
        b in 1e-6f64..=1.0,
        levels in 1usize..8,
    ) {
        let w = nested_weights(a, b, levels).unwrap();
        prop_assert_eq!(w.len(), levels + 1);
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn uniform_tail_weights_form_convex_combination(
        a in 1e-6f64..=1.0,
        b in 1e-6f64..=1.0,
        levels in 1usize..8,
    ) {
        match uniform_tail_weights(a, b, levels) {
            Ok(w) => {
                prop_assert_eq!(w.len(), levels + 1);
                prop_assert!(w.iter().all(|v| *v >= 0.0));
                prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-14);
            }
            Err(_) => prop_assert!(levels >= 2 && a + b > 1.0),
        }
    }

    #[test]
    fn bound_constant_grows_with_start_distance(d1 in 0.0f64..50.0, extra in 0.0f64..50.0) {
        let e = gallery("nested3").unwrap();
        let p = e.trilevel().unwrap();
        let x_ref = Vector::from_column_slice(&[1.0, 3.0, 1.0]);
        let dir = Vector::from_column_slice(&[0.6, 0.0, -0.8]);
        let near = bound_constants(p, &x_ref, &(&x_ref + &dir * d1), 1.5).unwrap();
        let far = bound_constants(p, &x_ref, &(&x_ref + &dir * (d1 + extra)), 1.5).unwrap();
        prop_assert!(far.c_x >= near.c_x);
        prop_assert!(near.c_x >= d1 - 1e-12);
    }
}

#[test]
fn ratio_counterexample_limsup_is_three_quarters() {
    let top = (1..=100_000)
        .map(|k| {
            let (a, b) = Schedule::RatioCounterexample.at(k).unwrap();
            b / a
        })
        .fold(0.0, f64::max);
    assert!((0.7499..=0.7501).contains(&top), "max ratio {top}");
}
