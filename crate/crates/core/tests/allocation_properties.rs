use ase_core::allocation::{
    a_criterion, a_optimal_policy, a_optimal_prob, censoring_ratio_closed_form, d_criterion,
    d_optimal_policy, e_criterion, e_optimal_policy, policy_on_grid, sigma_eff, truncate,
};
use ase_core::{DesignCriterion, DgpConfig, GroundTruth, TieConvention, TruncationSchedule};
use proptest::prelude::*;

fn synthetic_truth() -> GroundTruth {
    let dgp = DgpConfig::default().build(TieConvention::Ties).unwrap();
    GroundTruth::new(&dgp, TieConvention::Ties).unwrap()
}

proptest! {
    #[test]
    fn optimal_probability_is_bounded_and_monotone(
        v0 in 1e-6..10.0f64,
        v1 in 1e-6..10.0f64,
        bump in 1e-3..5.0f64,
    ) {
        let p = a_optimal_prob(v0, v1);
        prop_assert!(p > 0.0 && p < 1.0);
        prop_assert!(a_optimal_prob(v0, v1 + bump) > p);
        prop_assert!(a_optimal_prob(v0 + bump, v1) < p);
        prop_assert!((a_optimal_prob(v1, v0) - (1.0 - p)).abs() < 1e-12);
    }

    #[test]
    fn optimal_probability_minimises_two_arm_variance(
        v0 in 1e-3..10.0f64,
        v1 in 1e-3..10.0f64,
        q in 0.01..0.99f64,
    ) {
        let p = a_optimal_prob(v0, v1);
        let cost = |p: f64| v1 / p + v0 / (1.0 - p);
        prop_assert!(cost(p) <= cost(q) + 1e-12);
    }

    #[test]
    fn truncation_stays_inside_bounds(raw in 0.0..=1.0f64, r in 1u64..1_000_000, alpha in 0.01..0.49f64) {
        for sched in [TruncationSchedule::ConstantClip { alpha }, TruncationSchedule::growing()] {
            let e = truncate(raw, r, &sched);
            let lo = 1.0 / e.k;
            prop_assert!(e.truncated >= lo && e.truncated <= 1.0 - lo);
            if raw >= lo && raw <= 1.0 - lo {
                prop_assert_eq!(e.truncated, raw);
            }
        }
    }

    #[test]
    fn growing_schedule_is_monotone_and_capped(r in 1u64..10_000_000) {
        let sched = TruncationSchedule::growing();
        prop_assert!(sched.k(r + 1) >= sched.k(r));
        prop_assert!(sched.k(r) >= 2.0 && sched.k(r) <= 100.0);
    }

    #[test]
    fn closed_form_ratio_is_increasing_in_g(kappa in 0.1..10.0f64, g in 0.1..10.0f64) {
        let p = censoring_ratio_closed_form(kappa, g);
        prop_assert!(p > 0.0 && p < 1.0);
        prop_assert!(censoring_ratio_closed_form(kappa, g * 1.1) > p);
        prop_assert!((censoring_ratio_closed_form(kappa, kappa) - 0.5).abs() < 1e-12);
    }
}

#[test]
fn invalid_schedules_are_config_errors() {
    for sched in [
        TruncationSchedule::ConstantClip { alpha: 0.0 },
        TruncationSchedule::ConstantClip { alpha: 0.5 },
        TruncationSchedule::Growing {
            k0: 1.5,
            exponent: 0.2,
            k_cap: 100.0,
        },
        TruncationSchedule::Growing {
            k0: 2.0,
            exponent: 0.3,
            k_cap: 100.0,
        },
        TruncationSchedule::Growing {
            k0: 10.0,
            exponent: 0.2,
            k_cap: 5.0,
        },
    ] {
        assert!(sched.validate().unwrap_err().is_config(), "{sched:?}");
    }
}

#[test]
fn a_optimal_policy_beats_perturbations() {
    let truth = synthetic_truth();
    let alpha = 0.05;
    let best = a_criterion(&sigma_eff(&a_optimal_policy(&truth, alpha), &truth));
    let uniform = a_criterion(&sigma_eff(&vec![0.5; truth.grid.len()], &truth));
    assert!(best <= uniform);
    for (i, delta) in [(0, 0.02), (7, -0.03), (truth.grid.len() - 1, 0.04)] {
        let mut p = a_optimal_policy(&truth, alpha);
        p[i] = (p[i] + delta).clamp(alpha, 1.0 - alpha);
        assert!(a_criterion(&sigma_eff(&p, &truth)) >= best - 1e-12);
    }
}

#[test]
fn fixed_point_policies_improve_their_criteria() {
    let truth = synthetic_truth();
    let alpha = 0.05;
    let uniform = vec![0.5; truth.grid.len()];
    let start = a_optimal_policy(&truth, alpha);

    let d = d_optimal_policy(&truth, alpha, 10_000, 1e-12).unwrap();
    assert!(d.residual <= 1e-10, "residual {}", d.residual);
    let d_val = d_criterion(&sigma_eff(&d.policy, &truth));
    assert!(d_val <= d_criterion(&sigma_eff(&uniform, &truth)) + 1e-12);
    assert!(d_val <= d_criterion(&sigma_eff(&start, &truth)) + 1e-12);

    let e = e_optimal_policy(&truth, alpha, 10_000, 1e-12).unwrap();
    assert!(e.residual <= 1e-10, "residual {}", e.residual);
    let e_val = e_criterion(&sigma_eff(&e.policy, &truth));
    assert!(e_val <= e_criterion(&sigma_eff(&uniform, &truth)) + 1e-12);

    for p in d.policy.iter().chain(&e.policy) {
        assert!((alpha..=1.0 - alpha).contains(p));
    }
}

#[test]
fn policy_on_grid_dispatches_every_criterion() {
    let truth = synthetic_truth();
    for c in [
        DesignCriterion::AOpt,
        DesignCriterion::DOpt,
        DesignCriterion::EOpt,
        DesignCriterion::NeymanNaive,
        DesignCriterion::Uniform,
    ] {
        let p = policy_on_grid(c, &truth, 0.05).unwrap();
        assert_eq!(p.len(), truth.grid.len());
        assert!(p.iter().all(|v| (0.05..=0.95).contains(v)), "{c:?}");
    }
    assert!(policy_on_grid(DesignCriterion::Uniform, &truth, 0.05)
        .unwrap()
        .iter()
        .all(|&v| v == 0.5));
}

#[test]
fn uncensored_twins_policy_is_neyman() {
    let dgp = DgpConfig::Twins {
        params: ase_core::TwinsDgpParams {
            censor_control: 0.0,
            censor_treated: 0.0,
            ..Default::default()
        },
    }
    .build(TieConvention::Ties)
    .unwrap();
    let truth = GroundTruth::new(&dgp, TieConvention::Ties).unwrap();
    let a = policy_on_grid(DesignCriterion::AOpt, &truth, 0.01).unwrap();
    let n = policy_on_grid(DesignCriterion::NeymanNaive, &truth, 0.01).unwrap();
    for (x, y) in a.iter().zip(&n) {
        assert!((x - y).abs() < 1e-12);
    }
}
