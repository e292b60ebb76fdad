use ase_core::estimator::{cs_radius, rho_star, z_quantile};
use ase_core::{AseState, EifVector};
use proptest::prelude::*;

fn state_from(rows: &[Vec<f64>]) -> AseState {
    let mut st = AseState::new(rows[0].len());
    for r in rows {
        st.update(&EifVector(r.clone())).unwrap();
    }
    st
}

proptest! {
    #[test]
    fn running_moments_match_two_pass(
        rows in prop::collection::vec(prop::collection::vec(-50.0..50.0f64, 3), 2..200),
    ) {
        let st = state_from(&rows);
        let n = rows.len() as f64;
        let est = st.estimate().unwrap();
        let var = st.variance_estimate().unwrap();
        for t in 0..3 {
            let mean = rows.iter().map(|r| r[t]).sum::<f64>() / n;
            let v = rows.iter().map(|r| (r[t] - mean).powi(2)).sum::<f64>() / n;
            prop_assert!((est[t] - mean).abs() <= 1e-10 * (1.0 + mean.abs()));
            prop_assert!((var[t] - v).abs() <= 1e-9 * (1.0 + v));
        }
    }

    #[test]
    fn cs_radius_shrinks_with_rounds(v in 0.01..5.0f64, rho in 0.01..1.0f64, r in 1u64..100_000) {
        let a = cs_radius(r, v, rho, 0.05).unwrap();
        let b = cs_radius(r * 2, v, rho, 0.05).unwrap();
        prop_assert!(a > 0.0 && b < a);
    }

    #[test]
    fn cs_radius_grows_with_variance_and_confidence(v in 0.01..5.0f64, rho in 0.01..1.0f64, r in 10u64..100_000) {
        let base = cs_radius(r, v, rho, 0.05).unwrap();
        prop_assert!(cs_radius(r, v * 1.5, rho, 0.05).unwrap() > base);
        prop_assert!(cs_radius(r, v, rho, 0.01).unwrap() > base);
    }

    #[test]
    fn sequence_is_wider_than_fixed_time_interval(v in 0.01..5.0f64, r in 2u64..100_000) {
        let rho = rho_star(r, 0.05).unwrap();
        let ci = z_quantile(0.975).unwrap() * (v / r as f64).sqrt();
        prop_assert!(cs_radius(r, v, rho, 0.05).unwrap() > ci);
    }
}

#[test]
fn rho_star_is_near_the_width_minimizer() {
    let (r, v, alpha) = (2000, 1.0, 0.05);
    let star = rho_star(r, alpha).unwrap();
    let at_star = cs_radius(r, v, star, alpha).unwrap();
    let best = (-400..=400)
        .map(|k| star * 10f64.powf(k as f64 / 200.0))
        .map(|rho| cs_radius(r, v, rho, alpha).unwrap())
        .fold(f64::INFINITY, f64::min);
    assert!(at_star <= best * 1.01, "{at_star} vs {best}");
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(cs_radius(0, 1.0, 0.1, 0.05).is_err());
    assert!(cs_radius(10, 1.0, 0.0, 0.05).is_err());
    assert!(cs_radius(10, 1.0, 0.1, 1.0).is_err());
    assert!(rho_star(0, 0.05).is_err());
    assert!(z_quantile(0.0).is_err());
    let mut st = AseState::new(2);
    assert!(st.estimate().is_err());
    assert!(st.update(&EifVector(vec![1.0])).is_err());
    assert!(st.update(&EifVector(vec![f64::NAN, 0.0])).is_err());
    st.update(&EifVector(vec![1.0, 2.0])).unwrap();
    assert!(st.variance_estimate().is_err());
    assert_eq!(st.count(), 1);
}

#[test]
fn intervals_are_symmetric_and_nested() {
    let rows: Vec<Vec<f64>> = (0..500)
        .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos() * 2.0])
        .collect();
    let st = state_from(&rows);
    let ci = st.fixed_time_ci(0.05).unwrap();
    let cs = st.asymp_cs(0.05, rho_star(500, 0.05).unwrap()).unwrap();
    for t in 0..2 {
        assert_eq!(ci.point[t], cs.point[t]);
        assert!((ci.upper(t) + ci.lower(t) - 2.0 * ci.point[t]).abs() < 1e-12);
        assert!(cs.lower(t) < ci.lower(t) && ci.upper(t) < cs.upper(t));
        assert!(ci.covers(t, ci.point[t]));
    }
}
