use std::sync::Arc;

use ase_core::harness::rng::RoundStreams;
use ase_core::nuisance::{fit, FoldId, Learner, RefitMode};
use ase_core::{
    Arm, CrossFitState, Dgp, DgpConfig, HazardLearnerSpec, Observation, ObservedTime, TieConvention,
};

fn history(dgp: &Dgp, n: usize, seed: u64) -> Vec<Observation> {
    let mut streams = RoundStreams::new(dgp, TieConvention::Ties, seed);
    (0..n)
        .map(|_| {
            let d = streams.next_draw().unwrap();
            let arm = d.assign(0.5);
            Observation {
                x: d.x.clone(),
                arm,
                outcome: d.outcomes[arm.index()],
                round: d.round,
            }
        })
        .collect()
}

/// Largest hazard error over a 40-point grid, both arms and times `0..=upto`.
fn sup_error(spec: &HazardLearnerSpec, dgp: &Dgp, data: &[Observation], upto: usize) -> f64 {
    let model = fit(
        spec,
        data,
        dgp.horizon(),
        TieConvention::Ties,
        None,
        FoldId::Full,
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..40 {
        let x = [(k as f64 + 0.5) / 40.0];
        for arm in Arm::BOTH {
            let fitted = model.predict(&x, arm).unwrap();
            let truth = dgp.hazards(&x, arm).unwrap();
            for (a, b) in fitted.hazards().iter().zip(truth.hazards()).take(upto + 1) {
                worst = worst
                    .max((a.event - b.event).abs())
                    .max((a.censor - b.censor).abs());
            }
        }
    }
    worst
}

#[test]
fn binned_learner_is_consistent() {
    let dgp = DgpConfig::default().build(TieConvention::Ties).unwrap();
    let spec = HazardLearnerSpec::Binned {
        bins: 20,
        smoothing: 0.5,
    };
    let data = history(&dgp, 100_000, 3);
    let errors: Vec<f64> = [1_000, 10_000, 100_000]
        .iter()
        .map(|&n| sup_error(&spec, &dgp, &data[..n], 4))
        .collect();
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
}

#[test]
fn binned_cells_within_sampling_error() {
    let dgp = DgpConfig::default().build(TieConvention::Ties).unwrap();
    let spec = HazardLearnerSpec::Binned {
        bins: 20,
        smoothing: 0.5,
    };
    let data = history(&dgp, 100_000, 3);
    let model = fit(
        &spec,
        &data,
        dgp.horizon(),
        TieConvention::Ties,
        None,
        FoldId::Full,
    )
    .unwrap();
    for b in 0..20 {
        let x = [(b as f64 + 0.5) / 20.0];
        for arm in Arm::BOTH {
            let fitted = model.predict(&x, arm).unwrap();
            let truth = dgp.hazards(&x, arm).unwrap();
            for i in 0..=4 {
                let at_risk = data
                    .iter()
                    .filter(|o| {
                        o.arm == arm && (o.x[0] * 20.0) as usize == b && o.outcome.at_risk(i)
                    })
                    .count() as f64;
                let tol = |p: f64| 4.5 * (p * (1.0 - p) / at_risk).sqrt() + 0.01;
                let (f, t) = (fitted.hazards()[i], truth.hazards()[i]);
                assert!(
                    (f.event - t.event).abs() <= tol(t.event),
                    "bin {b} {arm:?} t={i}"
                );
                assert!(
                    (f.censor - t.censor).abs() <= tol(t.censor),
                    "bin {b} {arm:?} t={i}"
                );
            }
        }
    }
}

#[test]
fn predictions_are_valid_hazards() {
    let dgp = DgpConfig::default().build(TieConvention::Ties).unwrap();
    let data = history(&dgp, 300, 9);
    for spec in [
        HazardLearnerSpec::default(),
        HazardLearnerSpec::Binned {
            bins: 20,
            smoothing: 0.5,
        },
        HazardLearnerSpec::default().with_constant_censoring(),
    ] {
        for conv in [TieConvention::Ties, TieConvention::NoTies] {
            let model = fit(&spec, &data, dgp.horizon(), conv, None, FoldId::Full).unwrap();
            for k in 0..=10 {
                for arm in Arm::BOTH {
                    let nu = model.predict(&[k as f64 / 10.0], arm).unwrap();
                    nu.validate(conv).unwrap();
                    for h in nu.hazards() {
                        assert!(h.event > 0.0 && h.event < 1.0);
                        assert!(h.censor > 0.0 && h.censor < 1.0);
                        assert!(h.event + h.censor <= 1.0);
                    }
                }
            }
        }
    }
}

#[test]
fn fitting_is_deterministic() {
    let dgp = DgpConfig::default().build(TieConvention::Ties).unwrap();
    let data = history(&dgp, 500, 4);
    let spec = HazardLearnerSpec::default();
    let a = fit(
        &spec,
        &data,
        dgp.horizon(),
        TieConvention::Ties,
        None,
        FoldId::Zero,
    )
    .unwrap();
    let b = fit(
        &spec,
        &data,
        dgp.horizon(),
        TieConvention::Ties,
        None,
        FoldId::Zero,
    )
    .unwrap();
    for x in [0.0, 0.3, 0.77] {
        assert_eq!(a.predict_pair(&[x]).unwrap(), b.predict_pair(&[x]).unwrap());
    }
}

#[test]
fn scoring_never_sees_the_units_own_fold() {
    let dgp = Arc::new(DgpConfig::default().build(TieConvention::Ties).unwrap());
    let data = history(&dgp, 400, 8);
    let learner = Learner::new(
        HazardLearnerSpec::default(),
        dgp.horizon(),
        TieConvention::Ties,
        None,
    )
    .unwrap();
    let run = |flip_own_fold: bool| {
        let mut st = CrossFitState::new(learner.clone(), 50, RefitMode::Rolling).unwrap();
        for obs in &data {
            let mut obs = obs.clone();
            // unit 401 belongs to the odd fold
            if flip_own_fold && obs.round % 2 == 1 {
                obs.outcome = match obs.outcome {
                    ObservedTime::PastHorizon => ObservedTime::event_at(0),
                    _ => ObservedTime::PastHorizon,
                };
            }
            st.update(obs).unwrap();
        }
        st.predict_for_unit(401, &[0.42]).unwrap()
    };
    assert_eq!(run(false), run(true));
}

#[test]
fn crossfit_rejects_out_of_order_rounds() {
    let dgp = DgpConfig::default().build(TieConvention::Ties).unwrap();
    let data = history(&dgp, 3, 1);
    let learner = Learner::new(
        HazardLearnerSpec::default(),
        dgp.horizon(),
        TieConvention::Ties,
        None,
    )
    .unwrap();
    let mut st = CrossFitState::new(learner, 100, RefitMode::Rolling).unwrap();
    st.update(data[0].clone()).unwrap();
    assert!(st.update(data[2].clone()).is_err());
    assert!(st.predict_for_unit(2, &[0.5]).is_err());
}
