use ase_core::harness::figures::Preset;
use ase_core::harness::rng::RoundStreams;
use ase_core::harness::{reproduce, run_many, run_single, summarize, SeedSpec};
use ase_core::{
    Arm, DgpConfig, ExperimentConfig, GroundTruth, HazardLearnerSpec, ObservedTime, TieConvention,
    TwinsDgpParams, Variant,
};

fn config(variants: &[Variant], rounds: u64, seeds: usize) -> ExperimentConfig {
    ExperimentConfig {
        variants: variants.to_vec(),
        seeds: SeedSpec::Range {
            count: seeds,
            base: 0,
        },
        ..ExperimentConfig::default().with_rounds(rounds)
    }
}

fn survival(hazards: &[f64]) -> Vec<f64> {
    let mut s = 1.0;
    hazards
        .iter()
        .map(|h| {
            s *= 1.0 - h;
            s
        })
        .collect()
}

#[test]
fn uniform_oracle_matches_textbook_aipw_without_censoring() {
    let params = TwinsDgpParams {
        censor_control: 0.0,
        censor_treated: 0.0,
        ..Default::default()
    };
    let n = params.t_max + 1;
    let s0 = survival(&vec![params.event_control; n]);
    let s1 = [
        survival(&vec![params.event_treated_x0; n]),
        survival(&vec![params.event_treated_x1; n]),
    ];
    let cfg = ExperimentConfig {
        dgp: DgpConfig::Twins { params },
        ..config(&[Variant::OracleNa], 500, 1)
    };
    let seed = 7;
    let run = run_single(&cfg, seed).unwrap();
    let estimate = &run.trace(Variant::OracleNa).unwrap().final_estimate;

    let dgp = cfg.dgp.build(TieConvention::Ties).unwrap();
    let mut streams = RoundStreams::new(&dgp, TieConvention::Ties, seed);
    let mut sum = vec![0.0; n];
    for _ in 0..cfg.rounds {
        let d = streams.next_draw().unwrap();
        let arm = d.assign(0.5);
        let s1x = &s1[usize::from(d.x[0] >= 0.5)];
        for t in 0..n {
            let alive = match d.outcomes[arm.index()] {
                ObservedTime::At { time, event: true } => time > t,
                ObservedTime::At { event: false, .. } => unreachable!("no censoring"),
                ObservedTime::PastHorizon => true,
            };
            let y = f64::from(u8::from(alive));
            sum[t] += s1x[t] - s0[t]
                + match arm {
                    Arm::Treated => (y - s1x[t]) / 0.5,
                    Arm::Control => -(y - s0[t]) / 0.5,
                };
        }
    }
    for t in 0..n {
        let expected = sum[t] / cfg.rounds as f64;
        assert!(
            (estimate[t] - expected).abs() < 1e-10,
            "t={t}: {} vs {expected}",
            estimate[t]
        );
    }
}

#[test]
fn adaptive_policy_respects_clip() {
    let cfg = ExperimentConfig {
        learner: HazardLearnerSpec::Oracle,
        ..config(&[Variant::Ase, Variant::Oracle], 600, 2)
    };
    for seed in 0..2 {
        let run = run_single(&cfg, seed).unwrap();
        for v in [Variant::Ase, Variant::Oracle] {
            let tr = run.trace(v).unwrap();
            assert!(
                tr.min_pi >= 0.05 - 1e-12 && tr.max_pi <= 0.95 + 1e-12,
                "{v}"
            );
        }
    }
}

#[test]
fn non_adaptive_variants_assign_half() {
    let cfg = config(
        &[Variant::OracleNa, Variant::AseNa, Variant::PluginNa],
        300,
        1,
    );
    let run = run_single(&cfg, 3).unwrap();
    for v in [Variant::OracleNa, Variant::AseNa, Variant::PluginNa] {
        let tr = run.trace(v).unwrap();
        assert_eq!((tr.min_pi, tr.max_pi, tr.mean_pi), (0.5, 0.5, 0.5), "{v}");
    }
}

#[test]
fn adaptive_allocation_favours_the_noisier_arm() {
    let cfg = ExperimentConfig {
        dgp: DgpConfig::twins(),
        ..config(&[Variant::Ase, Variant::AseNa], 1000, 20)
    };
    let dgp = cfg.dgp.build(TieConvention::Ties).unwrap();
    let truth = GroundTruth::new(&dgp, TieConvention::Ties).unwrap();
    let v = |arm| {
        truth
            .grid
            .iter()
            .map(|p| p.weight * p.variance(arm))
            .sum::<f64>()
    };
    let treated_noisier = v(Arm::Treated) > v(Arm::Control);
    let summary = run_many(&cfg).unwrap();
    let ase = summary.variant(Variant::Ase).unwrap().treated_fraction;
    let na = summary.variant(Variant::AseNa).unwrap().treated_fraction;
    assert_eq!(ase > na, treated_noisier, "ASE {ase} vs ASE_NA {na}");
}

#[test]
fn single_seed_summary_equals_seed_metrics() {
    let cfg = config(&[Variant::Oracle, Variant::AseNa], 300, 1);
    let run = run_single(&cfg, 0).unwrap();
    let summary = summarize(&cfg, &run.tau, std::slice::from_ref(&run)).unwrap();
    for v in [Variant::Oracle, Variant::AseNa] {
        let (s, tr) = (summary.variant(v).unwrap(), run.trace(v).unwrap());
        assert_eq!(s.mse, tr.mse);
        assert_eq!(s.coverage, tr.ci_coverage);
        assert!(s.mse_se.iter().all(|&x| x == 0.0));
        for t in 0..run.tau.len() {
            assert!((s.final_bias[t] - (tr.final_estimate[t] - run.tau[t])).abs() < 1e-15);
        }
    }
}

#[test]
fn oracle_relative_mse_is_one() {
    let summary = run_many(&config(&[Variant::Oracle, Variant::OracleNa], 200, 4)).unwrap();
    assert!(summary
        .relative_mse(Variant::Oracle)
        .unwrap()
        .iter()
        .all(|&r| r == 1.0 || r.is_nan()));
    assert!(summary.relative_mse(Variant::Ase).is_err());
}

#[test]
fn doubling_seeds_shrinks_standard_error() {
    let se = |seeds| {
        let s = run_many(&config(&[Variant::Oracle], 300, seeds)).unwrap();
        let v = s.variant(Variant::Oracle).unwrap();
        v.mse_se[v.mse_se.len() - 100..].iter().sum::<f64>() / 100.0
    };
    let ratio = se(100) / se(200);
    assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.3, "ratio {ratio}");
}

#[test]
fn reproduce_writes_policy_figures() {
    let dir = tempfile::tempdir().unwrap();
    let fig2 = reproduce(Preset::PolicyFig2, dir.path(), None).unwrap();
    let text = std::fs::read_to_string(&fig2[0]).unwrap();
    assert_eq!(text.lines().count(), 21);
    assert!(text.starts_with("lambda_g,pi_star,pi_neyman"));

    let fig5 = reproduce(Preset::RatioFig5, dir.path(), None).unwrap();
    let mut rdr = csv::Reader::from_path(&fig5[0]).unwrap();
    let rows: Vec<(f64, f64, f64)> = rdr.deserialize().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 41);
    for (_, a, b) in rows {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn config_errors_are_reported() {
    let bad = [
        r#"{"rounds": 0}"#,
        r#"{"rounds": 100, "batch": {"batch_size": 10, "burn_in": 200, "initial_policy": 0.5}}"#,
        r#"{"variants": ["ase", "ase"]}"#,
        r#"{"variants": []}"#,
        r#"{"alpha": 1.5}"#,
        r#"{"truncation": {"mode": "constant_clip", "alpha": 0.7}}"#,
        r#"{"unknown_field": 1}"#,
    ];
    for text in bad {
        assert!(
            ExperimentConfig::from_json(text).unwrap_err().is_config(),
            "{text}"
        );
    }
    let cfg = ExperimentConfig::synthetic_preset();
    assert_eq!(
        ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap(),
        cfg
    );
}
