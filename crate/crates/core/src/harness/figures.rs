//! Plot-ready series for the figure presets.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::allocation::{
    a_optimal_prob, arm_variance, censoring_ratio_closed_form, neyman_naive_target, policy_on_grid,
    DesignCriterion,
};
use crate::dgp::{sigma_a_matrix, Dgp, GroundTruth};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Variant};
use crate::harness::metrics::{run_replications, summarize};
use crate::harness::output::write_json;
use crate::harness::run::Prepared;
use crate::survival::{Arm, HazardPair, NuisanceAtArm, TieConvention};

/// Named reproduction targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Preset {
    SynFig3,
    TwinsFig7,
    PolicyFig2,
    RatioFig5,
    CurvesFig6,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::SynFig3,
        Preset::TwinsFig7,
        Preset::PolicyFig2,
        Preset::RatioFig5,
        Preset::CurvesFig6,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::SynFig3 => "SYN_FIG3",
            Preset::TwinsFig7 => "TWINS_FIG7",
            Preset::PolicyFig2 => "POLICY_FIG2",
            Preset::RatioFig5 => "RATIO_FIG5",
            Preset::CurvesFig6 => "CURVES_FIG6",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.to_ascii_uppercase().replace('-', "_");
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == up)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown preset {s:?}; expected one of {}",
                    Preset::ALL.map(|p| p.name()).join(", ")
                ))
            })
    }
}

/// Event hazards of the two arms and horizon for the shared-censoring sweep.
pub const FIG2_EVENT_HAZARDS: (f64, f64) = (0.30, 0.10);
pub const FIG2_T_MAX: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig2Point {
    pub lambda_g: f64,
    pub pi_star: f64,
    pub pi_neyman: f64,
}

/// `π*` and the censoring-agnostic Neyman allocation as a shared censoring hazard grows.
pub fn policy_fig2(points: usize, max_lambda_g: f64) -> Result<Vec<Fig2Point>> {
    let (e0, e1) = FIG2_EVENT_HAZARDS;
    (0..points)
        .map(|k| {
            let g = max_lambda_g * k as f64 / (points.max(2) - 1) as f64;
            let nu0 = NuisanceAtArm::constant(FIG2_T_MAX, e0, g)?;
            let nu1 = NuisanceAtArm::constant(FIG2_T_MAX, e1, g)?;
            let pi_star = a_optimal_prob(
                arm_variance(&nu0, TieConvention::Ties)?,
                arm_variance(&nu1, TieConvention::Ties)?,
            );
            let pi_neyman = a_optimal_prob(neyman_naive_target(&nu0), neyman_naive_target(&nu1));
            Ok(Fig2Point {
                lambda_g: g,
                pi_star,
                pi_neyman,
            })
        })
        .collect()
}

/// Event hazards for `t ≥ 1` in the arm-dependent censoring construction.
pub const FIG5_EVENT_HAZARDS: (f64, f64) = (0.30, 0.15);
pub const FIG5_T_MAX: usize = 3;
const FIG5_BASE_CENSORING: f64 = 0.2;

/// Hazards with censoring-survival ratio `G_t(x,0)/G_t(x,1) = g` at every `t`.
///
/// No events and all censoring happen at `t = 0`, so `G_{t-1}` is constant
/// from `t = 1` on and `t = 0` carries no variance. Requires `g ≤ 5`.
pub fn ratio_construction(g: f64) -> Result<[NuisanceAtArm; 2]> {
    if !(g > 0.0 && FIG5_BASE_CENSORING * g <= 1.0) {
        return Err(Error::Config(format!("censoring ratio {g} outside (0, 5]")));
    }
    let build = |event: f64, g0: f64| {
        let mut h = vec![HazardPair::new(0.0, 1.0 - g0)];
        h.extend((1..=FIG5_T_MAX).map(|_| HazardPair::new(event, 0.0)));
        NuisanceAtArm::new(h)
    };
    let (e0, e1) = FIG5_EVENT_HAZARDS;
    Ok([
        build(e0, FIG5_BASE_CENSORING * g)?,
        build(e1, FIG5_BASE_CENSORING)?,
    ])
}

/// `κ = K₀/K₁` of the construction, the event-information ratio with censoring removed.
pub fn ratio_kappa() -> Result<f64> {
    let [nu0, nu1] = ratio_construction(1.0)?;
    Ok(arm_variance(&nu0, TieConvention::Ties)? / arm_variance(&nu1, TieConvention::Ties)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig5Point {
    pub g: f64,
    pub pi_enumeration: f64,
    pub pi_closed_form: f64,
}

/// Enumeration-based `π*` over `points` log-spaced ratios in `[lo, hi]`.
pub fn ratio_fig5(points: usize, lo: f64, hi: f64) -> Result<Vec<Fig5Point>> {
    let kappa = ratio_kappa()?;
    (0..points)
        .map(|k| {
            let frac = k as f64 / (points.max(2) - 1) as f64;
            let g = (lo.ln() + frac * (hi.ln() - lo.ln())).exp();
            let [nu0, nu1] = ratio_construction(g)?;
            let v0 = sigma_a_matrix(&nu0, TieConvention::Ties)?.trace();
            let v1 = sigma_a_matrix(&nu1, TieConvention::Ties)?.trace();
            Ok(Fig5Point {
                g,
                pi_enumeration: a_optimal_prob(v0, v1),
                pi_closed_form: censoring_ratio_closed_form(kappa, g),
            })
        })
        .collect()
}

/// Policy value at one covariate point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyPoint {
    pub x: f64,
    pub pi: f64,
}

/// A criterion's policy over `n` equally weighted midpoints of `[0, 1]`
/// (synthetic) or the two support points (Twins), clipped to `[alpha, 1 − alpha]`.
pub fn policy_table(
    dgp: &Dgp,
    conv: TieConvention,
    criterion: DesignCriterion,
    n: usize,
    alpha: f64,
) -> Result<Vec<PolicyPoint>> {
    let grid = match dgp {
        Dgp::Synthetic(_) => {
            if n == 0 {
                return Err(Error::Config("policy grid needs at least one point".into()));
            }
            (0..n)
                .map(|k| (vec![(k as f64 + 0.5) / n as f64], 1.0 / n as f64))
                .collect()
        }
        Dgp::Twins(_) => dgp.covariate_grid(),
    };
    let truth = GroundTruth::from_hazards(dgp.horizon(), grid, |x, a| dgp.hazards(x, a), conv)?;
    let policy = policy_on_grid(criterion, &truth, alpha)?;
    Ok(truth
        .grid
        .iter()
        .zip(policy)
        .map(|(g, pi)| PolicyPoint { x: g.x[0], pi })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct MseRow {
    round: u64,
    variant: String,
    mse: f64,
    mse_se: f64,
    relative_mse: Option<f64>,
    coverage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CurveRow {
    rounds: u64,
    horizon: usize,
    arm: u8,
    truth: f64,
    mean_estimate: f64,
    se_across_seeds: f64,
    mean_within_se: f64,
}

/// Writes serializable rows as CSV with a header.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn mse_figure(config: &ExperimentConfig, out: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let p = Prepared::new(config)?;
    let runs = run_replications(&p)?;
    let summary = summarize(config, &p.tau, &runs)?;
    let mut rows = Vec::new();
    for s in &summary.variants {
        for (i, &m) in s.mse.iter().enumerate() {
            let round = i as u64 + 1;
            if round % config.record_every != 0 && round != config.rounds {
                continue;
            }
            rows.push(MseRow {
                round,
                variant: s.variant.label().to_string(),
                mse: m,
                mse_se: s.mse_se[i],
                relative_mse: s.relative_mse.as_ref().map(|r| r[i]),
                coverage: s.coverage[i],
            });
        }
    }
    let csv_path = out.join(format!("{stem}.csv"));
    let json_path = out.join(format!("{stem}_summary.json"));
    write_csv(&csv_path, &rows)?;
    write_json(&json_path, &summary)?;
    Ok(vec![csv_path, json_path])
}

fn curves_figure(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut rows = Vec::new();
    for rounds in [1000u64, 1500, 2000] {
        let cfg = config.clone().with_rounds(rounds);
        let p = Prepared::new(&cfg)?;
        let runs = run_replications(&p)?;
        let n = runs.len() as f64;
        for arm in Arm::BOTH {
            let truth = p.dgp.true_survival(arm)?;
            for (t, &tr) in truth.iter().enumerate() {
                let est: Vec<f64> = runs
                    .iter()
                    .map(|r| {
                        r.trace(Variant::Ase)
                            .and_then(|tr| tr.apo_curves.as_ref())
                            .map(|c| c[arm.index()][t])
                    })
                    .collect::<Option<_>>()
                    .ok_or_else(|| Error::Config("curve preset needs the ASE variant".into()))?;
                let within: f64 = runs
                    .iter()
                    .filter_map(|r| {
                        r.trace(Variant::Ase)
                            .and_then(|tr| tr.apo_variance.as_ref())
                    })
                    .map(|v| (v[arm.index()][t] / rounds as f64).sqrt())
                    .sum::<f64>()
                    / n;
                let mean = est.iter().sum::<f64>() / n;
                let sd = if est.len() > 1 {
                    (est.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
                rows.push(CurveRow {
                    rounds,
                    horizon: t,
                    arm: arm.index() as u8,
                    truth: tr,
                    mean_estimate: mean,
                    se_across_seeds: sd,
                    mean_within_se: within,
                });
            }
        }
    }
    let path = out.join("curves_fig6.csv");
    write_csv(&path, &rows)?;
    Ok(vec![path])
}

/// Configuration a preset runs with; `seeds` overrides the seed count.
pub fn preset_config(preset: Preset, seeds: Option<usize>) -> ExperimentConfig {
    let mut cfg = match preset {
        Preset::TwinsFig7 => ExperimentConfig::twins_preset(),
        Preset::CurvesFig6 => ExperimentConfig {
            variants: vec![Variant::Ase],
            seeds: crate::harness::config::SeedSpec::Range { count: 20, base: 0 },
            ..ExperimentConfig::synthetic_preset()
        },
        _ => ExperimentConfig::synthetic_preset(),
    };
    cfg.record_every = 10;
    if let Some(n) = seeds {
        cfg.seeds = crate::harness::config::SeedSpec::Range { count: n, base: 0 };
    }
    cfg
}

/// Writes a preset's series into `out` and returns the files written.
pub fn reproduce(preset: Preset, out: &Path, seeds: Option<usize>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    match preset {
        Preset::SynFig3 => mse_figure(&preset_config(preset, seeds), out, "syn_fig3"),
        Preset::TwinsFig7 => mse_figure(&preset_config(preset, seeds), out, "twins_fig7"),
        Preset::CurvesFig6 => curves_figure(&preset_config(preset, seeds), out),
        Preset::PolicyFig2 => {
            let path = out.join("policy_fig2.csv");
            write_csv(&path, &policy_fig2(20, 0.4)?)?;
            Ok(vec![path])
        }
        Preset::RatioFig5 => {
            let path = out.join("ratio_fig5.csv");
            write_csv(&path, &ratio_fig5(41, 0.25, 4.0)?)?;
            Ok(vec![path])
        }
    }
}
