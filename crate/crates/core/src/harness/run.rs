//! One replication of the adaptive experiment for every configured variant.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::allocation::{
    a_optimal_prob, neyman_naive_target, policy_on_grid, truncate, variance_target, DesignCriterion,
};
use crate::dgp::{Dgp, GroundTruth};
use crate::error::{Error, Result};
use crate::estimator::{
    cs_radius, naive_aipw_pseudo_outcome, rho_star, z_quantile, ApoState, AseState, ScoredUnit,
};
use crate::harness::config::{ExperimentConfig, Variant};
use crate::harness::rng::{RoundDraw, RoundStreams};
use crate::nuisance::{CrossFitState, FittedNuisance, FoldId, HazardLearnerSpec, Learner};
use crate::survival::{eif_pseudo_outcome, Arm, NuisanceAtArm, Observation, TieConvention};

/// One CSV row: a variant's state after `round` at one horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub round: u64,
    pub horizon: usize,
    pub tau_hat: f64,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub cs_lo: f64,
    pub cs_hi: f64,
    pub pi_realized: f64,
    pub arm: u8,
}

/// Compact per-seed record of one variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantTrace {
    pub variant: Variant,
    /// `MSE(r) = mean_t (τ̂_t(r) − τ_t)²` for `r = 1..=R`.
    pub mse: Vec<f64>,
    /// Fraction of horizons covered by the fixed-time interval, `r = 1..=R` (0 at `r = 1`).
    pub ci_coverage: Vec<f64>,
    /// Per horizon: the confidence sequence covered `τ_t` at every round of the scoring window.
    pub cs_uniform: Vec<bool>,
    /// The sequence radius was at least the fixed-time radius at every round `r ≥ 2`.
    pub cs_dominates_ci: bool,
    pub final_estimate: Vec<f64>,
    pub final_variance: Vec<f64>,
    pub final_ci_covers: Vec<bool>,
    pub treated: u64,
    pub mean_pi: f64,
    pub min_pi: f64,
    pub max_pi: f64,
    /// Average potential survival curves (pseudo-outcome variants only).
    pub apo_curves: Option<[Vec<f64>; 2]>,
    pub apo_variance: Option<[Vec<f64>; 2]>,
}

/// All variants of one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub tau: Vec<f64>,
    pub traces: Vec<VariantTrace>,
    /// Per-variant CSV rows, when requested.
    #[serde(skip)]
    pub rows: BTreeMap<Variant, Vec<RoundRow>>,
}

impl SeedRun {
    pub fn trace(&self, v: Variant) -> Option<&VariantTrace> {
        self.traces.iter().find(|t| t.variant == v)
    }
}

/// Process, truth and oracle policy shared by all seeds of a configuration.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub dgp: Arc<Dgp>,
    pub tau: Vec<f64>,
    pub rho: f64,
    oracle_grid: Option<(Vec<Vec<f64>>, Vec<f64>)>,
}

impl Prepared {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let conv = config.tie_convention;
        let dgp = Arc::new(config.dgp.build(conv)?);
        let tau = dgp.true_tau()?;
        let rho = match config.cs_rho {
            Some(r) => r,
            None => rho_star(config.rounds, config.alpha)?,
        };
        let oracle_grid = match config.criterion {
            DesignCriterion::DOpt | DesignCriterion::EOpt => {
                let truth = GroundTruth::new(&dgp, conv)?;
                let alpha = 1.0 / config.truncation.k(config.rounds);
                let policy = policy_on_grid(config.criterion, &truth, alpha)?;
                Some((truth.grid.into_iter().map(|p| p.x).collect(), policy))
            }
            _ => None,
        };
        Ok(Self {
            config: config.clone(),
            dgp,
            tau,
            rho,
            oracle_grid,
        })
    }
}

fn nearest(grid: &[Vec<f64>], x: &[f64]) -> usize {
    let dist = |g: &[f64]| g.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, g) in grid.iter().enumerate() {
        let d = dist(g);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Full-history plug-in estimate, refreshed every `m` rounds.
struct PluginTracker {
    learner: Learner,
    refit_every: usize,
    history: Vec<Observation>,
    model: Option<Arc<FittedNuisance>>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl PluginTracker {
    fn new(learner: Learner, refit_every: usize) -> Self {
        let n = learner.horizon.len();
        Self {
            learner,
            refit_every,
            history: Vec::new(),
            model: None,
            sum: vec![0.0; n],
            sum_sq: vec![0.0; n],
        }
    }

    fn contrast(model: &FittedNuisance, x: &[f64], conv: TieConvention) -> Result<Vec<f64>> {
        let [n0, n1] = model.predict_pair(x)?;
        let (s0, s1) = (n0.curves(conv).event, n1.curves(conv).event);
        Ok(s1.iter().zip(&s0).map(|(a, b)| a - b).collect())
    }

    fn recompute(&mut self, model: Arc<FittedNuisance>) -> Result<()> {
        let conv = self.learner.conv;
        self.sum.iter_mut().for_each(|v| *v = 0.0);
        self.sum_sq.iter_mut().for_each(|v| *v = 0.0);
        for obs in &self.history {
            let d = Self::contrast(&model, &obs.x, conv)?;
            for (t, v) in d.iter().enumerate() {
                self.sum[t] += v;
                self.sum_sq[t] += v * v;
            }
        }
        self.model = Some(model);
        Ok(())
    }

    fn update(&mut self, obs: Observation) -> Result<()> {
        self.history.push(obs);
        let n = self.history.len();
        let data_free = self.learner.spec.is_data_free();
        if self.model.is_none() && data_free {
            let m = Arc::new(self.learner.fit(&[], FoldId::Full)?);
            return self.recompute(m);
        }
        if data_free {
            // fixed model: add the new unit only
        } else if n % self.refit_every == 0 {
            let m = Arc::new(self.learner.fit(&self.history, FoldId::Full)?);
            return self.recompute(m);
        } else if n < self.refit_every {
            let m = crate::nuisance::fit(
                &HazardLearnerSpec::marginal(),
                &self.history,
                self.learner.horizon,
                self.learner.conv,
                None,
                FoldId::Full,
            )?;
            return self.recompute(Arc::new(m));
        }
        let model = self
            .model
            .as_ref()
            .expect("model exists after the first round");
        let x = &self.history[n - 1].x;
        let d = Self::contrast(model, x, self.learner.conv)?;
        for (t, v) in d.iter().enumerate() {
            self.sum[t] += v;
            self.sum_sq[t] += v * v;
        }
        Ok(())
    }

    fn estimate(&self) -> Vec<f64> {
        let n = self.history.len() as f64;
        self.sum.iter().map(|s| s / n).collect()
    }

    fn variance(&self) -> Vec<f64> {
        let n = self.history.len() as f64;
        self.sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(s, q)| (q / n - (s / n) * (s / n)).max(0.0))
            .collect()
    }
}

enum Estimation {
    Eif { ase: AseState, apo: ApoState },
    Naive(AseState),
    Plugin(Box<PluginTracker>),
}

struct Runner {
    variant: Variant,
    criterion: DesignCriterion,
    crossfit: Option<CrossFitState>,
    estimation: Estimation,
    /// Grid policy cached for the model it was solved from.
    grid_policy: Option<(usize, Vec<Vec<f64>>, Vec<f64>)>,
    treated: u64,
    pi_sum: f64,
    pi_min: f64,
    pi_max: f64,
    mse: Vec<f64>,
    ci_cov: Vec<f64>,
    cs_ok: Vec<bool>,
    cs_dominates: bool,
    last_ci: Vec<bool>,
    rows: Option<Vec<RoundRow>>,
}

impl Runner {
    fn new(p: &Prepared, variant: Variant, keep_rows: bool) -> Result<Self> {
        let cfg = &p.config;
        let horizon = p.dgp.horizon();
        let n = horizon.len();
        let conv = cfg.tie_convention;
        let learner_spec = match variant {
            Variant::AseMs => cfg.learner.clone().with_constant_censoring(),
            _ => cfg.learner.clone(),
        };
        let learner = Learner::new(learner_spec, horizon, conv, Some(Arc::clone(&p.dgp)))?;
        let crossfit = match variant {
            Variant::Oracle | Variant::OracleNa | Variant::PluginNa => None,
            _ => Some(CrossFitState::new(
                learner.clone(),
                cfg.batch.batch_size,
                cfg.refit_mode,
            )?),
        };
        let estimation = match variant {
            Variant::Plugin | Variant::PluginNa => {
                Estimation::Plugin(Box::new(PluginTracker::new(learner, cfg.batch.batch_size)))
            }
            Variant::A2ipwNaive => Estimation::Naive(AseState::new(n)),
            _ => Estimation::Eif {
                ase: AseState::new(n),
                apo: ApoState::new(n),
            },
        };
        let criterion = match variant {
            Variant::A2ipwNaive => DesignCriterion::NeymanNaive,
            _ => cfg.criterion,
        };
        Ok(Self {
            variant,
            criterion,
            crossfit,
            estimation,
            grid_policy: None,
            treated: 0,
            pi_sum: 0.0,
            pi_min: f64::INFINITY,
            pi_max: f64::NEG_INFINITY,
            mse: Vec::with_capacity(cfg.rounds as usize),
            ci_cov: Vec::with_capacity(cfg.rounds as usize),
            cs_ok: vec![true; n],
            cs_dominates: true,
            last_ci: vec![false; n],
            rows: keep_rows.then(Vec::new),
        })
    }

    fn raw_policy(
        &mut self,
        p: &Prepared,
        r: u64,
        x: &[f64],
        nus: &[NuisanceAtArm; 2],
        model: Option<&Arc<FittedNuisance>>,
    ) -> Result<f64> {
        let conv = p.config.tie_convention;
        Ok(match self.criterion {
            DesignCriterion::AOpt => {
                let (v0, v1) = variance_target(&nus[0], &nus[1], conv)?;
                a_optimal_prob(v0, v1)
            }
            DesignCriterion::NeymanNaive => {
                a_optimal_prob(neyman_naive_target(&nus[0]), neyman_naive_target(&nus[1]))
            }
            DesignCriterion::Uniform => 0.5,
            DesignCriterion::DOpt | DesignCriterion::EOpt => match model {
                None => {
                    let (grid, policy) = p.oracle_grid.as_ref().expect("oracle grid prepared");
                    policy[nearest(grid, x)]
                }
                Some(m) => {
                    let key = Arc::as_ptr(m) as usize;
                    let stale = self.grid_policy.as_ref().is_none_or(|(k, _, _)| *k != key);
                    if stale {
                        let truth = GroundTruth::from_hazards(
                            p.dgp.horizon(),
                            p.dgp.covariate_grid(),
                            |x, a| m.predict(x, a),
                            conv,
                        )?;
                        let alpha = 1.0 / p.config.truncation.k(r);
                        let policy = policy_on_grid(self.criterion, &truth, alpha)?;
                        let xs = truth.grid.into_iter().map(|g| g.x).collect();
                        self.grid_policy = Some((key, xs, policy));
                    }
                    let (_, xs, policy) = self.grid_policy.as_ref().expect("just filled");
                    policy[nearest(xs, x)]
                }
            },
        })
    }

    fn step(&mut self, p: &Prepared, draw: &RoundDraw) -> Result<()> {
        let cfg = &p.config;
        let conv = cfg.tie_convention;
        let r = draw.round;
        let (nus, model) = if self.variant.uses_oracle_nuisance() {
            (
                [
                    p.dgp.hazards(&draw.x, Arm::Control)?,
                    p.dgp.hazards(&draw.x, Arm::Treated)?,
                ],
                None,
            )
        } else if let Some(cf) = &self.crossfit {
            let m = cf.scoring_model(r)?;
            (m.predict_pair(&draw.x)?, Some(m))
        } else {
            // plug-in without adaptive allocation never scores units
            (
                [
                    NuisanceAtArm::constant(p.dgp.horizon().t_max(), 0.5, 0.25)?,
                    NuisanceAtArm::constant(p.dgp.horizon().t_max(), 0.5, 0.25)?,
                ],
                None,
            )
        };

        let in_burn_in = r <= cfg.batch.burn_in && !self.variant.uses_oracle_nuisance();
        let pi = if !self.variant.is_adaptive() || in_burn_in {
            cfg.batch.initial_policy
        } else {
            let raw = self.raw_policy(p, r, &draw.x, &nus, model.as_ref())?;
            truncate(raw, r, &cfg.truncation).truncated
        };
        let arm = draw.assign(pi);
        let obs = Observation {
            x: draw.x.clone(),
            arm,
            outcome: draw.outcomes[arm.index()],
            round: r,
        };

        match &mut self.estimation {
            Estimation::Eif { ase, apo } => {
                let phi = eif_pseudo_outcome(&obs, pi, &nus[0], &nus[1], conv)?;
                ase.update(&phi)?;
                apo.update(
                    &ScoredUnit {
                        obs: obs.clone(),
                        pi_treated: pi,
                        nuisance: nus,
                    },
                    conv,
                )?;
            }
            Estimation::Naive(ase) => {
                let phi = naive_aipw_pseudo_outcome(&obs, pi, &nus[0], &nus[1], conv)?;
                ase.update(&phi)?;
            }
            Estimation::Plugin(tracker) => tracker.update(obs.clone())?,
        }
        if let Some(cf) = self.crossfit.as_mut() {
            cf.update(obs)?;
        }

        if arm.is_treated() {
            self.treated += 1;
        }
        self.pi_sum += pi;
        self.pi_min = self.pi_min.min(pi);
        self.pi_max = self.pi_max.max(pi);
        self.record(p, r, pi, arm)
    }

    /// Point estimate and (for `R ≥ 2`) variance after the current round.
    fn snapshot(&self) -> Result<(Vec<f64>, Option<Vec<f64>>, u64)> {
        Ok(match &self.estimation {
            Estimation::Eif { ase, .. } | Estimation::Naive(ase) => {
                let v = if ase.count() >= 2 {
                    Some(ase.variance_estimate()?)
                } else {
                    None
                };
                (ase.estimate()?, v, ase.count())
            }
            Estimation::Plugin(t) => {
                let n = t.history.len() as u64;
                (t.estimate(), (n >= 2).then(|| t.variance()), n)
            }
        })
    }

    fn record(&mut self, p: &Prepared, r: u64, pi: f64, arm: Arm) -> Result<()> {
        let cfg = &p.config;
        let (est, var, count) = self.snapshot()?;
        let n = est.len();
        let mse = est
            .iter()
            .zip(&p.tau)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n as f64;
        self.mse.push(mse);

        let z = z_quantile(1.0 - cfg.alpha / 2.0)?;
        let zeros = vec![0.0; n];
        let v = var.as_ref().unwrap_or(&zeros);
        let mut covered = 0usize;
        let mut ci = vec![None; n];
        let mut cs = vec![0.0; n];
        for t in 0..n {
            cs[t] = cs_radius(count, v[t], p.rho, cfg.alpha)?;
            if var.is_some() {
                let hw = z * (v[t] / count as f64).sqrt();
                ci[t] = Some(hw);
                let hit = (est[t] - p.tau[t]).abs() <= hw;
                self.last_ci[t] = hit;
                covered += hit as usize;
                if cs[t] < hw {
                    self.cs_dominates = false;
                }
            }
            if r >= cfg.cs_start && (est[t] - p.tau[t]).abs() > cs[t] {
                self.cs_ok[t] = false;
            }
        }
        self.ci_cov.push(covered as f64 / n as f64);

        if let Some(rows) = self.rows.as_mut() {
            if r % cfg.record_every == 0 || r == cfg.rounds {
                for t in 0..n {
                    rows.push(RoundRow {
                        round: r,
                        horizon: t,
                        tau_hat: est[t],
                        ci_lo: ci[t].map(|h| est[t] - h),
                        ci_hi: ci[t].map(|h| est[t] + h),
                        cs_lo: est[t] - cs[t],
                        cs_hi: est[t] + cs[t],
                        pi_realized: pi,
                        arm: arm.index() as u8,
                    });
                }
            }
        }
        Ok(())
    }

    fn finish(self, rounds: u64) -> Result<(VariantTrace, Option<Vec<RoundRow>>)> {
        let (est, var, _) = self.snapshot()?;
        let n = est.len();
        let (apo_curves, apo_variance) = match &self.estimation {
            Estimation::Eif { apo, .. } => {
                let var = if apo.arm(Arm::Control).count() >= 2 {
                    Some([
                        apo.arm(Arm::Control).variance_estimate()?,
                        apo.arm(Arm::Treated).variance_estimate()?,
                    ])
                } else {
                    None
                };
                (Some(apo.curves()?), var)
            }
            _ => (None, None),
        };
        Ok((
            VariantTrace {
                variant: self.variant,
                mse: self.mse,
                ci_coverage: self.ci_cov,
                cs_uniform: self.cs_ok,
                cs_dominates_ci: self.cs_dominates,
                final_estimate: est,
                final_variance: var.unwrap_or_else(|| vec![0.0; n]),
                final_ci_covers: self.last_ci,
                treated: self.treated,
                mean_pi: self.pi_sum / rounds as f64,
                min_pi: self.pi_min,
                max_pi: self.pi_max,
                apo_curves,
                apo_variance,
            },
            self.rows,
        ))
    }
}

/// Runs every configured variant for one seed.
pub fn run_single(config: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    run_prepared(&Prepared::new(config)?, seed, true)
}

/// As [`run_single`] with shared preparation; `keep_rows` retains CSV rows.
pub fn run_prepared(p: &Prepared, seed: u64, keep_rows: bool) -> Result<SeedRun> {
    let cfg = &p.config;
    let mut runners = cfg
        .variants
        .iter()
        .map(|&v| Runner::new(p, v, keep_rows))
        .collect::<Result<Vec<_>>>()?;
    let mut streams = RoundStreams::new(&p.dgp, cfg.tie_convention, seed);
    for _ in 0..cfg.rounds {
        let draw = streams.next_draw()?;
        for runner in runners.iter_mut() {
            runner.step(p, &draw).map_err(|e| match e {
                Error::Config(_) | Error::Json(_) | Error::Io(_) | Error::Csv(_) => e,
                other => Error::Numerical(format!(
                    "{} at round {} (seed {seed}): {other}",
                    runner.variant, draw.round
                )),
            })?;
        }
    }
    let mut traces = Vec::with_capacity(runners.len());
    let mut rows = BTreeMap::new();
    for runner in runners {
        let v = runner.variant;
        let (trace, r) = runner.finish(cfg.rounds)?;
        traces.push(trace);
        if let Some(r) = r {
            rows.insert(v, r);
        }
    }
    Ok(SeedRun {
        seed,
        tau: p.tau.clone(),
        traces,
        rows,
    })
}
