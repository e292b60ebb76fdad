//! Hazard learners and two-fold sequential cross-fitting.
//!
//! Training rows come from the person-period expansion: a unit observed at
//! `T̃ = t̃` contributes one at-risk row for each `i ≤ min(t̃, t_max)`, and a
//! unit past the horizon contributes a row for every time. Event hazards are
//! fitted on all at-risk rows. Censoring is fitted as the conditional hazard
//! `h^C_i = P(T̃ = i, Δ = 0 | T̃ ≥ i, no event at i)` on the at-risk rows
//! without an event, and mapped to the observed hazard of the active tie
//! convention (`(1 − λ^S) h^C` with ties, `h^C` without). Every smoothed
//! prediction therefore satisfies `λ^S + λ^G < 1` and `G > 0`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dgp::Dgp;
use crate::error::{Error, Result};
use crate::survival::{Arm, HazardPair, NuisanceAtArm, Observation, TieConvention, TimeHorizon};

/// Margin kept below one by the joint renormalization of hazard pairs.
pub const RENORM_EPS: f64 = 1e-6;

fn default_bins() -> usize {
    20
}

fn default_smoothing() -> f64 {
    0.5
}

/// Which hazard learner to fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HazardLearnerSpec {
    /// True hazards of the data-generating process.
    Oracle,
    /// Histogram on the first covariate coordinate, Laplace smoothed.
    Binned {
        #[serde(default = "default_bins")]
        bins: usize,
        #[serde(default = "default_smoothing")]
        smoothing: f64,
    },
    /// Per-(arm, time) logistic regressions on the covariate.
    Logistic {
        #[serde(default = "default_smoothing")]
        smoothing: f64,
    },
    /// Event hazards from `base`; censoring replaced by the pooled marginal hazard per time.
    ConstantCensoringMs {
        base: Box<HazardLearnerSpec>,
        #[serde(default = "default_smoothing")]
        smoothing: f64,
    },
    /// Oracle hazards with fixed additive logit shifts.
    Corrupted {
        #[serde(default)]
        event_shift: f64,
        #[serde(default)]
        censoring_shift: f64,
    },
}

impl Default for HazardLearnerSpec {
    fn default() -> Self {
        HazardLearnerSpec::Logistic {
            smoothing: default_smoothing(),
        }
    }
}

impl HazardLearnerSpec {
    /// The smoothed marginal learner used before any cross-fitted model exists.
    pub fn marginal() -> Self {
        HazardLearnerSpec::Binned {
            bins: 1,
            smoothing: default_smoothing(),
        }
    }

    /// Wraps `self` so that its censoring block is a constant per time.
    pub fn with_constant_censoring(self) -> Self {
        match self {
            already @ HazardLearnerSpec::ConstantCensoringMs { .. } => already,
            base => HazardLearnerSpec::ConstantCensoringMs {
                base: Box::new(base),
                smoothing: default_smoothing(),
            },
        }
    }

    /// True when fitting ignores the training data.
    pub fn is_data_free(&self) -> bool {
        matches!(
            self,
            HazardLearnerSpec::Oracle | HazardLearnerSpec::Corrupted { .. }
        )
    }

    fn needs_oracle(&self) -> bool {
        match self {
            HazardLearnerSpec::Oracle | HazardLearnerSpec::Corrupted { .. } => true,
            HazardLearnerSpec::ConstantCensoringMs { base, .. } => base.needs_oracle(),
            _ => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_s = |s: f64| {
            if s.is_finite() && s > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "smoothing must be positive, got {s}"
                )))
            }
        };
        match self {
            HazardLearnerSpec::Oracle => Ok(()),
            HazardLearnerSpec::Binned { bins, smoothing } => {
                if *bins == 0 {
                    return Err(Error::Config("bins must be at least 1".into()));
                }
                check_s(*smoothing)
            }
            HazardLearnerSpec::Logistic { smoothing } => check_s(*smoothing),
            HazardLearnerSpec::ConstantCensoringMs { base, smoothing } => {
                check_s(*smoothing)?;
                base.validate()
            }
            HazardLearnerSpec::Corrupted {
                event_shift,
                censoring_shift,
            } => {
                if event_shift.is_finite() && censoring_shift.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Config("corruption shifts must be finite".into()))
                }
            }
        }
    }
}

/// Training set a model was fitted on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldId {
    Zero,
    One,
    Full,
}

impl FoldId {
    pub fn of_round(r: u64) -> Self {
        if r % 2 == 0 {
            FoldId::Zero
        } else {
            FoldId::One
        }
    }

    fn index(self) -> usize {
        match self {
            FoldId::Zero => 0,
            FoldId::One => 1,
            FoldId::Full => panic!("the full-history fold has no index"),
        }
    }

    fn from_index(i: usize) -> Self {
        if i == 0 {
            FoldId::Zero
        } else {
            FoldId::One
        }
    }
}

/// Scales a hazard pair with `λ^S + λ^G > 1` down to `1 − ε`, keeping the ratio.
pub fn renormalize(event: f64, censor: f64) -> (f64, f64) {
    let sum = event + censor;
    if sum > 1.0 {
        let k = (1.0 - RENORM_EPS) / sum;
        (event * k, censor * k)
    } else {
        (event, censor)
    }
}

fn observed_censor(event: f64, conditional: f64, conv: TieConvention) -> f64 {
    match conv {
        TieConvention::Ties => (1.0 - event) * conditional,
        TieConvention::NoTies => conditional,
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Person-period counts for one cell.
#[derive(Clone, Debug, Default)]
struct Counts {
    at_risk: Vec<f64>,
    events: Vec<f64>,
    censored: Vec<f64>,
}

impl Counts {
    fn new(n: usize) -> Self {
        Self {
            at_risk: vec![0.0; n],
            events: vec![0.0; n],
            censored: vec![0.0; n],
        }
    }

    fn add(&mut self, obs: &Observation) {
        for i in 0..self.at_risk.len() {
            if !obs.outcome.at_risk(i) {
                break;
            }
            self.at_risk[i] += 1.0;
            if obs.outcome.event_at_time(i) {
                self.events[i] += 1.0;
            }
            if obs.outcome.censored_at_time(i) {
                self.censored[i] += 1.0;
            }
        }
    }

    fn smoothed(&self, s: f64, conv: TieConvention) -> Vec<HazardPair> {
        (0..self.at_risk.len())
            .map(|i| {
                let (n, e, c) = (self.at_risk[i], self.events[i], self.censored[i]);
                let event = (e + s) / (n + 2.0 * s);
                let conditional = (c + s) / (n - e + 2.0 * s);
                let (ev, ce) = renormalize(event, observed_censor(event, conditional, conv));
                HazardPair::new(ev, ce)
            })
            .collect()
    }
}

/// Per-time logistic coefficients `[intercept, slopes…]`.
#[derive(Clone, Debug, PartialEq)]
struct LogisticPath {
    event: Vec<DVector<f64>>,
    conditional_censor: Vec<DVector<f64>>,
}

/// Fitted mapping `(x, a) ↦ NuisanceAtArm`.
#[derive(Clone, Debug)]
enum Predictor {
    Oracle(Arc<Dgp>),
    Binned {
        bins: usize,
        /// Indexed `[bin][arm]`.
        cells: Vec<[NuisanceAtArm; 2]>,
    },
    Logistic {
        /// Indexed by arm.
        paths: [LogisticPath; 2],
    },
    ConstantCensoring {
        base: Box<Predictor>,
        /// Pooled conditional censoring hazard per time.
        conditional: Vec<f64>,
    },
    Corrupted {
        dgp: Arc<Dgp>,
        event_shift: f64,
        censoring_shift: f64,
    },
}

fn bin_of(x: f64, bins: usize) -> usize {
    let x = if x.is_finite() {
        x.clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((x * bins as f64) as usize).min(bins - 1)
}

/// An immutable fitted nuisance model.
#[derive(Clone, Debug)]
pub struct FittedNuisance {
    predictor: Predictor,
    horizon: TimeHorizon,
    conv: TieConvention,
    fold: FoldId,
    fitted_on: usize,
}

impl FittedNuisance {
    pub fn fold(&self) -> FoldId {
        self.fold
    }

    /// Number of units in the training set.
    pub fn fitted_on(&self) -> usize {
        self.fitted_on
    }

    pub fn horizon(&self) -> TimeHorizon {
        self.horizon
    }

    pub fn predict(&self, x: &[f64], arm: Arm) -> Result<NuisanceAtArm> {
        predict_with(&self.predictor, x, arm, self.horizon, self.conv)
    }

    /// Predictions for both arms, indexed by [`Arm::index`].
    pub fn predict_pair(&self, x: &[f64]) -> Result<[NuisanceAtArm; 2]> {
        Ok([
            self.predict(x, Arm::Control)?,
            self.predict(x, Arm::Treated)?,
        ])
    }
}

fn predict_with(
    predictor: &Predictor,
    x: &[f64],
    arm: Arm,
    horizon: TimeHorizon,
    conv: TieConvention,
) -> Result<NuisanceAtArm> {
    match predictor {
        Predictor::Oracle(dgp) => dgp.hazards(x, arm),
        Predictor::Binned { bins, cells } => Ok(cells[bin_of(x[0], *bins)][arm.index()].clone()),
        Predictor::Logistic { paths } => {
            let path = &paths[arm.index()];
            let feat = features(x);
            let hazards = (0..horizon.len())
                .map(|i| {
                    let bound = |z: f64| sigmoid(z).clamp(RENORM_EPS, 1.0 - RENORM_EPS);
                    let event = bound(path.event[i].dot(&feat));
                    let cond = bound(path.conditional_censor[i].dot(&feat));
                    let (e, c) = renormalize(event, observed_censor(event, cond, conv));
                    HazardPair::new(e, c)
                })
                .collect();
            NuisanceAtArm::new(hazards)
        }
        Predictor::ConstantCensoring { base, conditional } => {
            let nu = predict_with(base, x, arm, horizon, conv)?;
            let hazards = nu
                .hazards()
                .iter()
                .zip(conditional)
                .map(|(h, &cond)| {
                    let (e, c) = renormalize(h.event, observed_censor(h.event, cond, conv));
                    HazardPair::new(e, c)
                })
                .collect();
            NuisanceAtArm::new(hazards)
        }
        Predictor::Corrupted {
            dgp,
            event_shift,
            censoring_shift,
        } => {
            let nu = dgp.hazards(x, arm)?;
            let shift = |p: f64, d: f64| {
                if d == 0.0 || p <= 0.0 || p >= 1.0 {
                    p
                } else {
                    sigmoid(logit(p) + d)
                }
            };
            let hazards = nu
                .hazards()
                .iter()
                .map(|h| {
                    let (e, c) = renormalize(
                        shift(h.event, *event_shift),
                        shift(h.censor, *censoring_shift),
                    );
                    HazardPair::new(e, c)
                })
                .collect();
            NuisanceAtArm::new(hazards)
        }
    }
}

fn features(x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(x.len() + 1, std::iter::once(1.0).chain(x.iter().copied()))
}

/// Weighted ridge-logistic regression by damped Newton steps.
///
/// Two pseudo-rows of weight `s` at the covariate mean (one per label) act as
/// Laplace smoothing of the intercept; slopes carry a ridge of the same
/// weight so separated cells stay bounded.
fn fit_logistic(rows: &[(DVector<f64>, f64)], s: f64, dim: usize) -> DVector<f64> {
    let p = dim + 1;
    let mut centre = DVector::zeros(p);
    centre[0] = 1.0;
    if !rows.is_empty() {
        for (f, _) in rows {
            centre += f;
        }
        centre /= rows.len() as f64;
    }
    let ridge = s;
    let objective = |beta: &DVector<f64>| {
        let mut ll = 0.0;
        let mut term = |f: &DVector<f64>, y: f64, w: f64| {
            let z = beta.dot(f);
            // log(1 + e^z) − y z, stably
            let softplus = if z > 0.0 {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            };
            ll += w * (softplus - y * z);
        };
        for (f, y) in rows {
            term(f, *y, 1.0);
        }
        term(&centre, 1.0, s);
        term(&centre, 0.0, s);
        ll + 0.5 * ridge * beta.rows(1, dim).norm_squared()
    };
    let mut beta = DVector::zeros(p);
    let mut current = objective(&beta);
    for _ in 0..200 {
        let mut grad = DVector::zeros(p);
        let mut hess = DMatrix::zeros(p, p);
        let mut acc = |f: &DVector<f64>, y: f64, w: f64| {
            let mu = sigmoid(beta.dot(f));
            grad.axpy(w * (mu - y), f, 1.0);
            hess.ger(w * mu * (1.0 - mu), f, f, 1.0);
        };
        for (f, y) in rows {
            acc(f, *y, 1.0);
        }
        acc(&centre, 1.0, s);
        acc(&centre, 0.0, s);
        for j in 1..p {
            grad[j] += ridge * beta[j];
            hess[(j, j)] += ridge;
        }
        if grad.norm() <= 1e-8 {
            break;
        }
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad.clone(),
        };
        let mut t = 1.0;
        loop {
            let trial = &beta - t * &step;
            let value = objective(&trial);
            if value <= current || t < 1e-10 {
                beta = trial;
                current = value;
                break;
            }
            t *= 0.5;
        }
    }
    beta
}

/// Fits `spec` on `history`.
///
/// `oracle` supplies the true process for the oracle-based learners and is
/// ignored otherwise.
pub fn fit(
    spec: &HazardLearnerSpec,
    history: &[Observation],
    horizon: TimeHorizon,
    conv: TieConvention,
    oracle: Option<&Arc<Dgp>>,
    fold: FoldId,
) -> Result<FittedNuisance> {
    spec.validate()?;
    let predictor = fit_predictor(spec, history, horizon, conv, oracle)?;
    Ok(FittedNuisance {
        predictor,
        horizon,
        conv,
        fold,
        fitted_on: history.len(),
    })
}

fn require_oracle(oracle: Option<&Arc<Dgp>>) -> Result<Arc<Dgp>> {
    oracle
        .cloned()
        .ok_or_else(|| Error::Config("oracle learner requires the data-generating process".into()))
}

fn fit_predictor(
    spec: &HazardLearnerSpec,
    history: &[Observation],
    horizon: TimeHorizon,
    conv: TieConvention,
    oracle: Option<&Arc<Dgp>>,
) -> Result<Predictor> {
    let n = horizon.len();
    Ok(match spec {
        HazardLearnerSpec::Oracle => Predictor::Oracle(require_oracle(oracle)?),
        HazardLearnerSpec::Corrupted {
            event_shift,
            censoring_shift,
        } => Predictor::Corrupted {
            dgp: require_oracle(oracle)?,
            event_shift: *event_shift,
            censoring_shift: *censoring_shift,
        },
        HazardLearnerSpec::Binned { bins, smoothing } => {
            let mut counts = vec![[Counts::new(n), Counts::new(n)]; *bins];
            for obs in history {
                counts[bin_of(obs.x[0], *bins)][obs.arm.index()].add(obs);
            }
            let cells = counts
                .iter()
                .map(|pair| {
                    Ok([
                        NuisanceAtArm::new(pair[0].smoothed(*smoothing, conv))?,
                        NuisanceAtArm::new(pair[1].smoothed(*smoothing, conv))?,
                    ])
                })
                .collect::<Result<Vec<_>>>()?;
            Predictor::Binned { bins: *bins, cells }
        }
        HazardLearnerSpec::Logistic { smoothing } => {
            let dim = history.first().map_or(1, |o| o.x.len());
            let fit_arm = |arm: Arm| {
                let mut event = Vec::with_capacity(n);
                let mut conditional_censor = Vec::with_capacity(n);
                for i in 0..n {
                    let mut ev_rows = Vec::new();
                    let mut ce_rows = Vec::new();
                    for obs in history.iter().filter(|o| o.arm == arm) {
                        if !obs.outcome.at_risk(i) {
                            continue;
                        }
                        let f = features(&obs.x);
                        let is_event = obs.outcome.event_at_time(i);
                        if !is_event {
                            let c = if obs.outcome.censored_at_time(i) {
                                1.0
                            } else {
                                0.0
                            };
                            ce_rows.push((f.clone(), c));
                        }
                        ev_rows.push((f, if is_event { 1.0 } else { 0.0 }));
                    }
                    event.push(fit_logistic(&ev_rows, *smoothing, dim));
                    conditional_censor.push(fit_logistic(&ce_rows, *smoothing, dim));
                }
                LogisticPath {
                    event,
                    conditional_censor,
                }
            };
            Predictor::Logistic {
                paths: [fit_arm(Arm::Control), fit_arm(Arm::Treated)],
            }
        }
        HazardLearnerSpec::ConstantCensoringMs { base, smoothing } => {
            let base = fit_predictor(base, history, horizon, conv, oracle)?;
            let mut pooled = Counts::new(n);
            for obs in history {
                pooled.add(obs);
            }
            let conditional = (0..n)
                .map(|i| {
                    let (m, e, c) = (pooled.at_risk[i], pooled.events[i], pooled.censored[i]);
                    (c + smoothing) / (m - e + 2.0 * smoothing)
                })
                .collect();
            Predictor::ConstantCensoring {
                base: Box::new(base),
                conditional,
            }
        }
    })
}

/// When cross-fitted models are refreshed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefitMode {
    /// A fold's model is refit once that fold has grown by `m` units.
    #[default]
    Rolling,
    /// Both models are refit at every multiple of `m` rounds.
    Batch,
}

/// A learner bound to a horizon, tie convention and (optionally) the true process.
#[derive(Clone, Debug)]
pub struct Learner {
    pub spec: HazardLearnerSpec,
    pub horizon: TimeHorizon,
    pub conv: TieConvention,
    pub oracle: Option<Arc<Dgp>>,
}

impl Learner {
    pub fn new(
        spec: HazardLearnerSpec,
        horizon: TimeHorizon,
        conv: TieConvention,
        oracle: Option<Arc<Dgp>>,
    ) -> Result<Self> {
        spec.validate()?;
        if spec.needs_oracle() && oracle.is_none() {
            return Err(Error::Config(
                "oracle-based learner requires the data-generating process".into(),
            ));
        }
        Ok(Self {
            spec,
            horizon,
            conv,
            oracle,
        })
    }

    pub fn fit(&self, history: &[Observation], fold: FoldId) -> Result<FittedNuisance> {
        fit(
            &self.spec,
            history,
            self.horizon,
            self.conv,
            self.oracle.as_ref(),
            fold,
        )
    }
}

/// Two temporal folds with their cross-fitted models.
///
/// Unit `r` joins fold `J_r = r mod 2` and is scored by the model trained on
/// fold `1 − J_r`.
#[derive(Clone, Debug)]
pub struct CrossFitState {
    learner: Learner,
    refit_every: usize,
    mode: RefitMode,
    folds: [Vec<Observation>; 2],
    models: [Option<Arc<FittedNuisance>>; 2],
    size_at_fit: [usize; 2],
    last_round: u64,
}

impl CrossFitState {
    pub fn new(learner: Learner, refit_every: usize, mode: RefitMode) -> Result<Self> {
        if refit_every == 0 {
            return Err(Error::Config("refit batch size must be at least 1".into()));
        }
        let mut state = Self {
            learner,
            refit_every,
            mode,
            folds: [Vec::new(), Vec::new()],
            models: [None, None],
            size_at_fit: [0, 0],
            last_round: 0,
        };
        if state.learner.spec.is_data_free() {
            for j in 0..2 {
                state.models[j] = Some(Arc::new(state.learner.fit(&[], FoldId::from_index(j))?));
            }
        }
        Ok(state)
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn fold(&self, fold: FoldId) -> &[Observation] {
        &self.folds[fold.index()]
    }

    pub fn model(&self, fold: FoldId) -> Option<&Arc<FittedNuisance>> {
        self.models[fold.index()].as_ref()
    }

    pub fn last_round(&self) -> u64 {
        self.last_round
    }

    /// Appends the next round's observation and refits per the schedule.
    pub fn update(&mut self, obs: Observation) -> Result<()> {
        let expected = self.last_round + 1;
        if obs.round != expected {
            return Err(Error::OutOfOrder {
                expected,
                got: obs.round,
            });
        }
        let j = FoldId::of_round(obs.round).index();
        self.folds[j].push(obs);
        self.last_round = expected;
        if self.learner.spec.is_data_free() {
            return Ok(());
        }
        match self.mode {
            RefitMode::Rolling => {
                if self.folds[j].len() - self.size_at_fit[j] >= self.refit_every {
                    self.refit(j)?;
                }
            }
            RefitMode::Batch => {
                if self.last_round % self.refit_every as u64 == 0 {
                    self.refit(0)?;
                    self.refit(1)?;
                }
            }
        }
        Ok(())
    }

    fn refit(&mut self, j: usize) -> Result<()> {
        let model = self.learner.fit(&self.folds[j], FoldId::from_index(j))?;
        self.models[j] = Some(Arc::new(model));
        self.size_at_fit[j] = self.folds[j].len();
        Ok(())
    }

    /// Opposite-fold model for round `r`, or `NotReady` before its first fit.
    pub fn model_for_round(&self, r: u64) -> Result<&Arc<FittedNuisance>> {
        if r <= self.last_round {
            return Err(Error::OutOfOrder {
                expected: self.last_round + 1,
                got: r,
            });
        }
        let opposite = 1 - FoldId::of_round(r).index();
        self.models[opposite]
            .as_ref()
            .ok_or(Error::NotReady { round: r })
    }

    /// `η̂^{(−J_r)}(x)` for both arms.
    pub fn predict_for_unit(&self, r: u64, x: &[f64]) -> Result<[NuisanceAtArm; 2]> {
        self.model_for_round(r)?.predict_pair(x)
    }

    /// Smoothed marginal hazards fitted on the opposite fold as it stands now.
    ///
    /// Used to score rounds that arrive before the opposite fold's first model.
    pub fn fallback_for_unit(&self, r: u64) -> Result<FittedNuisance> {
        let opposite = 1 - FoldId::of_round(r).index();
        fit(
            &HazardLearnerSpec::marginal(),
            &self.folds[opposite],
            self.learner.horizon,
            self.learner.conv,
            None,
            FoldId::from_index(opposite),
        )
    }

    /// Cross-fitted model if available, otherwise the marginal fallback.
    pub fn scoring_model(&self, r: u64) -> Result<Arc<FittedNuisance>> {
        match self.model_for_round(r) {
            Ok(m) => Ok(Arc::clone(m)),
            Err(Error::NotReady { .. }) => Ok(Arc::new(self.fallback_for_unit(r)?)),
            Err(e) => Err(e),
        }
    }
}
