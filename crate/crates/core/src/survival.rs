//! Discrete-time survival algebra.
//!
//! Everything here is a pure function of observed hazards. For a unit at
//! covariate `x` in arm `a` the observed event hazard `λ^S_i` and censoring
//! hazard `λ^G_i` generate
//!
//! * the event survival `S_t = Π_{i≤t} (1 − λ^S_i)` with `S_{-1} = 1`,
//! * the censoring survival `G_{t-1}` entering the weight at time `t`, whose
//!   factors depend on the [`TieConvention`],
//! * the IPCW martingale sum `ξ_t = Σ_{i≤t} [1(T̃=i,Δ=1) − 1(T̃≥i) λ^S_i] / (S_i G_{i-1})`,
//! * the uncentred efficient influence function of the survival contrast.
//!
//! Products are accumulated in linear probability space. With hazards bounded
//! away from one this is exact to a few ulps for the horizons the engine is
//! built for (`t_max` up to roughly 20); the smallest survival value that can
//! appear is bounded by the overlap condition, never by underflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used for probability bookkeeping (sums of atoms, hazard sums).
pub const PROB_TOL: f64 = 1e-12;

/// Discrete time grid `{0, …, t_max}` shared by every unit of an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeHorizon {
    t_max: usize,
}

impl TimeHorizon {
    pub fn new(t_max: usize) -> Self {
        Self { t_max }
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    /// Number of grid points, `t_max + 1`.
    pub fn len(&self) -> usize {
        self.t_max + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn times(&self) -> std::ops::RangeInclusive<usize> {
        0..=self.t_max
    }
}

/// Whether event and censoring may share a time point.
///
/// * `Ties`: `Δ = 1(T ≤ C)`. Hazards are the observed hazards of two disjoint
///   outcomes, so `λ^S + λ^G ≤ 1`, and `G` has factors `1 − λ^G_i / (1 − λ^S_i)`.
/// * `NoTies`: `Δ = 1(T < C)` with separately defined hazards. At each time an
///   at-risk unit first experiences the event with probability `λ^S_i`; if it
///   does not, it is censored with probability `λ^G_i`. `G` has factors
///   `1 − λ^G_i` and does not depend on the event hazard.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieConvention {
    #[default]
    Ties,
    NoTies,
}

/// Treatment arm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treated];

    pub fn index(self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }

    pub fn from_treated(treated: bool) -> Self {
        if treated {
            Arm::Treated
        } else {
            Arm::Control
        }
    }

    pub fn is_treated(self) -> bool {
        self == Arm::Treated
    }

    pub fn other(self) -> Self {
        match self {
            Arm::Control => Arm::Treated,
            Arm::Treated => Arm::Control,
        }
    }
}

impl From<Arm> for u8 {
    fn from(arm: Arm) -> u8 {
        arm.index() as u8
    }
}

impl TryFrom<u8> for Arm {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        match v {
            0 => Ok(Arm::Control),
            1 => Ok(Arm::Treated),
            other => Err(format!("arm must be 0 or 1, got {other}")),
        }
    }
}

/// Event and censoring hazard at one time point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HazardPair {
    /// Event hazard `λ^S`.
    pub event: f64,
    /// Censoring hazard `λ^G`.
    pub censor: f64,
}

impl HazardPair {
    pub fn new(event: f64, censor: f64) -> Self {
        Self { event, censor }
    }

    fn validate(&self, time: usize, conv: TieConvention) -> Result<()> {
        for (name, v) in [("event", self.event), ("censoring", self.censor)] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidHazard {
                    time,
                    detail: format!("{name} hazard {v} outside [0, 1]"),
                });
            }
        }
        if conv == TieConvention::Ties && self.event + self.censor > 1.0 + PROB_TOL {
            return Err(Error::InvalidHazard {
                time,
                detail: format!(
                    "event + censoring hazard = {} exceeds 1",
                    self.event + self.censor
                ),
            });
        }
        Ok(())
    }
}

/// Hazard path of one arm at one covariate value: the nuisance `η` restricted to `(x, a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuisanceAtArm {
    hazards: Vec<HazardPair>,
}

impl NuisanceAtArm {
    /// Builds a hazard path, checking every entry lies in `[0, 1]`.
    pub fn new(hazards: Vec<HazardPair>) -> Result<Self> {
        if hazards.is_empty() {
            return Err(Error::InvalidHazard {
                time: 0,
                detail: "empty hazard path".into(),
            });
        }
        for (i, h) in hazards.iter().enumerate() {
            // range check only; the sum constraint depends on the convention
            h.validate(i, TieConvention::NoTies)?;
        }
        Ok(Self { hazards })
    }

    pub fn from_slices(event: &[f64], censor: &[f64]) -> Result<Self> {
        if event.len() != censor.len() {
            return Err(Error::InvalidHazard {
                time: 0,
                detail: format!(
                    "event path has {} entries, censoring path has {}",
                    event.len(),
                    censor.len()
                ),
            });
        }
        Self::new(
            event
                .iter()
                .zip(censor)
                .map(|(&e, &c)| HazardPair::new(e, c))
                .collect(),
        )
    }

    /// Time-homogeneous hazards over `{0, …, t_max}`.
    pub fn constant(t_max: usize, event: f64, censor: f64) -> Result<Self> {
        Self::new(vec![HazardPair::new(event, censor); t_max + 1])
    }

    pub fn horizon(&self) -> TimeHorizon {
        TimeHorizon::new(self.hazards.len() - 1)
    }

    pub fn hazards(&self) -> &[HazardPair] {
        &self.hazards
    }

    pub fn event_hazard(&self, i: usize) -> f64 {
        self.hazards[i].event
    }

    pub fn censor_hazard(&self, i: usize) -> f64 {
        self.hazards[i].censor
    }

    /// Checks the convention-specific invariants (`λ^S + λ^G ≤ 1` under ties).
    pub fn validate(&self, conv: TieConvention) -> Result<()> {
        self.hazards
            .iter()
            .enumerate()
            .try_for_each(|(i, h)| h.validate(i, conv))
    }

    /// Event survival `S_t`; `t = -1` gives 1.
    pub fn event_survival(&self, t: isize) -> f64 {
        debug_assert!(t >= -1 && t <= self.horizon().t_max() as isize);
        if t < 0 {
            return 1.0;
        }
        self.hazards[..=t as usize]
            .iter()
            .map(|h| 1.0 - h.event)
            .product()
    }

    /// Censoring survival `G_{t-1}` that weights time `t`; `G_{-1} = 1` at `t = 0`.
    ///
    /// Fails with the offending index when some factor is not strictly positive.
    pub fn censoring_survival(&self, t: usize, conv: TieConvention) -> Result<f64> {
        let mut g = 1.0;
        for i in 0..t {
            let f = censor_factor(self.hazards[i], conv);
            if !(f > 0.0) {
                return Err(Error::Overlap {
                    time: i,
                    detail: format!("censoring survival factor {f} is not positive"),
                });
            }
            g *= f;
        }
        Ok(g)
    }

    /// Both survival paths over the full horizon, without overlap checks.
    pub fn curves(&self, conv: TieConvention) -> SurvivalCurves {
        let n = self.hazards.len();
        let mut event = Vec::with_capacity(n);
        let mut censor_before = Vec::with_capacity(n);
        let (mut s, mut g) = (1.0, 1.0);
        for h in &self.hazards {
            censor_before.push(g);
            s *= 1.0 - h.event;
            event.push(s);
            g *= censor_factor(*h, conv);
        }
        SurvivalCurves {
            event,
            censor_before,
        }
    }
}

fn censor_factor(h: HazardPair, conv: TieConvention) -> f64 {
    match conv {
        TieConvention::Ties => {
            let remaining = 1.0 - h.event;
            if remaining > 0.0 {
                1.0 - h.censor / remaining
            } else {
                f64::NAN
            }
        }
        TieConvention::NoTies => 1.0 - h.censor,
    }
}

/// `S_t` and `G_{t-1}` for `t = 0..=t_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalCurves {
    /// `S_t`.
    pub event: Vec<f64>,
    /// `G_{t-1}`; the first entry is `G_{-1} = 1`.
    pub censor_before: Vec<f64>,
}

impl SurvivalCurves {
    /// Requires `S_i > 0` and `G_{i-1} > 0` for all `i ≤ upto`.
    pub fn check_overlap(&self, upto: usize) -> Result<()> {
        for i in 0..=upto {
            if !(self.event[i] > 0.0) {
                return Err(Error::Overlap {
                    time: i,
                    detail: format!("event survival {} is not positive", self.event[i]),
                });
            }
            if !(self.censor_before[i] > 0.0) {
                // the factor that failed sits one step earlier
                return Err(Error::Overlap {
                    time: i.saturating_sub(1),
                    detail: format!(
                        "censoring survival {} is not positive",
                        self.censor_before[i]
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Observed follow-up of a unit: `(T̃, Δ)` or survival past the horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservedTime {
    /// `T̃ = time` with `Δ = 1` when `event` is set.
    At { time: usize, event: bool },
    /// `T̃ > t_max`; no indicator is recorded.
    PastHorizon,
}

impl ObservedTime {
    pub fn event_at(time: usize) -> Self {
        ObservedTime::At { time, event: true }
    }

    pub fn censored_at(time: usize) -> Self {
        ObservedTime::At { time, event: false }
    }

    /// `1(T̃ ≥ i)`.
    pub fn at_risk(&self, i: usize) -> bool {
        match *self {
            ObservedTime::At { time, .. } => time >= i,
            ObservedTime::PastHorizon => true,
        }
    }

    /// `1(T̃ = i, Δ = 1)`.
    pub fn event_at_time(&self, i: usize) -> bool {
        matches!(*self, ObservedTime::At { time, event: true } if time == i)
    }

    /// `1(T̃ = i, Δ = 0)`.
    pub fn censored_at_time(&self, i: usize) -> bool {
        matches!(*self, ObservedTime::At { time, event: false } if time == i)
    }

    /// `1(T̃ > t)`.
    pub fn survives_past(&self, t: usize) -> bool {
        match *self {
            ObservedTime::At { time, .. } => time > t,
            ObservedTime::PastHorizon => true,
        }
    }

    /// Censored at or before `t`.
    pub fn censored_by(&self, t: usize) -> bool {
        matches!(*self, ObservedTime::At { time, event: false } if time <= t)
    }
}

/// One enrolled unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub arm: Arm,
    pub outcome: ObservedTime,
    /// Enrolment round, starting at 1.
    pub round: u64,
}

/// One point of the exact law of `(T̃, Δ)` at fixed `(x, a)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeAtom {
    pub outcome: ObservedTime,
    pub prob: f64,
}

/// Exact distribution of the observed outcome.
///
/// Atoms are ordered `(0, event), (0, censored), (1, event), …, past horizon`;
/// the list always has `2(t_max + 1) + 1` entries, zero-mass atoms included.
pub fn outcome_atoms(nu: &NuisanceAtArm, conv: TieConvention) -> Result<Vec<OutcomeAtom>> {
    nu.validate(conv)?;
    let mut atoms = Vec::with_capacity(2 * nu.hazards.len() + 1);
    let mut at_risk = 1.0;
    for (i, h) in nu.hazards.iter().enumerate() {
        let (p_event, p_censor) = match conv {
            TieConvention::Ties => (h.event, h.censor),
            TieConvention::NoTies => (h.event, (1.0 - h.event) * h.censor),
        };
        atoms.push(OutcomeAtom {
            outcome: ObservedTime::event_at(i),
            prob: at_risk * p_event,
        });
        atoms.push(OutcomeAtom {
            outcome: ObservedTime::censored_at(i),
            prob: at_risk * p_censor,
        });
        at_risk *= (1.0 - p_event - p_censor).max(0.0);
    }
    atoms.push(OutcomeAtom {
        outcome: ObservedTime::PastHorizon,
        prob: at_risk,
    });
    Ok(atoms)
}

/// `ξ_t` for every `t ≤ upto`, as a cumulative sum.
pub fn xi_path(
    outcome: &ObservedTime,
    nu: &NuisanceAtArm,
    upto: usize,
    conv: TieConvention,
) -> Result<Vec<f64>> {
    let curves = nu.curves(conv);
    xi_path_from_curves(outcome, nu, &curves, upto)
}

pub(crate) fn xi_path_from_curves(
    outcome: &ObservedTime,
    nu: &NuisanceAtArm,
    curves: &SurvivalCurves,
    upto: usize,
) -> Result<Vec<f64>> {
    curves.check_overlap(upto)?;
    let mut out = Vec::with_capacity(upto + 1);
    let mut acc = 0.0;
    for i in 0..=upto {
        let mut num = 0.0;
        if outcome.event_at_time(i) {
            num += 1.0;
        }
        if outcome.at_risk(i) {
            num -= nu.hazards[i].event;
        }
        acc += num / (curves.event[i] * curves.censor_before[i]);
        out.push(acc);
    }
    Ok(out)
}

/// IPCW martingale term `ξ_t` for one outcome.
pub fn xi(
    outcome: &ObservedTime,
    nu: &NuisanceAtArm,
    t: usize,
    conv: TieConvention,
) -> Result<f64> {
    Ok(*xi_path(outcome, nu, t, conv)?
        .last()
        .expect("path has t + 1 entries"))
}

/// Per-horizon pseudo-outcome vector `φ_0, …, φ_{t_max}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EifVector(pub Vec<f64>);

impl EifVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<usize> for EifVector {
    type Output = f64;

    fn index(&self, t: usize) -> &f64 {
        &self.0[t]
    }
}

fn check_open_unit(what: &'static str, p: f64) -> Result<()> {
    if p.is_finite() && p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidProbability { what, value: p })
    }
}

/// Uncentred efficient influence function of the survival contrast:
///
/// `φ_t = S_t(x,1) − S_t(x,0) − (A − π)/(π(1 − π)) · ξ_t · S_t(x,A)`.
pub fn eif_pseudo_outcome(
    obs: &Observation,
    pi_x: f64,
    nu0: &NuisanceAtArm,
    nu1: &NuisanceAtArm,
    conv: TieConvention,
) -> Result<EifVector> {
    check_open_unit("treatment probability", pi_x)?;
    let t_max = nu0.horizon().t_max();
    let c0 = nu0.curves(conv);
    let c1 = nu1.curves(conv);
    let (nu_a, c_a) = match obs.arm {
        Arm::Control => (nu0, &c0),
        Arm::Treated => (nu1, &c1),
    };
    let xi = xi_path_from_curves(&obs.outcome, nu_a, c_a, t_max)?;
    let a = if obs.arm.is_treated() { 1.0 } else { 0.0 };
    let weight = (a - pi_x) / (pi_x * (1.0 - pi_x));
    Ok(EifVector(
        (0..=t_max)
            .map(|t| c1.event[t] - c0.event[t] - weight * xi[t] * c_a.event[t])
            .collect(),
    ))
}

/// Uncentred influence function of the average potential survival curve of `arm`:
///
/// `φ_{a,t} = S_t(x,a) − 1(A = a)/π_a · S_t(x,a) · ξ_t`.
///
/// The difference of the two arms' pseudo-outcomes equals [`eif_pseudo_outcome`].
pub fn apo_pseudo_outcome(
    obs: &Observation,
    arm: Arm,
    pi_arm: f64,
    nu: &NuisanceAtArm,
    conv: TieConvention,
) -> Result<EifVector> {
    check_open_unit("arm probability", pi_arm)?;
    let t_max = nu.horizon().t_max();
    let curves = nu.curves(conv);
    if obs.arm != arm {
        return Ok(EifVector(curves.event));
    }
    let xi = xi_path_from_curves(&obs.outcome, nu, &curves, t_max)?;
    Ok(EifVector(
        (0..=t_max)
            .map(|t| curves.event[t] - curves.event[t] * xi[t] / pi_arm)
            .collect(),
    ))
}
