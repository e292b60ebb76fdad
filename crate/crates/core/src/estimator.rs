//! The adaptive survival estimator and its inference.
//!
//! The estimate at horizon `t` after `R` rounds is the running mean of the
//! cross-fitted pseudo-outcomes `φ_{t,r}`. Variance uses the `1/R`
//! normalization. Fixed-time intervals are Wald intervals; confidence
//! sequences use the asymptotic Gaussian-mixture radius
//! `√(2(R V ρ² + 1)/(R² ρ²) · log(√(R V ρ² + 1)/α))`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::nuisance::FittedNuisance;
use crate::survival::{
    apo_pseudo_outcome, Arm, EifVector, NuisanceAtArm, Observation, ObservedTime, TieConvention,
};

/// Running sums of pseudo-outcomes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AseState {
    count: u64,
    sum: Vec<f64>,
    mean: Vec<f64>,
    /// Sum of squared deviations from the running mean.
    m2: Vec<f64>,
    log: Option<Vec<EifVector>>,
}

impl AseState {
    pub fn new(len: usize) -> Self {
        Self {
            count: 0,
            sum: vec![0.0; len],
            mean: vec![0.0; len],
            m2: vec![0.0; len],
            log: None,
        }
    }

    /// Also keeps every `φ` for diagnostics.
    pub fn with_log(len: usize) -> Self {
        Self {
            log: Some(Vec::new()),
            ..Self::new(len)
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn horizon_len(&self) -> usize {
        self.sum.len()
    }

    pub fn log(&self) -> Option<&[EifVector]> {
        self.log.as_deref()
    }

    pub fn update(&mut self, phi: &EifVector) -> Result<()> {
        if phi.len() != self.sum.len() {
            return Err(Error::Numerical(format!(
                "pseudo-outcome has {} horizons, estimator expects {}",
                phi.len(),
                self.sum.len()
            )));
        }
        if !phi.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite pseudo-outcome at round {}",
                self.count + 1
            )));
        }
        self.count += 1;
        let n = self.count as f64;
        for (t, &p) in phi.as_slice().iter().enumerate() {
            self.sum[t] += p;
            let delta = p - self.mean[t];
            self.mean[t] += delta / n;
            self.m2[t] += delta * (p - self.mean[t]);
        }
        if let Some(log) = self.log.as_mut() {
            log.push(phi.clone());
        }
        Ok(())
    }

    /// `τ̂_t = (1/R) Σ_r φ_{t,r}`.
    pub fn estimate(&self) -> Result<Vec<f64>> {
        if self.count == 0 {
            return Err(Error::InsufficientData("no rounds accumulated".into()));
        }
        let n = self.count as f64;
        Ok(self.sum.iter().map(|s| s / n).collect())
    }

    /// `V̂_t = (1/R) Σ_r (φ_{t,r} − τ̂_t)²`.
    pub fn variance_estimate(&self) -> Result<Vec<f64>> {
        if self.count < 2 {
            return Err(Error::InsufficientData(format!(
                "variance needs at least 2 rounds, have {}",
                self.count
            )));
        }
        let n = self.count as f64;
        Ok(self.m2.iter().map(|m| (m / n).max(0.0)).collect())
    }

    pub fn fixed_time_ci(&self, alpha: f64) -> Result<ConfidenceOutput> {
        let point = self.estimate()?;
        let v = self.variance_estimate()?;
        let z = z_quantile(1.0 - alpha / 2.0)?;
        let n = self.count as f64;
        Ok(ConfidenceOutput {
            point,
            half_width: v.iter().map(|v| z * (v / n).sqrt()).collect(),
            kind: IntervalKind::FixedTime,
            alpha,
            rho: None,
        })
    }

    pub fn asymp_cs(&self, alpha: f64, rho: f64) -> Result<ConfidenceOutput> {
        let point = self.estimate()?;
        let v = if self.count >= 2 {
            self.variance_estimate()?
        } else {
            vec![0.0; point.len()]
        };
        let half_width = v
            .iter()
            .map(|&v| cs_radius(self.count, v, rho, alpha))
            .collect::<Result<_>>()?;
        Ok(ConfidenceOutput {
            point,
            half_width,
            kind: IntervalKind::AsympCs,
            alpha,
            rho: Some(rho),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    FixedTime,
    AsympCs,
}

/// Per-horizon symmetric interval around the point estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceOutput {
    pub point: Vec<f64>,
    pub half_width: Vec<f64>,
    pub kind: IntervalKind,
    pub alpha: f64,
    pub rho: Option<f64>,
}

impl ConfidenceOutput {
    pub fn lower(&self, t: usize) -> f64 {
        self.point[t] - self.half_width[t]
    }

    pub fn upper(&self, t: usize) -> f64 {
        self.point[t] + self.half_width[t]
    }

    pub fn covers(&self, t: usize, value: f64) -> bool {
        self.lower(t) <= value && value <= self.upper(t)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidProbability {
            what: "significance level",
            value: alpha,
        })
    }
}

/// Standard normal quantile.
pub fn z_quantile(p: f64) -> Result<f64> {
    check_alpha(p)?;
    Ok(Normal::standard().inverse_cdf(p))
}

/// Asymptotic confidence-sequence radius after `r` rounds with variance `v`.
pub fn cs_radius(r: u64, v: f64, rho: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(rho > 0.0) || r == 0 {
        return Err(Error::Config(format!(
            "confidence sequence needs rho > 0 and R ≥ 1 (rho = {rho}, R = {r})"
        )));
    }
    let r = r as f64;
    let a = r * v.max(0.0) * rho * rho + 1.0;
    Ok((2.0 * a / (r * r * rho * rho) * (a.sqrt() / alpha).ln()).sqrt())
}

/// `ρ* = √((−2 log α + log(−2 log α + 1)) / R)`, the approximate width minimizer at `R`.
pub fn rho_star(r: u64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if r == 0 {
        return Err(Error::Config("rho_star needs R ≥ 1".into()));
    }
    let l = -2.0 * alpha.ln();
    Ok(((l + (l + 1.0).ln()) / r as f64).sqrt())
}

/// Plug-in estimate: mean over covariates of `Ŝ_t(x,1) − Ŝ_t(x,0)`.
pub fn plugin_estimate(
    covariates: &[Vec<f64>],
    fitted: &FittedNuisance,
    conv: TieConvention,
) -> Result<Vec<f64>> {
    if covariates.is_empty() {
        return Err(Error::InsufficientData(
            "plug-in estimate needs covariates".into(),
        ));
    }
    let n = fitted.horizon().len();
    let mut acc = vec![0.0; n];
    for x in covariates {
        let [n0, n1] = fitted.predict_pair(x)?;
        let (c0, c1) = (n0.curves(conv), n1.curves(conv));
        for t in 0..n {
            acc[t] += c1.event[t] - c0.event[t];
        }
    }
    let m = covariates.len() as f64;
    Ok(acc.into_iter().map(|a| a / m).collect())
}

/// Censoring-agnostic AIPW pseudo-outcome of the survival indicator `Y_t = 1(T̃ > t)`:
///
/// `φ_t = μ₁ − μ₀ + A/π (Y_t − μ₁) − (1 − A)/(1 − π) (Y_t − μ₀)` with `μ_a = Ŝ_t(x, a)`.
///
/// Units censored before `t` have unknown `Y_t` and contribute a zero
/// residual, i.e. only the outcome model. A unit censored at `t` had no event
/// at `t`, so `Y_t = 1`. No inverse censoring weights are
/// applied, so the estimator is biased whenever censoring is informative.
pub fn naive_aipw_pseudo_outcome(
    obs: &Observation,
    pi_x: f64,
    nu0: &NuisanceAtArm,
    nu1: &NuisanceAtArm,
    conv: TieConvention,
) -> Result<EifVector> {
    if !(pi_x > 0.0 && pi_x < 1.0) {
        return Err(Error::InvalidProbability {
            what: "treatment probability",
            value: pi_x,
        });
    }
    let (s0, s1) = (nu0.curves(conv).event, nu1.curves(conv).event);
    let (mu_a, weight) = match obs.arm {
        Arm::Treated => (&s1, 1.0 / pi_x),
        Arm::Control => (&s0, -1.0 / (1.0 - pi_x)),
    };
    Ok(EifVector(
        (0..s0.len())
            .map(|t| {
                let residual = match obs.outcome {
                    ObservedTime::At { time, event: false } if time < t => 0.0,
                    ObservedTime::At { time, event: true } if time <= t => -mu_a[t],
                    _ => 1.0 - mu_a[t],
                };
                s1[t] - s0[t] + weight * residual
            })
            .collect(),
    ))
}

/// One scored unit: observation, treatment probability and its cross-fitted hazards.
#[derive(Clone, Debug)]
pub struct ScoredUnit {
    pub obs: Observation,
    pub pi_treated: f64,
    /// Indexed by [`Arm::index`].
    pub nuisance: [NuisanceAtArm; 2],
}

/// Running average potential survival curves.
#[derive(Clone, Debug, PartialEq)]
pub struct ApoState {
    arms: [AseState; 2],
}

impl ApoState {
    pub fn new(len: usize) -> Self {
        Self {
            arms: [AseState::new(len), AseState::new(len)],
        }
    }

    pub fn update(&mut self, unit: &ScoredUnit, conv: TieConvention) -> Result<()> {
        for arm in Arm::BOTH {
            let p = if arm.is_treated() {
                unit.pi_treated
            } else {
                1.0 - unit.pi_treated
            };
            let phi = apo_pseudo_outcome(&unit.obs, arm, p, &unit.nuisance[arm.index()], conv)?;
            self.arms[arm.index()].update(&phi)?;
        }
        Ok(())
    }

    pub fn arm(&self, arm: Arm) -> &AseState {
        &self.arms[arm.index()]
    }

    /// `Ŝ_t(a)` for both arms.
    pub fn curves(&self) -> Result<[Vec<f64>; 2]> {
        Ok([self.arms[0].estimate()?, self.arms[1].estimate()?])
    }
}

/// Average potential survival curves from a full scored history.
pub fn apo_curve_estimate(units: &[ScoredUnit], conv: TieConvention) -> Result<[Vec<f64>; 2]> {
    let first = units
        .first()
        .ok_or_else(|| Error::InsufficientData("empty history".into()))?;
    let mut st = ApoState::new(first.nuisance[0].horizon().len());
    for u in units {
        st.update(u, conv)?;
    }
    st.curves()
}

/// Enrolment schedule shared by all adaptive variants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    /// Refit (and, in batch mode, policy-update) interval `m`.
    pub batch_size: usize,
    /// Rounds assigned with the initial policy, `R0`.
    pub burn_in: u64,
    /// `π_init`.
    pub initial_policy: f64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            burn_in: 1000,
            initial_policy: 0.5,
        }
    }
}

impl BatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.initial_policy > 0.0 && self.initial_policy < 1.0) {
            return Err(Error::Config(format!(
                "initial policy {} outside (0, 1)",
                self.initial_policy
            )));
        }
        Ok(())
    }
}
