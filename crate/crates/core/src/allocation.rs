//! Variance targets and treatment allocation policies.
//!
//! The A-optimal policy has the Neyman form `√V₁ / (√V₁ + √V₀)` with the
//! censoring-aware per-arm variance `V_a = Σ_t S_t² Σ_{i≤t} λ^S_i / (S_i G_{i-1})`.
//! D- and E-optimal policies replace `V_a` by a criterion-specific weight that
//! depends on the policy itself and are solved by fixed-point iteration on a
//! weighted covariate grid.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dgp::GroundTruth;
use crate::error::{Error, Result};
use crate::survival::{NuisanceAtArm, TieConvention};

/// Ridge added to `Σ_eff` before inversion.
pub const SIGMA_RIDGE: f64 = 1e-10;

/// Censoring-aware variance of one arm.
pub fn arm_variance(nu: &NuisanceAtArm, conv: TieConvention) -> Result<f64> {
    let t_max = nu.horizon().t_max();
    let c = nu.curves(conv);
    c.check_overlap(t_max)?;
    let mut inner = 0.0;
    let mut v = 0.0;
    for t in 0..=t_max {
        inner += nu.event_hazard(t) / (c.event[t] * c.censor_before[t]);
        v += c.event[t] * c.event[t] * inner;
    }
    Ok(v)
}

/// `(V₀, V₁)` from the two arms' hazards.
pub fn variance_target(
    nu0: &NuisanceAtArm,
    nu1: &NuisanceAtArm,
    conv: TieConvention,
) -> Result<(f64, f64)> {
    Ok((arm_variance(nu0, conv)?, arm_variance(nu1, conv)?))
}

/// Censoring-agnostic variance `Σ_t S_t (1 − S_t)`.
pub fn neyman_naive_target(nu: &NuisanceAtArm) -> f64 {
    nu.curves(TieConvention::Ties)
        .event
        .iter()
        .map(|s| s * (1.0 - s))
        .sum()
}

/// Unconstrained A-optimal treatment probability; 0.5 when both variances vanish.
pub fn a_optimal_prob(v0: f64, v1: f64) -> f64 {
    let (r0, r1) = (v0.max(0.0).sqrt(), v1.max(0.0).sqrt());
    if r0 + r1 == 0.0 {
        0.5
    } else {
        r1 / (r0 + r1)
    }
}

/// Reference optimum for arm-dependent censoring with ratio `g = G(x,0)/G(x,1)`.
pub fn censoring_ratio_closed_form(kappa: f64, g: f64) -> f64 {
    g.sqrt() / (kappa.sqrt() + g.sqrt())
}

/// How assignment probabilities are clipped away from 0 and 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruncationSchedule {
    /// `[α, 1 − α]` at every round.
    ConstantClip { alpha: f64 },
    /// `[1/k_r, 1 − 1/k_r]` with `k_r = min(k_cap, k0 + r^exponent)`.
    Growing { k0: f64, exponent: f64, k_cap: f64 },
}

impl Default for TruncationSchedule {
    fn default() -> Self {
        TruncationSchedule::ConstantClip { alpha: 0.05 }
    }
}

impl TruncationSchedule {
    pub fn growing() -> Self {
        TruncationSchedule::Growing {
            k0: 2.0,
            exponent: 0.2,
            k_cap: 100.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TruncationSchedule::ConstantClip { alpha } => {
                if !(alpha > 0.0 && alpha < 0.5) {
                    return Err(Error::Config(format!(
                        "clip alpha {alpha} outside (0, 0.5)"
                    )));
                }
            }
            TruncationSchedule::Growing {
                k0,
                exponent,
                k_cap,
            } => {
                if !(k0 >= 2.0 && exponent > 0.0 && exponent < 0.25 && k_cap >= k0) {
                    return Err(Error::Config(format!(
                        "growing schedule needs k0 ≥ 2, exponent in (0, 0.25), k_cap ≥ k0 \
                         (got {k0}, {exponent}, {k_cap})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `k_r` at round `r ≥ 1`.
    pub fn k(&self, r: u64) -> f64 {
        match *self {
            TruncationSchedule::ConstantClip { alpha } => 1.0 / alpha,
            TruncationSchedule::Growing {
                k0,
                exponent,
                k_cap,
            } => (k0 + (r as f64).powf(exponent)).min(k_cap),
        }
    }
}

/// A policy value before and after truncation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub raw: f64,
    pub truncated: f64,
    pub k: f64,
}

/// Clamps `raw` into `[1/k_r, 1 − 1/k_r]`.
pub fn truncate(raw: f64, r: u64, sched: &TruncationSchedule) -> PolicyEvaluation {
    let k = sched.k(r);
    let lo = 1.0 / k;
    PolicyEvaluation {
        raw,
        truncated: raw.clamp(lo, 1.0 - lo),
        k,
    }
}

/// Allocation rule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignCriterion {
    #[default]
    AOpt,
    DOpt,
    EOpt,
    NeymanNaive,
    Uniform,
}

/// `Σ_eff(π) = E[Σ₁/π + Σ₀/(1−π)] + E[b bᵀ]` on the ground-truth grid.
pub fn sigma_eff(policy: &[f64], truth: &GroundTruth) -> DMatrix<f64> {
    assert_eq!(policy.len(), truth.grid.len(), "policy must cover the grid");
    let mut out = truth.b_outer.clone();
    for (p, pt) in policy.iter().zip(&truth.grid) {
        out += (pt.weight / p) * &pt.sigma[1];
        out += (pt.weight / (1.0 - p)) * &pt.sigma[0];
    }
    out
}

pub fn a_criterion(sigma: &DMatrix<f64>) -> f64 {
    sigma.trace()
}

/// `log det Σ`; `−∞` if not positive definite.
pub fn d_criterion(sigma: &DMatrix<f64>) -> f64 {
    match sigma.clone().cholesky() {
        Some(ch) => 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
        None => f64::NEG_INFINITY,
    }
}

pub fn e_criterion(sigma: &DMatrix<f64>) -> f64 {
    sigma
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

fn clip(p: f64, alpha: f64) -> f64 {
    p.clamp(alpha, 1.0 - alpha)
}

/// Clipped A-optimal policy on the grid.
pub fn a_optimal_policy(truth: &GroundTruth, alpha: f64) -> Vec<f64> {
    truth
        .grid
        .iter()
        .map(|pt| {
            clip(
                a_optimal_prob(pt.sigma[0].trace(), pt.sigma[1].trace()),
                alpha,
            )
        })
        .collect()
}

fn inverse_with_ridge(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = sigma.nrows();
    let reg = sigma + DMatrix::identity(n, n) * SIGMA_RIDGE;
    if let Some(ch) = reg.clone().cholesky() {
        return Ok(ch.inverse());
    }
    reg.try_inverse()
        .ok_or_else(|| Error::Numerical("Σ_eff is singular even after ridge".into()))
}

/// Leading unit eigenvector by power iteration, with an eigendecomposition fallback.
pub fn leading_eigenvector(sigma: &DMatrix<f64>) -> DVector<f64> {
    let n = sigma.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    for _ in 0..100_000 {
        let w = sigma * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return v;
        }
        let mut next = w / norm;
        if next.dot(&v) < 0.0 {
            next = -next;
        }
        let diff = (&next - &v).amax();
        v = next;
        if diff <= 1e-10 {
            return v;
        }
    }
    // slow spectral gap; fall back to a direct decomposition
    let eig = sigma.clone().symmetric_eigen();
    let imax = eig.eigenvalues.imax();
    eig.eigenvectors.column(imax).into_owned()
}

/// Result of a fixed-point policy solve.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointSolution {
    pub policy: Vec<f64>,
    pub iterations: usize,
    /// `‖T(π) − π‖_∞` at the returned policy, `T` the undamped update.
    pub residual: f64,
    pub damped: bool,
}

fn neyman_form(q1: f64, q0: f64, alpha: f64) -> f64 {
    clip(a_optimal_prob(q0, q1), alpha)
}

fn fixed_point(
    truth: &GroundTruth,
    alpha: f64,
    max_iters: usize,
    tol: f64,
    update: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<FixedPointSolution> {
    let mut policy = a_optimal_policy(truth, alpha);
    let mut damped = false;
    let mut prev_residual = f64::INFINITY;
    let mut rising = 0;
    for k in 0..max_iters {
        let target = update(&policy)?;
        let residual = policy
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if residual <= tol {
            return Ok(FixedPointSolution {
                policy,
                iterations: k,
                residual,
                damped,
            });
        }
        if residual >= prev_residual {
            rising += 1;
            if rising >= 2 {
                damped = true;
            }
        } else {
            rising = 0;
        }
        prev_residual = residual;
        policy = if damped {
            policy
                .iter()
                .zip(&target)
                .map(|(a, b)| 0.5 * a + 0.5 * b)
                .collect()
        } else {
            target
        };
    }
    let residual = {
        let target = update(&policy)?;
        policy
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    Err(Error::Numerical(format!(
        "fixed point did not converge in {max_iters} iterations (last residual {residual:.3e})"
    )))
}

/// D-optimal policy: weights `tr(Σ_eff(π)⁻¹ Σ_a(x))`.
pub fn d_optimal_policy(
    truth: &GroundTruth,
    alpha: f64,
    max_iters: usize,
    tol: f64,
) -> Result<FixedPointSolution> {
    fixed_point(truth, alpha, max_iters, tol, |policy| {
        let inv = inverse_with_ridge(&sigma_eff(policy, truth))?;
        Ok(truth
            .grid
            .iter()
            .map(|pt| {
                let q1 = (&inv * &pt.sigma[1]).trace();
                let q0 = (&inv * &pt.sigma[0]).trace();
                neyman_form(q1, q0, alpha)
            })
            .collect())
    })
}

/// E-optimal policy: weights `v*ᵀ Σ_a(x) v*`, `v*` the leading eigenvector of `Σ_eff(π)`.
pub fn e_optimal_policy(
    truth: &GroundTruth,
    alpha: f64,
    max_iters: usize,
    tol: f64,
) -> Result<FixedPointSolution> {
    fixed_point(truth, alpha, max_iters, tol, |policy| {
        let v = leading_eigenvector(&sigma_eff(policy, truth));
        Ok(truth
            .grid
            .iter()
            .map(|pt| {
                let q1 = (v.transpose() * &pt.sigma[1] * &v)[(0, 0)];
                let q0 = (v.transpose() * &pt.sigma[0] * &v)[(0, 0)];
                neyman_form(q1, q0, alpha)
            })
            .collect())
    })
}

/// Policy values on the grid for any criterion.
pub fn policy_on_grid(
    criterion: DesignCriterion,
    truth: &GroundTruth,
    alpha: f64,
) -> Result<Vec<f64>> {
    Ok(match criterion {
        DesignCriterion::AOpt => a_optimal_policy(truth, alpha),
        DesignCriterion::DOpt => d_optimal_policy(truth, alpha, 10_000, 1e-12)?.policy,
        DesignCriterion::EOpt => e_optimal_policy(truth, alpha, 10_000, 1e-12)?.policy,
        DesignCriterion::NeymanNaive => truth
            .grid
            .iter()
            .map(|pt| {
                let naive = |s: &Vec<f64>| s.iter().map(|v| v * (1.0 - v)).sum::<f64>();
                clip(
                    a_optimal_prob(naive(&pt.survival[0]), naive(&pt.survival[1])),
                    alpha,
                )
            })
            .collect(),
        DesignCriterion::Uniform => vec![0.5; truth.grid.len()],
    })
}
