//! Data-generating processes and their exact ground truth.
//!
//! Two processes are provided:
//!
//! * a synthetic process with a uniform scalar covariate and logistic hazards
//!   `λ^S_t = σ(α_t + η(x) + τ(x)·a)`, `λ^G_t = σ(γ_t + φ(x) + ψ(x)·a)`, where
//!   the intercept paths are calibrated to marginal control-arm targets;
//! * a Twins-style process with a binary covariate and time-homogeneous
//!   hazards from a fixed table.
//!
//! Ground truth (`τ`, per-arm covariance `Σ_a(x)`, `E[b bᵀ]`) is computed on a
//! weighted covariate grid by exact enumeration of the outcome law.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::composite_gauss_legendre;
use crate::survival::{
    outcome_atoms, xi_path, Arm, NuisanceAtArm, ObservedTime, OutcomeAtom, TieConvention,
    TimeHorizon,
};

/// Gauss–Legendre nodes per panel of the synthetic covariate grid.
pub const QUADRATURE_NODES: usize = 64;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Covariate functions of the synthetic process.
///
/// `η(x) = eta_intercept + eta_slope (x − ½)`,
/// `τ(x) = tau_base + tau_low 1(x ≤ low_cut) + tau_high 1(x ≥ high_cut)`,
/// `φ(x) = phi_slope (x − ½)`,
/// `ψ(x) = psi_base + psi_low 1(x ≤ low_cut) + psi_high 1(x ≥ high_cut)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCoefficients {
    pub eta_intercept: f64,
    pub eta_slope: f64,
    pub tau_base: f64,
    pub tau_low: f64,
    pub tau_high: f64,
    pub phi_slope: f64,
    pub psi_base: f64,
    pub psi_low: f64,
    pub psi_high: f64,
    pub low_cut: f64,
    pub high_cut: f64,
}

impl Default for SyntheticCoefficients {
    fn default() -> Self {
        Self {
            eta_intercept: 1.05,
            eta_slope: 0.12,
            tau_base: -0.28,
            tau_low: 0.65,
            tau_high: -0.42,
            phi_slope: 0.06,
            psi_base: 0.14,
            psi_low: -0.26,
            psi_high: 0.20,
            low_cut: 0.35,
            high_cut: 0.75,
        }
    }
}

impl SyntheticCoefficients {
    /// Both arms share event and censoring dynamics.
    pub fn symmetric_arms(mut self) -> Self {
        self.tau_base = 0.0;
        self.tau_low = 0.0;
        self.tau_high = 0.0;
        self.psi_base = 0.0;
        self.psi_low = 0.0;
        self.psi_high = 0.0;
        self
    }

    fn step(&self, base: f64, low: f64, high: f64, x: f64) -> f64 {
        let mut v = base;
        if x <= self.low_cut {
            v += low;
        }
        if x >= self.high_cut {
            v += high;
        }
        v
    }

    pub fn eta(&self, x: f64) -> f64 {
        self.eta_intercept + self.eta_slope * (x - 0.5)
    }

    pub fn tau(&self, x: f64) -> f64 {
        self.step(self.tau_base, self.tau_low, self.tau_high, x)
    }

    pub fn phi(&self, x: f64) -> f64 {
        self.phi_slope * (x - 0.5)
    }

    pub fn psi(&self, x: f64) -> f64 {
        self.step(self.psi_base, self.psi_low, self.psi_high, x)
    }

    fn event_logit(&self, x: f64, arm: Arm) -> f64 {
        self.eta(x) + if arm.is_treated() { self.tau(x) } else { 0.0 }
    }

    fn censor_logit(&self, x: f64, arm: Arm) -> f64 {
        self.phi(x) + if arm.is_treated() { self.psi(x) } else { 0.0 }
    }

    /// Breakpoints of the covariate functions on `[0, 1]`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = vec![0.0];
        for c in [self.low_cut, self.high_cut] {
            if c > 0.0 && c < 1.0 && !b.contains(&c) {
                b.push(c);
            }
        }
        b.push(1.0);
        b.sort_by(f64::total_cmp);
        b
    }
}

/// Intercept paths and covariate functions of the synthetic process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDgpParams {
    /// Event intercepts `α_t`.
    pub alpha: Vec<f64>,
    /// Censoring intercepts `γ_t`.
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub coefficients: SyntheticCoefficients,
}

impl SyntheticDgpParams {
    pub fn horizon(&self) -> TimeHorizon {
        TimeHorizon::new(self.alpha.len().saturating_sub(1))
    }

    fn check_shape(&self) -> Result<()> {
        if self.alpha.is_empty() || self.alpha.len() != self.gamma.len() {
            return Err(Error::Config(format!(
                "intercept paths must be nonempty and of equal length (alpha {}, gamma {})",
                self.alpha.len(),
                self.gamma.len()
            )));
        }
        Ok(())
    }

    /// Calibrated to the default marginal targets at horizon `t_max`.
    pub fn calibrated(t_max: usize, conv: TieConvention) -> Result<Self> {
        let (s, g) = default_targets(t_max);
        calibrate_intercepts(&s, &g, SyntheticCoefficients::default(), conv)
    }
}

/// Hazards of the synthetic process at covariate `x ∈ [0, 1]`.
pub fn synthetic_hazards(params: &SyntheticDgpParams, x: f64, arm: Arm) -> Result<NuisanceAtArm> {
    params.check_shape()?;
    let c = &params.coefficients;
    let (el, cl) = (c.event_logit(x, arm), c.censor_logit(x, arm));
    let event: Vec<f64> = params.alpha.iter().map(|a| sigmoid(a + el)).collect();
    let censor: Vec<f64> = params.gamma.iter().map(|g| sigmoid(g + cl)).collect();
    let nu = NuisanceAtArm::from_slices(&event, &censor)?;
    nu.validate(TieConvention::Ties)
        .map_err(|e| Error::Calibration {
            time: match e {
                Error::InvalidHazard { time, .. } => time,
                _ => 0,
            },
            detail: format!("hazards at x = {x}, arm {}: {e}", arm.index()),
        })?;
    Ok(nu)
}

/// Default marginal target paths.
///
/// Control survival falls log-linearly from 0.50 to 0.02 and censoring
/// survival linearly from 0.84 to 0.62; only the endpoints are fixed.
pub fn default_targets(t_max: usize) -> (Vec<f64>, Vec<f64>) {
    let frac = |t: usize| {
        if t_max == 0 {
            0.0
        } else {
            t as f64 / t_max as f64
        }
    };
    let s = (0..=t_max)
        .map(|t| (0.50f64.ln() + frac(t) * (0.02f64.ln() - 0.50f64.ln())).exp())
        .collect();
    let g = (0..=t_max)
        .map(|t| 0.84 + frac(t) * (0.62 - 0.84))
        .collect();
    (s, g)
}

fn uniform_grid(coef: &SyntheticCoefficients) -> Vec<(f64, f64)> {
    composite_gauss_legendre(QUADRATURE_NODES, &coef.breakpoints())
}

fn bisect(mut f: impl FnMut(f64) -> f64, time: usize, what: &str) -> Result<f64> {
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
        return Err(Error::Calibration {
            time,
            detail: format!("{what} target is not bracketed (residuals {flo:.3e}, {fhi:.3e})"),
        });
    }
    // f is decreasing in the intercept
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let root = 0.5 * (lo + hi);
    let resid = f(root);
    if resid.abs() > 1e-8 {
        return Err(Error::Calibration {
            time,
            detail: format!("{what} residual {resid:.3e} after bisection"),
        });
    }
    Ok(root)
}

/// Sequential one-dimensional calibration of the intercept paths.
///
/// `α_t` is chosen so that `E_X[S_t(X, 0)] = targets_s[t]` given the earlier
/// intercepts, then `γ_t` so that the marginal control-arm censoring survival
/// through `t` equals `targets_g[t]` under `conv`.
pub fn calibrate_intercepts(
    targets_s: &[f64],
    targets_g: &[f64],
    coefficients: SyntheticCoefficients,
    conv: TieConvention,
) -> Result<SyntheticDgpParams> {
    if targets_s.is_empty() || targets_s.len() != targets_g.len() {
        return Err(Error::Config(
            "survival and censoring targets must be nonempty and of equal length".into(),
        ));
    }
    for targets in [targets_s, targets_g] {
        if targets.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::Config(format!(
                "targets must lie in (0, 1): {targets:?}"
            )));
        }
    }
    let grid = uniform_grid(&coefficients);
    let n = targets_s.len();
    let event_logit: Vec<f64> = grid
        .iter()
        .map(|&(x, _)| coefficients.event_logit(x, Arm::Control))
        .collect();
    let censor_logit: Vec<f64> = grid
        .iter()
        .map(|&(x, _)| coefficients.censor_logit(x, Arm::Control))
        .collect();

    let mut alpha = Vec::with_capacity(n);
    let mut s_prev = vec![1.0; grid.len()];
    let mut event_hazards = Vec::with_capacity(n);
    for (t, &target) in targets_s.iter().enumerate() {
        let a = bisect(
            |a| {
                grid.iter()
                    .zip(&s_prev)
                    .zip(&event_logit)
                    .map(|((&(_, w), &s), &el)| w * s * (1.0 - sigmoid(a + el)))
                    .sum::<f64>()
                    - target
            },
            t,
            "survival",
        )?;
        let lam: Vec<f64> = event_logit.iter().map(|el| sigmoid(a + el)).collect();
        for (s, l) in s_prev.iter_mut().zip(&lam) {
            *s *= 1.0 - l;
        }
        event_hazards.push(lam);
        alpha.push(a);
    }

    let mut gamma = Vec::with_capacity(n);
    let mut g_prev = vec![1.0; grid.len()];
    for (t, &target) in targets_g.iter().enumerate() {
        let lam_s = &event_hazards[t];
        let factor = |g: f64, k: usize| -> f64 {
            let lg = sigmoid(g + censor_logit[k]);
            match conv {
                TieConvention::Ties => 1.0 - lg / (1.0 - lam_s[k]),
                TieConvention::NoTies => 1.0 - lg,
            }
        };
        let g = bisect(
            |g| {
                grid.iter()
                    .enumerate()
                    .map(|(k, &(_, w))| w * g_prev[k] * factor(g, k))
                    .sum::<f64>()
                    - target
            },
            t,
            "censoring",
        )?;
        for (k, gp) in g_prev.iter_mut().enumerate() {
            *gp *= factor(g, k);
        }
        gamma.push(g);
    }

    let params = SyntheticDgpParams {
        alpha,
        gamma,
        coefficients,
    };
    // every grid point, both arms, must carry valid hazards
    for &(x, _) in &grid {
        for arm in Arm::BOTH {
            synthetic_hazards(&params, x, arm)?;
        }
    }
    Ok(params)
}

/// Marginal control-arm paths `E_X[S_t(X,0)]` and censoring survival through `t`.
pub fn synthetic_marginals(
    params: &SyntheticDgpParams,
    conv: TieConvention,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = params.horizon().len();
    let (mut s, mut g) = (vec![0.0; n], vec![0.0; n]);
    for (x, w) in uniform_grid(&params.coefficients) {
        let nu = synthetic_hazards(params, x, Arm::Control)?;
        let c = nu.curves(conv);
        for t in 0..n {
            s[t] += w * c.event[t];
            let through = if t + 1 < n {
                c.censor_before[t + 1]
            } else {
                nu.censoring_survival(t, conv)? * factor_at(&nu, t, conv)
            };
            g[t] += w * through;
        }
    }
    Ok((s, g))
}

fn factor_at(nu: &NuisanceAtArm, t: usize, conv: TieConvention) -> f64 {
    let h = nu.hazards()[t];
    match conv {
        TieConvention::Ties => 1.0 - h.censor / (1.0 - h.event),
        TieConvention::NoTies => 1.0 - h.censor,
    }
}

/// Twins-style hazard table with a binary covariate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwinsDgpParams {
    /// `P(X = 1)`.
    pub p1: f64,
    pub t_max: usize,
    /// `λ^S(x, 0)` for both covariate values.
    pub event_control: f64,
    /// `λ^S(0, 1)`.
    pub event_treated_x0: f64,
    /// `λ^S(1, 1)`.
    pub event_treated_x1: f64,
    /// `λ^G(x, 0)`.
    pub censor_control: f64,
    /// `λ^G(x, 1)`.
    pub censor_treated: f64,
}

impl Default for TwinsDgpParams {
    fn default() -> Self {
        Self {
            p1: 0.5,
            t_max: 3,
            event_control: 0.50,
            event_treated_x0: 0.40,
            event_treated_x1: 0.01,
            censor_control: 0.05,
            censor_treated: 0.108,
        }
    }
}

/// Table lookup, replicated over `t = 0..=t_max`.
pub fn twins_hazards(params: &TwinsDgpParams, x: bool, arm: Arm) -> Result<NuisanceAtArm> {
    let (event, censor) = match (arm, x) {
        (Arm::Control, _) => (params.event_control, params.censor_control),
        (Arm::Treated, false) => (params.event_treated_x0, params.censor_treated),
        (Arm::Treated, true) => (params.event_treated_x1, params.censor_treated),
    };
    NuisanceAtArm::constant(params.t_max, event, censor)
}

/// A calibrated, immutable data-generating process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dgp {
    Synthetic(SyntheticDgpParams),
    Twins(TwinsDgpParams),
}

impl Dgp {
    pub fn horizon(&self) -> TimeHorizon {
        match self {
            Dgp::Synthetic(p) => p.horizon(),
            Dgp::Twins(p) => TimeHorizon::new(p.t_max),
        }
    }

    pub fn covariate_dim(&self) -> usize {
        1
    }

    /// True hazards at covariate `x`.
    pub fn hazards(&self, x: &[f64], arm: Arm) -> Result<NuisanceAtArm> {
        match self {
            Dgp::Synthetic(p) => synthetic_hazards(p, x[0], arm),
            Dgp::Twins(p) => twins_hazards(p, x[0] >= 0.5, arm),
        }
    }

    /// `X ~ Uniform(0, 1)` (synthetic) or `X ~ Bernoulli(p1)` (Twins).
    pub fn sample_covariate<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.gen();
        match self {
            Dgp::Synthetic(_) => vec![u],
            Dgp::Twins(p) => vec![if u < p.p1 { 1.0 } else { 0.0 }],
        }
    }

    /// Weighted covariate grid exact for the covariate law.
    ///
    /// Synthetic: composite 64-node Gauss–Legendre split at the step
    /// breakpoints. Twins: the two support points.
    pub fn covariate_grid(&self) -> Vec<(Vec<f64>, f64)> {
        match self {
            Dgp::Synthetic(p) => uniform_grid(&p.coefficients)
                .into_iter()
                .map(|(x, w)| (vec![x], w))
                .collect(),
            Dgp::Twins(p) => vec![(vec![0.0], 1.0 - p.p1), (vec![1.0], p.p1)],
        }
    }

    /// Marginal survival curve `E_X[S_t(X, a)]`.
    pub fn true_survival(&self, arm: Arm) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.horizon().len()];
        for (x, w) in self.covariate_grid() {
            let c = self.hazards(&x, arm)?.curves(TieConvention::Ties);
            for (o, s) in out.iter_mut().zip(&c.event) {
                *o += w * s;
            }
        }
        Ok(out)
    }

    /// `τ_t = E_X[S_t(X,1) − S_t(X,0)]`.
    pub fn true_tau(&self) -> Result<Vec<f64>> {
        let s1 = self.true_survival(Arm::Treated)?;
        let s0 = self.true_survival(Arm::Control)?;
        Ok(s1.iter().zip(&s0).map(|(a, b)| a - b).collect())
    }
}

/// Draws `(T̃, Δ)` by inverting the cumulative atom distribution at `u ∈ [0, 1)`.
pub fn outcome_from_uniform(atoms: &[OutcomeAtom], u: f64) -> ObservedTime {
    let mut acc = 0.0;
    for atom in atoms {
        acc += atom.prob;
        if u < acc {
            return atom.outcome;
        }
    }
    ObservedTime::PastHorizon
}

/// Samples an observed outcome from the exact law of `nu`.
pub fn sample_outcome<R: Rng + ?Sized>(
    nu: &NuisanceAtArm,
    conv: TieConvention,
    rng: &mut R,
) -> Result<ObservedTime> {
    let atoms = outcome_atoms(nu, conv)?;
    Ok(outcome_from_uniform(&atoms, rng.gen()))
}

/// `Σ_a` at one covariate value: `Cov(S_t ξ_t, S_t' ξ_t' | X, A = a)` by exact enumeration.
pub fn sigma_a_matrix(nu: &NuisanceAtArm, conv: TieConvention) -> Result<DMatrix<f64>> {
    let n = nu.horizon().len();
    let t_max = n - 1;
    let atoms = outcome_atoms(nu, conv)?;
    let s = nu.curves(conv).event;
    let mut second = DMatrix::<f64>::zeros(n, n);
    let mut mean = vec![0.0; n];
    for atom in &atoms {
        if atom.prob == 0.0 {
            continue;
        }
        let xi = xi_path(&atom.outcome, nu, t_max, conv)?;
        let y: Vec<f64> = (0..n).map(|t| s[t] * xi[t]).collect();
        for i in 0..n {
            mean[i] += atom.prob * y[i];
            for j in 0..=i {
                second[(i, j)] += atom.prob * y[i] * y[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..=i {
            let c = second[(i, j)] - mean[i] * mean[j];
            second[(i, j)] = c;
            second[(j, i)] = c;
        }
    }
    Ok(second)
}

/// Ground-truth quantities at one covariate grid point.
#[derive(Clone, Debug)]
pub struct GridPoint {
    pub x: Vec<f64>,
    pub weight: f64,
    /// `S_t(x, a)` indexed by arm.
    pub survival: [Vec<f64>; 2],
    /// `Σ_a(x)` indexed by arm.
    pub sigma: [DMatrix<f64>; 2],
}

impl GridPoint {
    /// `V_a(x) = tr Σ_a(x)`.
    pub fn variance(&self, arm: Arm) -> f64 {
        self.sigma[arm.index()].trace()
    }
}

/// Oracle quantities for a process under a tie convention.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub horizon: TimeHorizon,
    pub grid: Vec<GridPoint>,
    pub tau: Vec<f64>,
    /// `E[b bᵀ]` with `b(x) = S(x,1) − S(x,0) − τ`.
    pub b_outer: DMatrix<f64>,
}

impl GroundTruth {
    pub fn new(dgp: &Dgp, conv: TieConvention) -> Result<Self> {
        Self::from_hazards(
            dgp.horizon(),
            dgp.covariate_grid(),
            |x, arm| dgp.hazards(x, arm),
            conv,
        )
    }

    /// Same quantities for an arbitrary hazard map on a weighted grid.
    ///
    /// With a fitted model in place of the true process this gives the
    /// model-implied covariance structure used by grid-based policies.
    pub fn from_hazards(
        horizon: TimeHorizon,
        covariate_grid: Vec<(Vec<f64>, f64)>,
        hazards: impl Fn(&[f64], Arm) -> Result<NuisanceAtArm>,
        conv: TieConvention,
    ) -> Result<Self> {
        let n = horizon.len();
        let mut grid = Vec::new();
        for (x, weight) in covariate_grid {
            let nu0 = hazards(&x, Arm::Control)?;
            let nu1 = hazards(&x, Arm::Treated)?;
            grid.push(GridPoint {
                survival: [nu0.curves(conv).event, nu1.curves(conv).event],
                sigma: [sigma_a_matrix(&nu0, conv)?, sigma_a_matrix(&nu1, conv)?],
                x,
                weight,
            });
        }
        let mut tau = vec![0.0; n];
        for p in &grid {
            for t in 0..n {
                tau[t] += p.weight * (p.survival[1][t] - p.survival[0][t]);
            }
        }
        let mut b_outer = DMatrix::zeros(n, n);
        for p in &grid {
            let b = nalgebra::DVector::from_iterator(
                n,
                (0..n).map(|t| p.survival[1][t] - p.survival[0][t] - tau[t]),
            );
            b_outer += p.weight * &b * b.transpose();
        }
        Ok(Self {
            horizon,
            grid,
            tau,
            b_outer,
        })
    }
}

/// JSON form of a process; synthetic intercepts are calibrated when omitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DgpConfig {
    Synthetic {
        #[serde(default = "default_synthetic_t_max")]
        t_max: usize,
        #[serde(default)]
        alpha: Option<Vec<f64>>,
        #[serde(default)]
        gamma: Option<Vec<f64>>,
        #[serde(default)]
        survival_targets: Option<Vec<f64>>,
        #[serde(default)]
        censoring_targets: Option<Vec<f64>>,
        #[serde(default)]
        coefficients: SyntheticCoefficients,
    },
    Twins {
        #[serde(flatten)]
        params: TwinsDgpParams,
    },
}

fn default_synthetic_t_max() -> usize {
    4
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig::Synthetic {
            t_max: default_synthetic_t_max(),
            alpha: None,
            gamma: None,
            survival_targets: None,
            censoring_targets: None,
            coefficients: SyntheticCoefficients::default(),
        }
    }
}

impl DgpConfig {
    pub fn twins() -> Self {
        DgpConfig::Twins {
            params: TwinsDgpParams::default(),
        }
    }

    pub fn t_max(&self) -> usize {
        match self {
            DgpConfig::Synthetic { t_max, .. } => *t_max,
            DgpConfig::Twins { params } => params.t_max,
        }
    }

    /// Resolves the configuration into a process, calibrating if needed.
    pub fn build(&self, conv: TieConvention) -> Result<Dgp> {
        match self {
            DgpConfig::Synthetic {
                t_max,
                alpha,
                gamma,
                survival_targets,
                censoring_targets,
                coefficients,
            } => {
                let params = match (alpha, gamma) {
                    (Some(a), Some(g)) => SyntheticDgpParams {
                        alpha: a.clone(),
                        gamma: g.clone(),
                        coefficients: coefficients.clone(),
                    },
                    (None, None) => {
                        let (ds, dg) = default_targets(*t_max);
                        let s = survival_targets.clone().unwrap_or(ds);
                        let g = censoring_targets.clone().unwrap_or(dg);
                        calibrate_intercepts(&s, &g, coefficients.clone(), conv)?
                    }
                    _ => {
                        return Err(Error::Config(
                            "alpha and gamma must be given together".into(),
                        ))
                    }
                };
                if params.horizon().t_max() != *t_max {
                    return Err(Error::Config(format!(
                        "intercept paths cover t_max = {}, config says {t_max}",
                        params.horizon().t_max()
                    )));
                }
                params.check_shape()?;
                Ok(Dgp::Synthetic(params))
            }
            DgpConfig::Twins { params } => {
                if !(0.0..=1.0).contains(&params.p1) {
                    return Err(Error::Config(format!("p1 = {} outside [0, 1]", params.p1)));
                }
                for x in [false, true] {
                    for arm in Arm::BOTH {
                        twins_hazards(params, x, arm)?.validate(TieConvention::Ties)?;
                    }
                }
                Ok(Dgp::Twins(params.clone()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn logistic_at_zero() {
        let coef = SyntheticCoefficients::default();
        let x = 0.5;
        let params = SyntheticDgpParams {
            alpha: vec![-coef.eta(x)],
            gamma: vec![-coef.phi(x) - 3.0],
            coefficients: coef,
        };
        let nu = synthetic_hazards(&params, x, Arm::Control).unwrap();
        assert_abs_diff_eq!(nu.event_hazard(0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn calibration_hits_endpoint_targets() {
        let params = SyntheticDgpParams::calibrated(4, TieConvention::Ties).unwrap();
        let (s, g) = synthetic_marginals(&params, TieConvention::Ties).unwrap();
        assert_abs_diff_eq!(s[0], 0.50, epsilon = 1e-6);
        assert_abs_diff_eq!(s[4], 0.02, epsilon = 1e-6);
        assert_abs_diff_eq!(g[0], 0.84, epsilon = 1e-6);
        assert_abs_diff_eq!(g[4], 0.62, epsilon = 1e-6);
        assert!(s.windows(2).all(|w| w[1] < w[0]));
        assert!(g.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn calibration_is_a_fixed_point() {
        let coef = SyntheticCoefficients::default();
        let params = SyntheticDgpParams {
            alpha: vec![-1.0, -0.8, -0.6, -0.7],
            gamma: vec![-2.5, -3.0, -2.8, -3.1],
            coefficients: coef.clone(),
        };
        for conv in [TieConvention::Ties, TieConvention::NoTies] {
            let (s, g) = synthetic_marginals(&params, conv).unwrap();
            let again = calibrate_intercepts(&s, &g, coef.clone(), conv).unwrap();
            for (a, b) in again.alpha.iter().zip(&params.alpha) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-8);
            }
            for (a, b) in again.gamma.iter().zip(&params.gamma) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn infeasible_target_is_reported() {
        // censoring survival cannot rise over time
        let err = calibrate_intercepts(
            &[0.5, 0.3],
            &[0.5, 0.9],
            SyntheticCoefficients::default(),
            TieConvention::Ties,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Calibration { time: 1, .. }), "{err:?}");
    }

    #[test]
    fn twins_table() {
        let p = TwinsDgpParams::default();
        let nu = twins_hazards(&p, true, Arm::Treated).unwrap();
        assert_eq!(nu.horizon().t_max(), 3);
        assert!(nu
            .hazards()
            .iter()
            .all(|h| h.event == 0.01 && h.censor == 0.108));
        let nu = twins_hazards(&p, false, Arm::Control).unwrap();
        assert!(nu
            .hazards()
            .iter()
            .all(|h| h.event == 0.50 && h.censor == 0.05));
        for x in [false, true] {
            for arm in Arm::BOTH {
                let nu = twins_hazards(&p, x, arm).unwrap();
                assert!(nu.hazards().iter().all(|h| h.event + h.censor <= 1.0));
            }
        }
    }

    #[test]
    fn twins_tau_two_point() {
        for p1 in [0.5, 0.3] {
            let dgp = Dgp::Twins(TwinsDgpParams {
                p1,
                ..Default::default()
            });
            let tau = dgp.true_tau().unwrap();
            assert_abs_diff_eq!(
                tau[0],
                p1 * (0.99 - 0.50) + (1.0 - p1) * (0.60 - 0.50),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn symmetric_arms_have_zero_effect() {
        let coef = SyntheticCoefficients::default().symmetric_arms();
        let (s, g) = default_targets(4);
        let params = calibrate_intercepts(&s, &g, coef, TieConvention::Ties).unwrap();
        let tau = Dgp::Synthetic(params).true_tau().unwrap();
        assert!(tau.iter().all(|t| t.abs() < 1e-15));
    }

    #[test]
    fn covariate_sampling() {
        let syn = Dgp::Synthetic(SyntheticDgpParams::calibrated(4, TieConvention::Ties).unwrap());
        let twins = Dgp::Twins(TwinsDgpParams::default());
        for dgp in [&syn, &twins] {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let n = 100_000;
            let mean: f64 = (0..n)
                .map(|_| dgp.sample_covariate(&mut rng)[0])
                .sum::<f64>()
                / n as f64;
            assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
        }
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10)
                .map(|_| syn.sample_covariate(&mut rng)[0])
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }

    #[test]
    fn sigma_small_cases() {
        let nu = NuisanceAtArm::constant(1, 0.5, 0.0).unwrap();
        let s = sigma_a_matrix(&nu, TieConvention::Ties).unwrap();
        assert_abs_diff_eq!(s[(0, 0)], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(s[(1, 1)], 0.1875, epsilon = 1e-15);

        let nu = NuisanceAtArm::constant(3, 0.0, 0.2).unwrap();
        let s = sigma_a_matrix(&nu, TieConvention::Ties).unwrap();
        assert!(s.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn config_round_trip_and_unknown_keys() {
        let cfg: DgpConfig = serde_json::from_str(r#"{"kind":"twins","p1":0.3}"#).unwrap();
        match &cfg {
            DgpConfig::Twins { params } => assert_eq!(params.p1, 0.3),
            _ => panic!(),
        }
        assert!(serde_json::from_str::<DgpConfig>(r#"{"kind":"synthetic","bogus":1}"#).is_err());
        let cfg: DgpConfig = serde_json::from_str(r#"{"kind":"synthetic"}"#).unwrap();
        assert_eq!(cfg, DgpConfig::default());
        let dgp = cfg.build(TieConvention::Ties).unwrap();
        assert_eq!(dgp.horizon().t_max(), 4);
    }
}
