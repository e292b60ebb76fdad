//! Experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::allocation::{DesignCriterion, TruncationSchedule};
use crate::dgp::DgpConfig;
use crate::error::{Error, Result};
use crate::estimator::BatchConfig;
use crate::nuisance::{HazardLearnerSpec, RefitMode};
use crate::survival::TieConvention;

/// Estimator and allocation variants compared by the harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Oracle nuisances and oracle A-optimal allocation.
    Oracle,
    /// Oracle nuisances, uniform allocation.
    OracleNa,
    /// Learned nuisances, adaptive allocation.
    Ase,
    /// Learned nuisances, uniform allocation.
    AseNa,
    /// As `Ase` with a constant-in-covariates censoring model.
    AseMs,
    /// Plug-in identification formula, adaptive allocation.
    Plugin,
    /// Plug-in identification formula, uniform allocation.
    PluginNa,
    /// Censoring-agnostic Neyman allocation and censoring-agnostic AIPW.
    A2ipwNaive,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Oracle,
        Variant::OracleNa,
        Variant::Ase,
        Variant::AseNa,
        Variant::AseMs,
        Variant::Plugin,
        Variant::PluginNa,
        Variant::A2ipwNaive,
    ];

    /// Upper-case label used in file names and reports.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Oracle => "ORACLE",
            Variant::OracleNa => "ORACLE_NA",
            Variant::Ase => "ASE",
            Variant::AseNa => "ASE_NA",
            Variant::AseMs => "ASE_MS",
            Variant::Plugin => "PLUGIN",
            Variant::PluginNa => "PLUGIN_NA",
            Variant::A2ipwNaive => "A2IPW_NAIVE",
        }
    }

    /// Assignment probability is adapted to estimated variances.
    pub fn is_adaptive(self) -> bool {
        !matches!(self, Variant::OracleNa | Variant::AseNa | Variant::PluginNa)
    }

    pub fn uses_oracle_nuisance(self) -> bool {
        matches!(self, Variant::Oracle | Variant::OracleNa)
    }

    pub fn is_plugin(self) -> bool {
        matches!(self, Variant::Plugin | Variant::PluginNa)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Seeds as an explicit list or `count` consecutive values from `base`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range {
        count: usize,
        #[serde(default)]
        base: u64,
    },
}

impl Default for SeedSpec {
    fn default() -> Self {
        SeedSpec::Range { count: 50, base: 0 }
    }
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Range { count, base } => (0..*count as u64).map(|i| base + i).collect(),
        }
    }
}

fn default_rounds() -> u64 {
    2000
}

fn default_alpha() -> f64 {
    0.05
}

fn default_cs_start() -> u64 {
    500
}

fn default_record_every() -> u64 {
    1
}

fn default_variants() -> Vec<Variant> {
    vec![
        Variant::Oracle,
        Variant::Ase,
        Variant::AseNa,
        Variant::A2ipwNaive,
        Variant::PluginNa,
    ]
}

/// A complete experiment description, read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub dgp: DgpConfig,
    #[serde(default)]
    pub tie_convention: TieConvention,
    /// Total rounds `R`.
    #[serde(default = "default_rounds")]
    pub rounds: u64,
    #[serde(default)]
    pub batch: BatchConfig,
    #[serde(default)]
    pub refit_mode: RefitMode,
    #[serde(default)]
    pub learner: HazardLearnerSpec,
    #[serde(default)]
    pub criterion: DesignCriterion,
    #[serde(default)]
    pub truncation: TruncationSchedule,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub seeds: SeedSpec,
    /// Significance level of intervals and confidence sequences.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Confidence-sequence mixing parameter; `ρ*(R, α)` when absent.
    #[serde(default)]
    pub cs_rho: Option<f64>,
    /// First round of the window over which time-uniform coverage is scored.
    #[serde(default = "default_cs_start")]
    pub cs_start: u64,
    /// Per-round CSV rows are written for rounds divisible by this stride (and the last round).
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dgp: DgpConfig::default(),
            tie_convention: TieConvention::Ties,
            rounds: default_rounds(),
            batch: BatchConfig::default(),
            refit_mode: RefitMode::Rolling,
            learner: HazardLearnerSpec::default(),
            criterion: DesignCriterion::AOpt,
            truncation: TruncationSchedule::default(),
            variants: default_variants(),
            seeds: SeedSpec::default(),
            alpha: default_alpha(),
            cs_rho: None,
            cs_start: default_cs_start(),
            record_every: default_record_every(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The desk-scale synthetic preset: `R = 2000`, `R0 = min(1000, R/2)`, `m = 100`, 50 seeds.
    pub fn synthetic_preset() -> Self {
        Self {
            variants: Variant::ALL.to_vec(),
            ..Self::default()
        }
    }

    /// The Twins-style preset with the same schedule.
    pub fn twins_preset() -> Self {
        Self {
            dgp: DgpConfig::twins(),
            ..Self::synthetic_preset()
        }
    }

    /// Sets `R` and rescales the burn-in to `min(1000, R/2)`.
    pub fn with_rounds(mut self, rounds: u64) -> Self {
        self.rounds = rounds;
        self.batch.burn_in = (rounds / 2).min(1000);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.batch.validate()?;
        self.truncation.validate()?;
        self.learner.validate()?;
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.batch.burn_in > self.rounds {
            return Err(Error::Config(format!(
                "burn-in {} exceeds rounds {}",
                self.batch.burn_in, self.rounds
            )));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("at least one variant is required".into()));
        }
        let mut sorted = self.variants.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.variants.len() {
            return Err(Error::Config("variants must be distinct".into()));
        }
        if self.seeds.seeds().is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        if let Some(rho) = self.cs_rho {
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(Error::Config(format!("cs_rho must be positive, got {rho}")));
            }
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_json_uses_defaults() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.seeds.seeds().len(), 50);
    }

    #[test]
    fn round_trip() {
        let cfg = ExperimentConfig::twins_preset();
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_unknown_and_inconsistent() {
        assert!(ExperimentConfig::from_json(r#"{"roundz": 3}"#)
            .unwrap_err()
            .is_config());
        let err = ExperimentConfig::from_json(
            r#"{"rounds": 10, "batch": {"batch_size": 5, "burn_in": 20, "initial_policy": 0.5}}"#,
        )
        .unwrap_err();
        assert!(err.is_config());
        assert!(ExperimentConfig::from_json(r#"{"variants": []}"#)
            .unwrap_err()
            .is_config());
        assert!(ExperimentConfig::from_json(r#"{"variants": ["ase", "ase"]}"#).is_err());
    }

    #[test]
    fn seed_forms() {
        let cfg = ExperimentConfig::from_json(r#"{"seeds": [4, 9]}"#).unwrap();
        assert_eq!(cfg.seeds.seeds(), vec![4, 9]);
        let cfg = ExperimentConfig::from_json(r#"{"seeds": {"count": 3, "base": 10}}"#).unwrap();
        assert_eq!(cfg.seeds.seeds(), vec![10, 11, 12]);
    }

    #[test]
    fn rounds_rescale_burn_in() {
        let cfg = ExperimentConfig::default().with_rounds(400);
        assert_eq!(cfg.batch.burn_in, 200);
        let cfg = ExperimentConfig::default().with_rounds(20_000);
        assert_eq!(cfg.batch.burn_in, 1000);
    }
}
