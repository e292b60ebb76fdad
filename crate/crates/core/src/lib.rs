//! Adaptive survival experimentation engine.
//!
//! Discrete-time survival algebra, data-generating processes with exact
//! ground truth, sequential cross-fitted hazard learners, censoring-aware
//! allocation policies, the adaptive survival estimator with fixed-time and
//! anytime-valid inference, and a seeded experiment harness.

pub mod allocation;
pub mod dgp;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod nuisance;
pub mod quadrature;
pub mod survival;

pub use allocation::{DesignCriterion, TruncationSchedule};
pub use dgp::{Dgp, DgpConfig, GroundTruth, SyntheticDgpParams, TwinsDgpParams};
pub use error::{Error, Result};
pub use estimator::{AseState, BatchConfig, ConfidenceOutput};
pub use harness::{ExperimentConfig, Variant};
pub use nuisance::{CrossFitState, FittedNuisance, HazardLearnerSpec};
pub use survival::{
    apo_pseudo_outcome, eif_pseudo_outcome, outcome_atoms, xi, xi_path, Arm, EifVector, HazardPair,
    NuisanceAtArm, Observation, ObservedTime, OutcomeAtom, SurvivalCurves, TieConvention,
    TimeHorizon,
};
