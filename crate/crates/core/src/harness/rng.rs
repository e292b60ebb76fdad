//! Seeded random streams for one replication.
//!
//! Each replication owns three ChaCha8 streams keyed by `(seed, stream id)`:
//! covariates, treatment-assignment uniforms and outcome uniforms. Every round
//! draws a fixed number of values from each stream, so the draw for round `r`
//! does not depend on what any variant did before it. All variants see the
//! same covariate, the same assignment uniform and the same pair of potential
//! outcomes; a variant's realized arm is `1(u < π_r)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dgp::{outcome_from_uniform, Dgp};
use crate::error::Result;
use crate::survival::{outcome_atoms, Arm, ObservedTime, TieConvention};

const COVARIATE_STREAM: u64 = 1;
const ASSIGNMENT_STREAM: u64 = 2;
const OUTCOME_STREAM: u64 = 3;

/// Everything random about one round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundDraw {
    pub round: u64,
    pub x: Vec<f64>,
    /// Treatment is assigned when this uniform falls below `π_r`.
    pub assignment_uniform: f64,
    /// Potential observed outcomes, indexed by [`Arm::index`].
    pub outcomes: [ObservedTime; 2],
}

impl RoundDraw {
    pub fn assign(&self, pi_treated: f64) -> Arm {
        Arm::from_treated(self.assignment_uniform < pi_treated)
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Generator of [`RoundDraw`]s for one seed.
pub struct RoundStreams<'a> {
    dgp: &'a Dgp,
    conv: TieConvention,
    covariates: ChaCha8Rng,
    assignment: ChaCha8Rng,
    outcomes: ChaCha8Rng,
    next_round: u64,
}

impl<'a> RoundStreams<'a> {
    pub fn new(dgp: &'a Dgp, conv: TieConvention, seed: u64) -> Self {
        Self {
            dgp,
            conv,
            covariates: stream(seed, COVARIATE_STREAM),
            assignment: stream(seed, ASSIGNMENT_STREAM),
            outcomes: stream(seed, OUTCOME_STREAM),
            next_round: 1,
        }
    }

    pub fn next_draw(&mut self) -> Result<RoundDraw> {
        let x = self.dgp.sample_covariate(&mut self.covariates);
        let assignment_uniform: f64 = self.assignment.gen();
        let mut outcomes = [ObservedTime::PastHorizon; 2];
        for arm in Arm::BOTH {
            let u: f64 = self.outcomes.gen();
            let atoms = outcome_atoms(&self.dgp.hazards(&x, arm)?, self.conv)?;
            outcomes[arm.index()] = outcome_from_uniform(&atoms, u);
        }
        let round = self.next_round;
        self.next_round += 1;
        Ok(RoundDraw {
            round,
            x,
            assignment_uniform,
            outcomes,
        })
    }
}
