//! Aggregation of replications into summary curves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Variant};
use crate::harness::run::{run_prepared, Prepared, SeedRun};

/// Across-seed summary of one variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    /// Mean over seeds of `MSE(r)`, `r = 1..=R`.
    pub mse: Vec<f64>,
    /// Standard error of `mse`.
    pub mse_se: Vec<f64>,
    /// `mse / mse(ORACLE)` when the oracle variant was run.
    pub relative_mse: Option<Vec<f64>>,
    /// Fixed-time coverage averaged over horizons and seeds, per round.
    pub coverage: Vec<f64>,
    /// Fraction of (seed, horizon) pairs whose sequence covered `τ_t` over the whole window.
    pub cs_uniform_coverage: f64,
    /// Mean over seeds of `τ̂_t(R) − τ_t`.
    pub final_bias: Vec<f64>,
    pub final_bias_se: Vec<f64>,
    pub treated_fraction: f64,
    pub mean_pi: f64,
}

impl VariantSummary {
    pub fn final_mse(&self) -> f64 {
        *self.mse.last().expect("at least one round")
    }

    pub fn final_coverage(&self) -> f64 {
        *self.coverage.last().expect("at least one round")
    }

    /// Largest `|bias_t| / se_t` over horizons.
    pub fn max_bias_z(&self) -> f64 {
        self.final_bias
            .iter()
            .zip(&self.final_bias_se)
            .map(|(b, s)| if *s > 0.0 { b.abs() / s } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seeds: Vec<u64>,
    pub rounds: u64,
    pub tau: Vec<f64>,
    pub variants: Vec<VariantSummary>,
}

impl Summary {
    pub fn variant(&self, v: Variant) -> Option<&VariantSummary> {
        self.variants.iter().find(|s| s.variant == v)
    }

    /// `MSE_v(r) / MSE_ORACLE(r)`.
    pub fn relative_mse(&self, v: Variant) -> Result<&[f64]> {
        let s = self
            .variant(v)
            .ok_or_else(|| Error::Config(format!("variant {v} was not run")))?;
        s.relative_mse
            .as_deref()
            .ok_or_else(|| Error::Config("relative MSE requires the ORACLE variant".into()))
    }
}

fn mean_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Reduces seed runs to per-variant curves.
pub fn summarize(config: &ExperimentConfig, tau: &[f64], runs: &[SeedRun]) -> Result<Summary> {
    if runs.is_empty() {
        return Err(Error::InsufficientData(
            "no replications to summarize".into(),
        ));
    }
    let rounds = config.rounds as usize;
    let mut variants = Vec::new();
    for &v in &config.variants {
        let traces: Vec<_> = runs
            .iter()
            .map(|r| r.trace(v).expect("every run covers every variant"))
            .collect();
        let mut mse = Vec::with_capacity(rounds);
        let mut mse_se = Vec::with_capacity(rounds);
        let mut coverage = Vec::with_capacity(rounds);
        for i in 0..rounds {
            let (m, s) = mean_se(traces.iter().map(|t| t.mse[i]));
            mse.push(m);
            mse_se.push(s);
            coverage
                .push(traces.iter().map(|t| t.ci_coverage[i]).sum::<f64>() / traces.len() as f64);
        }
        let cells: usize = traces.iter().map(|t| t.cs_uniform.len()).sum();
        let hits: usize = traces
            .iter()
            .map(|t| t.cs_uniform.iter().filter(|&&b| b).count())
            .sum();
        let (final_bias, final_bias_se) = (0..tau.len())
            .map(|k| mean_se(traces.iter().map(|t| t.final_estimate[k] - tau[k])))
            .unzip();
        variants.push(VariantSummary {
            variant: v,
            mse,
            mse_se,
            relative_mse: None,
            coverage,
            cs_uniform_coverage: hits as f64 / cells as f64,
            final_bias,
            final_bias_se,
            treated_fraction: traces.iter().map(|t| t.treated as f64).sum::<f64>()
                / (traces.len() as f64 * config.rounds as f64),
            mean_pi: traces.iter().map(|t| t.mean_pi).sum::<f64>() / traces.len() as f64,
        });
    }
    if let Some(oracle) = variants
        .iter()
        .find(|s| s.variant == Variant::Oracle)
        .map(|s| s.mse.clone())
    {
        for s in variants.iter_mut() {
            s.relative_mse = Some(s.mse.iter().zip(&oracle).map(|(a, b)| a / b).collect());
        }
    }
    Ok(Summary {
        seeds: runs.iter().map(|r| r.seed).collect(),
        rounds: config.rounds,
        tau: tau.to_vec(),
        variants,
    })
}

/// Runs every seed in parallel; results are in seed-list order.
pub fn run_replications(p: &Prepared) -> Result<Vec<SeedRun>> {
    p.config
        .seeds
        .seeds()
        .into_par_iter()
        .map(|seed| run_prepared(p, seed, false))
        .collect()
}

/// Replicates the experiment over the configured seeds and summarizes.
pub fn run_many(config: &ExperimentConfig) -> Result<Summary> {
    let p = Prepared::new(config)?;
    let runs = run_replications(&p)?;
    summarize(config, &p.tau, &runs)
}

/// Fraction of seed bootstrap resamples in which final-round MSEs follow `order`.
///
/// `strict[i]` selects `<` (true) or `≤` (false) between `order[i]` and `order[i + 1]`.
pub fn bootstrap_ordering(
    runs: &[SeedRun],
    order: &[Variant],
    strict: &[bool],
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    if order.len() < 2 || strict.len() != order.len() - 1 {
        return Err(Error::Config(
            "ordering needs n variants and n − 1 relations".into(),
        ));
    }
    let finals: Vec<Vec<f64>> = order
        .iter()
        .map(|&v| {
            runs.iter()
                .map(|r| {
                    r.trace(v)
                        .map(|t| *t.mse.last().expect("rounds ≥ 1"))
                        .ok_or_else(|| Error::Config(format!("variant {v} was not run")))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let n = runs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    let mut idx = vec![0usize; n];
    for _ in 0..resamples {
        idx.iter_mut().for_each(|i| *i = rng.gen_range(0..n));
        let means: Vec<f64> = finals
            .iter()
            .map(|f| idx.iter().map(|&i| f[i]).sum::<f64>() / n as f64)
            .collect();
        let ok =
            means
                .windows(2)
                .zip(strict)
                .all(|(w, &s)| if s { w[0] < w[1] } else { w[0] <= w[1] });
        hits += ok as usize;
    }
    Ok(hits as f64 / resamples as f64)
}
