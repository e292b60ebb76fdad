//! Result persistence.
//!
//! Layout under the output directory:
//!
//! ```text
//! config.json             the resolved configuration
//! summary.json            per-variant curves across seeds
//! seed_<seed>/<VARIANT>.csv  round, horizon, tau_hat, ci_lo, ci_hi, cs_lo, cs_hi, pi_realized, arm
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::harness::metrics::{summarize, Summary};
use crate::harness::run::{run_prepared, Prepared, RoundRow, SeedRun};

/// Writes rows as CSV; empty cells stand for undefined intervals.
pub fn write_rows(path: &Path, rows: &[RoundRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

/// Writes one CSV per variant for a finished seed.
pub fn write_seed(out: &Path, run: &SeedRun) -> Result<()> {
    let dir = seed_dir(out, run.seed);
    fs::create_dir_all(&dir)?;
    for (variant, rows) in &run.rows {
        write_rows(&dir.join(format!("{}.csv", variant.label())), rows)?;
    }
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Runs all seeds, writing per-seed CSVs as they finish, then the summary.
pub fn simulate(config: &ExperimentConfig, out: &Path) -> Result<Summary> {
    let p = Prepared::new(config)?;
    fs::create_dir_all(out)?;
    write_json(&out.join("config.json"), config)?;
    let runs = config
        .seeds
        .seeds()
        .into_par_iter()
        .map(|seed| {
            let mut run = run_prepared(&p, seed, true)?;
            write_seed(out, &run)?;
            run.rows.clear();
            Ok(run)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(config, &p.tau, &runs)?;
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}
