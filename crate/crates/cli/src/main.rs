use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use ase_core::harness::{figures, simulate, ExperimentConfig, Preset, SeedSpec};
use ase_core::{DesignCriterion, DgpConfig, Error, TieConvention};
use clap::{Parser, Subcommand, ValueEnum};

/// Adaptive survival experiments: simulation, policies and figure series.
#[derive(Debug, Parser)]
#[command(name = "ase", version)]
struct Cli {
    /// Worker threads for seed-parallel runs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a JSON-configured experiment and write per-seed CSVs and a summary.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the seed list with seeds `0..N`.
        #[arg(long)]
        seeds: Option<usize>,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a design criterion's policy over a covariate grid as CSV.
    Policy {
        #[arg(long, value_enum, default_value_t = DgpArg::Synthetic)]
        dgp: DgpArg,
        #[arg(long, value_enum, default_value_t = CriterionArg::A)]
        criterion: CriterionArg,
        /// Number of midpoints on `[0, 1]` for the synthetic process.
        #[arg(long, default_value_t = 21)]
        grid: usize,
        /// Clipping level of the policy.
        #[arg(long, default_value_t = 0.05)]
        clip: f64,
    },
    /// Write the plot-ready series of a named figure preset.
    Reproduce {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        out: PathBuf,
        /// Override the preset's seed count.
        #[arg(long)]
        seeds: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DgpArg {
    Synthetic,
    Twins,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CriterionArg {
    A,
    D,
    E,
    Neyman,
}

impl From<CriterionArg> for DesignCriterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::A => DesignCriterion::AOpt,
            CriterionArg::D => DesignCriterion::DOpt,
            CriterionArg::E => DesignCriterion::EOpt,
            CriterionArg::Neyman => DesignCriterion::NeymanNaive,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        e if e.is_config() => 2,
        Error::Io(_) | Error::Csv(_) => 1,
        _ => 3,
    }
}

fn run(cli: Cli) -> ase_core::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate { config, seeds, out } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(n) = seeds {
                cfg.seeds = SeedSpec::Range { count: n, base: 0 };
            }
            let out = out.or_else(|| cfg.output_dir.clone()).ok_or_else(|| {
                Error::Config("no output directory: pass --out or set output_dir".into())
            })?;
            let summary = simulate(&cfg, &out)?;
            for v in &summary.variants {
                eprintln!(
                    "{:<11} final MSE {:.3e}  coverage {:.3}",
                    v.variant.label(),
                    v.final_mse(),
                    v.final_coverage()
                );
            }
            eprintln!("wrote {}", out.display());
        }
        Command::Policy {
            dgp,
            criterion,
            grid,
            clip,
        } => {
            if !(clip > 0.0 && clip < 0.5) {
                return Err(Error::Config(format!("clip {clip} outside (0, 0.5)")));
            }
            let conv = TieConvention::Ties;
            let process = match dgp {
                DgpArg::Synthetic => DgpConfig::default(),
                DgpArg::Twins => DgpConfig::twins(),
            }
            .build(conv)?;
            let rows = figures::policy_table(&process, conv, criterion.into(), grid, clip)?;
            let mut w = csv::Writer::from_writer(std::io::stdout().lock());
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Command::Reproduce { preset, out, seeds } => {
            let preset: Preset = preset.parse()?;
            for path in figures::reproduce(preset, &out, seeds)? {
                eprintln!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
