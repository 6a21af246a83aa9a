//! Command-line front end: simulate data, fit nuisances, and write effect,
//! mediation, incremental, sensitivity, subgroup and diagnostic artifacts.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{Context, SimulateArgs};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "ifcausal", version, about = "Influence-function causal effect estimation for survey data")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Survey extract (overrides the config).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Run seed, propagated to every random component.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker-thread cap.
    #[arg(long, global = true, env = "IFCAUSAL_THREADS")]
    pub threads: Option<usize>,
    /// Cross-fitting folds (overrides the config).
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    /// Fit nuisances when no current bundle exists.
    #[arg(long, global = true)]
    pub fit: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic survey from a preset and write its exact truth.
    Simulate {
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        /// Share of accepting respondents made incomplete at random.
        #[arg(long)]
        mcar: Option<f64>,
    },
    /// Cross-fit nuisance models and write the bundle.
    Fit,
    /// Average treatment effects, bounds and pre-specified subgroups.
    Ate,
    /// Interventional mediation decomposition.
    Mediate {
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
        reference: Option<u8>,
    },
    /// Incremental propensity-score effect curves with uniform bands.
    Incremental {
        /// `lo:hi:count` (log-spaced) or a comma-separated list.
        #[arg(long)]
        delta_grid: Option<String>,
    },
    /// Sensitivity bounds for unmeasured confounding.
    Sensitivity {
        #[arg(long)]
        tau_max: Option<f64>,
    },
    /// Discover candidate subgroups and confirm approved ones.
    Subgroups {
        /// Candidate file with `approved` flags set.
        #[arg(long)]
        candidates: Option<PathBuf>,
    },
    /// Calibration curves and weight distributions of the nuisance fit.
    Diagnose,
    /// Rerun the main estimate on alternative sample definitions.
    Variants {
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
    },
}

impl Cli {
    /// Effective configuration after command-line overrides.
    pub fn run_config(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.global.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.global.data {
            cfg.data = Some(d.clone());
        }
        if let Some(k) = self.global.folds {
            cfg.nuisance.folds = Some(k);
        }
        let seed = self.global.seed.unwrap_or(cfg.seed);
        Ok(cfg.with_seed(seed))
    }
}

fn init_threads(threads: Option<usize>) -> CliResult<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // The global pool can only be configured once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Run one command; returns the artifacts written.
pub fn run(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    init_threads(cli.global.threads)?;
    let ctx = Context { cfg: cli.run_config()?, out: cli.global.out.clone(), fit_if_missing: cli.global.fit };
    let writer = match &cli.command {
        Command::Simulate { preset, n, mcar } => {
            commands::simulate(&ctx, &SimulateArgs { preset: preset.clone(), n: *n, mcar: *mcar })?
        }
        Command::Fit => commands::fit(&ctx)?,
        Command::Ate => commands::ate(&ctx)?,
        Command::Mediate { reference } => commands::mediate(&ctx, *reference)?,
        Command::Incremental { delta_grid } => commands::incremental(&ctx, delta_grid.as_deref())?,
        Command::Sensitivity { tau_max } => commands::sensitivity(&ctx, *tau_max)?,
        Command::Subgroups { candidates } => commands::subgroups(&ctx, candidates.as_deref())?,
        Command::Diagnose => commands::diagnose(&ctx)?,
        Command::Variants { variants } => commands::variants(&ctx, variants.as_deref())?,
    };
    Ok(writer.written().to_vec())
}
