//! Command-line front end: dataset generation, validation, feature export,
//! the full analysis and the numerical self-checks.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use streampop::data::Platform;
use streampop::data::{load_dataset, save_dataset};

pub mod config;
pub mod manifest;
pub mod report;

use config::{AnalyzeArgs, RunConfig, SynthArgs};

#[derive(Debug, Parser)]
#[command(name = "streampop", version, about = "Streamer popularity analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Load a dataset, check every invariant and print a summary.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Write the 24 raw features of one window as CSV.
    Features(FeaturesArgs),
    /// Run every configured experiment and write the report bundle.
    Analyze(AnalyzeArgs),
    /// Run the numerical self-checks against brute-force references.
    Oracle {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Window start month.
    #[arg(long)]
    pub t: u32,
    /// Window length in months.
    #[arg(long)]
    pub delta: u32,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => {
            let config = args.resolve()?;
            let ds = streampop::synth::generate(&config)?;
            save_dataset(&ds, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
            println!(
                "seed {} streamers {} months {} beta {} -> {}",
                config.seed,
                config.n_streamers,
                config.n_months,
                config.beta,
                args.out.display()
            );
        }
        Command::Validate { dataset } => {
            let ds = load_dataset(&dataset)?;
            let broadcasts: usize = ds.streamers().map(|s| s.broadcasts.len()).sum();
            let posts: usize = ds.streamers().map(|s| s.posts.len()).sum();
            let twitter = ds.streamers().filter(|s| s.has_account(Platform::Twitter)).count();
            println!(
                "ok: {} streamers, {} broadcasts, {} social posts, {} with a twitter account, at least {} months each",
                ds.len(),
                broadcasts,
                posts,
                twitter,
                ds.min_months()
            );
        }
        Command::Features(args) => {
            if args.delta == 0 {
                bail!("--delta must be at least 1");
            }
            let ds = load_dataset(&args.dataset)?;
            let rows = match &args.out {
                Some(path) => {
                    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
                    streampop::features::write_features_csv(&ds, args.t, args.delta, file)?
                }
                None => streampop::features::write_features_csv(&ds, args.t, args.delta, std::io::stdout().lock())?,
            };
            eprintln!("{rows} streamers written");
        }
        Command::Analyze(args) => {
            let config = RunConfig::resolve(&args)?;
            let report = report::analyze(&config)?;
            println!(
                "{} curves, leakage audit {}, {} files in {}",
                report.curves.len(),
                if report.audit.passed() { "passed" } else { "FAILED" },
                report.manifest.lines().count(),
                config.out.display()
            );
            if !report.audit.passed() {
                bail!("leakage audit failed; see leakage_audit.txt");
            }
        }
        Command::Oracle { seed } => {
            let checks = streampop::oracle::run_all(seed);
            for c in &checks {
                println!("{}", c.line());
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                bail!("{failed} oracle checks failed");
            }
        }
    }
    Ok(())
}
