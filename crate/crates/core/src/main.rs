use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tempered_zigzag::harness::{cmd_calibrate, cmd_experiment, cmd_run, load_config, StudyOverrides};
use tempered_zigzag::Result;

/// Continuously-tempered Zig-Zag sampler.
#[derive(Parser, Debug)]
#[command(name = "tzz", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the replicate count in the config.
    #[arg(long)]
    replicates: Option<usize>,
    /// Worker threads for replicates (0 = one per core).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a configured sampler and write the skeleton CSV and summary JSON.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fit kappa from a pilot run and write it as JSON.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a replicate study: mixture, spikeslab or boltzmann.
    Experiment {
        name: String,
        /// JSON file overriding study settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, common } => {
            let mut cfg = load_config(&config)?;
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            cfg.replicates = common.replicates.unwrap_or(cfg.replicates);
            cfg.validate()?;
            let summaries = cmd_run(&cfg, &common.out, common.threads)?;
            for s in summaries {
                eprintln!(
                    "replicate {}: {} events, occupancy {:.4}, thinning efficiency {:.4}",
                    s.replicate, s.events, s.beta_occupancy, s.thinning_efficiency
                );
            }
        }
        Command::Calibrate { config, common } => {
            let mut cfg = load_config(&config)?;
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            let report = cmd_calibrate(&cfg, &common.out)?;
            eprintln!("psi = {:?}", report.psi);
        }
        Command::Experiment {
            name,
            config,
            common,
        } => {
            let text = config.map(std::fs::read_to_string).transpose()?;
            let overrides = StudyOverrides {
                seed: common.seed,
                replicates: common.replicates,
            };
            cmd_experiment(&name, text.as_deref(), overrides, &common.out, common.threads)?;
            eprintln!("wrote {}", common.out.join(format!("{name}_report.json")).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
