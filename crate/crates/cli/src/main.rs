use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use poissonpr::RunStatus;
use poissonpr_cli::check::run_checks;
use poissonpr_cli::experiment::run_experiment;
use poissonpr_cli::suite::{run_suite, PRESETS};
use poissonpr_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "poissonpr", version, about = "Phase retrieval from low-count Poisson measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON configuration file; unset keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted-key override such as algorithm.kind=mm; may be repeated.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(self.config.as_deref(), &self.overrides)?;
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its trace, summary and estimate.
    Run {
        #[command(flatten)]
        common: Common,
        /// Seed for the instance, data and initialization.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a comparison preset over several seeds.
    Suite {
        /// One of fig5, fig6, fig8, twf.
        #[arg(value_parser = PRESETS)]
        preset: String,
        #[command(flatten)]
        common: Common,
        /// Seeds to aggregate over; may be repeated. Defaults to 0..9.
        #[arg(long = "seed", value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Run the invariant self-tests.
    Check,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { common, seed } => {
            let mut cfg = common.load()?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let a = run_experiment(&cfg)?;
            println!("trace: {}", a.trace.display());
            println!("summary: {}", a.summary.display());
            println!("estimate: {}", a.signal.display());
            if let Some(img) = &a.image {
                println!("image: {}", img.display());
            }
            if let RunStatus::Failed { at, reason } = a.status {
                return Err(CliError::Numerical(format!("solver failed at iteration {at}: {reason}")));
            }
            Ok(())
        }
        Command::Suite { preset, common, seeds } => {
            let cfg = common.load()?;
            let seeds = if seeds.is_empty() { (0..10).collect() } else { seeds };
            let a = run_suite(&preset, &seeds, &cfg)?;
            for t in &a.tables {
                println!("table: {}", t.display());
            }
            println!("comparison: {}", a.comparison.display());
            println!("summary: {}", a.summary.display());
            if a.failures > 0 {
                return Err(CliError::Numerical(format!("{} runs failed; see the summary", a.failures)));
            }
            Ok(())
        }
        Command::Check => {
            let results = run_checks();
            for r in &results {
                println!("[{}] {}: {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            match results.iter().filter(|r| !r.pass).count() {
                0 => Ok(()),
                n => Err(CliError::Numerical(format!("{n} self-tests failed"))),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
