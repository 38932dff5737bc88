//! `dpens`: file-composable stages for private synthetic-data ensembles.
//!
//! Exit codes: 0 success, 2 privacy accounting refused, 64 usage, 65 bad
//! data or config, 66 missing input, 74 I/O failure.

mod artifacts;
mod commands;
mod error;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::{AccountArgs, BenchArgs, DiscretizeArgs, EvalArgs, SynthArgs, TrainArgs};
use error::{exit, CliError, CliResult};

#[derive(Parser)]
#[command(name = "dpens", version, about = "Differentially private synthetic-data ensembles")]
struct Cli {
    /// Seed for every random choice; overrides the seed in config files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-run budget for a k-run plan, verified by composing it back.
    Account {
        #[arg(long, visible_alias = "total-eps", required_unless_present = "ledger")]
        eps: Option<f64>,
        #[arg(long, visible_alias = "total-delta", default_value_t = 1e-6)]
        delta: f64,
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Poisson sampling rate of each run.
        #[arg(long)]
        p: Option<f64>,
        /// Certify the ledger embedded in an artifact instead.
        #[arg(long, conflicts_with_all = ["eps", "k", "p"])]
        ledger: Option<PathBuf>,
    },
    /// Privately discretize a CSV into an ordinal dataset.
    Discretize {
        #[arg(long)]
        input: PathBuf,
        /// Column schema JSON.
        #[arg(long)]
        schema: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long, short)]
        output: PathBuf,
        /// Hold out a stratified test split of this fraction.
        #[arg(long, requires = "test_output")]
        test_fraction: Option<f64>,
        #[arg(long, requires = "test_fraction")]
        test_output: Option<PathBuf>,
        /// Skip all noise. The output is marked NOT-PRIVATE.
        #[arg(long)]
        noise_disabled_test_mode: bool,
    },
    /// Run the mechanism stage of a synthesis plan.
    Synth {
        /// Synthesis plan JSON.
        #[arg(long)]
        config: PathBuf,
        /// Real dataset: a `discretize` artifact or a bare dataset JSON.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        /// Skip all noise. The output is marked NOT-PRIVATE.
        #[arg(long)]
        noise_disabled_test_mode: bool,
    },
    /// Train the plan's models on a `synth` artifact.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Accuracy and calibration of a trained ensemble on real test data.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = dpens::eval::DEFAULT_ECE_BINS)]
        bins: usize,
        /// Report path; stdout when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Evaluate models whose ledger is missing or does not certify.
        #[arg(long)]
        allow_uncertified: bool,
    },
    /// Run a benchmark config, writing results.csv and summary.json.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::new(exit::IO, format!("thread pool: {e}")))?;
    }
    let seed = cli.seed;
    match cli.command {
        Command::Account { eps, delta, k, p, ledger } => commands::account(AccountArgs { eps, delta, k, p, ledger }),
        Command::Discretize { input, schema, eps, output, test_fraction, test_output, noise_disabled_test_mode } => {
            commands::discretize(DiscretizeArgs {
                input,
                schema,
                eps,
                output,
                test_fraction,
                test_output,
                noise_disabled_test_mode,
                seed: seed.unwrap_or(0),
            })
        }
        Command::Synth { config, input, output, noise_disabled_test_mode } => {
            commands::synth(SynthArgs { config, input, output, noise_disabled_test_mode, seed })
        }
        Command::Train { input, output } => commands::train(TrainArgs { input, output, seed }),
        Command::Eval { model, test, bins, output, allow_uncertified } => {
            commands::eval(EvalArgs { model, test, bins, output, allow_uncertified })
        }
        Command::Bench { config, out_dir } => commands::bench(BenchArgs { config, out_dir, seed }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => exit::OK,
                _ => exit::USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
