//! `versor` command-line tool: self-tests, benchmarks, dataset generation,
//! training and evaluation.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "versor",
    version,
    about = "Clifford-algebra kernels, benchmarks and tasks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// RNG seed recorded in every output.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (stdout when omitted, where that makes sense).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional key=value settings file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ModelArgs {
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// rra | gpa-rra
    #[arg(long)]
    pub composition: Option<String>,
    /// compact | full
    #[arg(long)]
    pub generators: Option<String>,
    /// Disable manifold normalization of the recurrent state (ablation).
    #[arg(long)]
    pub no_normalize: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the invariant suite and print a JSON summary.
    Selftest {
        #[command(flatten)]
        common: Common,
        /// Corrupt one Cayley-table sign before checking (negative control).
        #[arg(long, hide = true)]
        corrupt_cayley: bool,
    },
    /// Time the three product engines; CSV output.
    BenchProduct {
        #[command(flatten)]
        common: Common,
        /// naive | bitmask | matrix-iso | all
        #[arg(long)]
        engine: Option<String>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Time streaming recurrence over several lengths; CSV output with the log-log slope.
    BenchRra {
        #[command(flatten)]
        common: Common,
        /// Comma-separated sequence lengths.
        #[arg(long)]
        lengths: Option<String>,
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Generate a dataset as JSON Lines.
    Gen {
        #[command(flatten)]
        common: Common,
        /// nbody | snake
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        trajectories: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        bodies: Option<usize>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Train the N-body model on a dataset and write a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Generate (if absent), train or load, and report task metrics as JSON.
    Eval {
        #[command(flatten)]
        common: Common,
        /// nbody | snake
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Evaluate this checkpoint instead of training.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        /// Rollout horizon.
        #[arg(long)]
        horizon: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Selftest {
            common,
            corrupt_cayley,
        } => commands::selftest(&common, corrupt_cayley),
        Command::BenchProduct {
            common,
            engine,
            batch,
            reps,
        } => commands::bench_product(&common, engine, batch, reps),
        Command::BenchRra {
            common,
            lengths,
            reps,
        } => commands::bench_rra(&common, lengths, reps),
        Command::Gen {
            common,
            task,
            trajectories,
            steps,
            bodies,
            grid,
            samples,
        } => commands::gen(
            &common,
            commands::GenArgs {
                task,
                trajectories,
                steps,
                bodies,
                grid,
                samples,
            },
        ),
        Command::Train {
            common,
            dataset,
            model,
        } => commands::train(&common, dataset, &model),
        Command::Eval {
            common,
            task,
            dataset,
            checkpoint,
            model,
            horizon,
        } => commands::eval(
            &common,
            commands::EvalArgs {
                task,
                dataset,
                checkpoint,
                horizon,
            },
            &model,
        ),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
