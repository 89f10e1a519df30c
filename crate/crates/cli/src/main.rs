//! `memeguard`: data generation, splitting, annotation, training,
//! evaluation, reward-weight sweeps, agreement analysis and reporting.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "memeguard",
    version,
    about = "Reasoning-aligned harmful meme detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnnotateMode {
    /// Attach rule-derived chain-of-thought annotations to every record.
    Oracle,
    /// Write a ratings matrix from noisy mock annotators.
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepAxis {
    /// gamma in {0.2, 0.4, 0.6, 0.8, 1.0}, alpha:beta = 3:5.
    Gamma,
    /// alpha:beta in {1:7, 3:5, 1:1, 5:3, 7:1}, gamma = 0.6.
    AlphaBeta,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic meme dataset.
    GenData {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Task rules (TOML); built-in rules when omitted.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified train/test split.
    Split {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        ratio: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Defaults to `<input stem>.train.jsonl` next to the input.
        #[arg(long)]
        train_out: Option<PathBuf>,
        /// Defaults to `<input stem>.test.jsonl` next to the input.
        #[arg(long)]
        test_out: Option<PathBuf>,
    },
    /// Annotate a dataset with the oracle or with mock annotators.
    Annotate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = AnnotateMode::Oracle)]
        mode: AnnotateMode,
        #[arg(long, default_value_t = 3)]
        annotators: usize,
        #[arg(long, default_value_t = 0.05)]
        error_rate: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Dataset (oracle) or ratings CSV (mock).
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-verify mock annotations and report the consistency rate.
    Verify {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 3)]
        annotators: usize,
        #[arg(long, default_value_t = 0.05)]
        error_rate: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Write the dataset with verified annotations.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the selected training stages.
    Train {
        #[arg(long, env = "MEMEGUARD_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long)]
        train: PathBuf,
        /// Evaluated after training into `<out-dir>/eval.json`.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Comma-separated subset of 1,2,3; overrides the config stage flags.
        #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u8).range(1..=3))]
        stages: Option<Vec<u8>>,
        #[arg(long)]
        label_only: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from a checkpoint instead of a fresh initialisation.
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Record every stage-3 rollout to `rollouts.jsonl`.
        #[arg(long)]
        log_rollouts: bool,
    },
    /// Evaluate a checkpoint on a labelled dataset.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, env = "MEMEGUARD_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long)]
        label_only: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stage-3 reward-weight sweep from a stage-2 checkpoint.
    Sweep {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_enum, default_value_t = SweepAxis::Gamma)]
        axis: SweepAxis,
        #[arg(long, env = "MEMEGUARD_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fleiss' kappa of a ratings CSV (`item,rater_1,...,rater_k`).
    Kappa {
        #[arg(long)]
        ratings: PathBuf,
    },
    /// Collect evaluation reports and sweeps into comparison tables.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
        /// Defaults to the run directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
