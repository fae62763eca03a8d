use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use surqnn::commands::{
    cmd_eval, cmd_gradcheck, cmd_train, cmd_verify, load_config, DataSplit, EvalArgs, Overrides, TrainArgs, VerifyArgs,
};
use surqnn::config::Backend;
use surqnn::CliResult;

/// Surrogate-trained hybrid quantum classifier on a simulated circuit.
#[derive(Parser)]
#[command(name = "surqnn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Threads for batched circuit evaluation.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Surrogate,
    Direct,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Kraus completeness, factorization and non-unitarity checks.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Perturb every extracted Kraus set (negative test of the report).
        #[arg(long)]
        corrupt_kraus: bool,
    },
    /// Parameter-shift against central differences for every angle.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "runs/gradcheck")]
        out: PathBuf,
        /// Finite-difference step.
        #[arg(long)]
        h: Option<f64>,
    },
    /// Train the classifier; writes manifest, metrics and checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        /// Output directory; defaults to runs/<backend>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from a checkpoint written under the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop once this many epochs are complete.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Accuracy, loss and confusion matrix of a checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Directory for eval.jsonl; defaults to the checkpoint's directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        /// Exit 1 when accuracy falls below this value.
        #[arg(long)]
        min_accuracy: Option<f64>,
    },
}

fn overrides(common: &Common, backend: Option<BackendArg>, h: Option<f64>) -> Overrides {
    Overrides {
        seed: common.seed,
        workers: common.workers,
        backend: backend.map(|b| match b {
            BackendArg::Surrogate => Backend::Surrogate,
            BackendArg::Direct => Backend::Direct,
        }),
        h,
    }
}

fn run(cli: Cli) -> CliResult<bool> {
    match cli.command {
        Command::Verify {
            common,
            out,
            corrupt_kraus,
        } => {
            let lc = load_config(&common.config, &overrides(&common, None, None))?;
            cmd_verify(&lc, &VerifyArgs { out, corrupt_kraus })
        }
        Command::Gradcheck { common, out, h } => {
            let lc = load_config(&common.config, &overrides(&common, None, h))?;
            cmd_gradcheck(&lc, &out)
        }
        Command::Train {
            common,
            backend,
            out,
            resume,
            stop_after,
        } => {
            let lc = load_config(&common.config, &overrides(&common, backend, None))?;
            let out = out.unwrap_or_else(|| PathBuf::from("runs").join(lc.config.train.backend.as_str()));
            cmd_train(
                &lc,
                &TrainArgs {
                    out,
                    resume,
                    stop_after,
                },
            )
        }
        Command::Eval {
            common,
            checkpoint,
            split,
            out,
            backend,
            min_accuracy,
        } => {
            let lc = load_config(&common.config, &overrides(&common, backend, None))?;
            let split = match split {
                SplitArg::Train => DataSplit::Train,
                SplitArg::Test => DataSplit::Test,
            };
            cmd_eval(
                &lc,
                &EvalArgs {
                    checkpoint,
                    split,
                    out,
                    min_accuracy,
                },
            )
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
