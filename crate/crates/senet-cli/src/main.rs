mod commands;
mod config;
mod report;

use clap::{Parser, Subcommand};

/// Shrinkage exemplar experiments: data generation, training, evaluation,
/// and the lambda-sweep, robustness, and scaling studies.
#[derive(Parser)]
#[command(name = "senet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset file.
    GenData(config::CommonArgs),
    /// Train a backbone; writes a model file and a loss-history CSV.
    Train(config::CommonArgs),
    /// Evaluate one predictor configuration; emits a single CSV row.
    Eval(config::CommonArgs),
    /// Evaluate a grid of lambda values for both variants on paired episodes.
    SweepLambda(config::CommonArgs),
    /// Compare exemplar, prototype, and shrinkage arms under added noise.
    Robustness(config::CommonArgs),
    /// Compare the three arms across ways and shots.
    Scaling(config::CommonArgs),
}

/// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
fn exit_code(err: &senet::SenetError) -> i32 {
    use senet::SenetError::*;
    match err {
        InvalidConfig(_) | Parse(_) | NegativeLambda(_) | LabelMisalignment(_)
        | LabelNotInEpisode(_) => 2,
        Io(_) | InsufficientSamples(_) | EmptyClass | DimensionMismatch { .. } => 3,
        NonFinite(_) | NoConvergence { .. } | Diverged { .. } | NonOrthonormalBasis(_) => 4,
    }
}

fn main() {
    if let Ok(threads) = std::env::var("SENET_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .ok();
            }
            _ => {
                eprintln!("error: SENET_THREADS must be a positive integer, got '{threads}'");
                std::process::exit(2);
            }
        }
    }

    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(args) => commands::gen_data(&args),
        Command::Train(args) => commands::train(&args),
        Command::Eval(args) => commands::eval(&args),
        Command::SweepLambda(args) => commands::sweep_lambda(&args),
        Command::Robustness(args) => commands::robustness(&args),
        Command::Scaling(args) => commands::scaling(&args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
