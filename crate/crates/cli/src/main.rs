//! `hwr`: train, evaluate and apply handwritten digit classifiers.

mod common;
mod evaluate;
mod knn_eval;
mod recognize;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "hwr",
    version,
    about = "Handwritten digit recognition with HOG features and SVM, MLP or KNN classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Svm,
    Mlp,
}

#[derive(Subcommand)]
enum Command {
    /// Train an SVM or MLP on HOG features of MNIST training digits and save an HWR1 model.
    Train(train::TrainArgs),
    /// Run the k-nearest-neighbor experiment on 8×8 downsampled MNIST digits.
    KnnEval(knn_eval::KnnEvalArgs),
    /// Report accuracy of a saved model on the MNIST test digits.
    Evaluate(evaluate::EvaluateArgs),
    /// Detect and classify digits in a Netpbm image.
    Recognize(recognize::RecognizeArgs),
}

/// Directory holding the four MNIST IDX files.
pub fn default_mnist_dir() -> PathBuf {
    PathBuf::from("data/mnist")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train::run(&a),
        Command::KnnEval(a) => knn_eval::run(&a),
        Command::Evaluate(a) => evaluate::run(&a),
        Command::Recognize(a) => recognize::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
