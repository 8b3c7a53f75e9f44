use std::path::PathBuf;

use clap::Args;
use hwr_core::dataset::{load_mnist, MnistPart};
use hwr_core::metrics::{confusion, format_report, report, ClassReport};
use hwr_core::ModelBundle;
use rayon::prelude::*;
use serde::Serialize;

use crate::common::{dataset_error, hog_matrix, model_load_error, CliError, CliResult};

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_os_t = crate::default_mnist_dir())]
    pub mnist_dir: PathBuf,
    /// Number of test samples, taken from the start of the test set.
    #[arg(long, default_value_t = 2000)]
    pub limit: usize,
    /// Also write the report as JSON to this path.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Serialize)]
struct ClassJson {
    class: u8,
    precision: f64,
    recall: f64,
    f1: f64,
    support: u64,
}

#[derive(Serialize)]
struct ReportJson {
    accuracy: f64,
    total: u64,
    avg_precision: f64,
    avg_recall: f64,
    avg_f1: f64,
    classes: Vec<ClassJson>,
}

impl From<&ClassReport> for ReportJson {
    fn from(r: &ClassReport) -> Self {
        Self {
            accuracy: r.accuracy,
            total: r.total,
            avg_precision: r.avg_precision,
            avg_recall: r.avg_recall,
            avg_f1: r.avg_f1,
            classes: r
                .rows
                .iter()
                .map(|c| ClassJson {
                    class: c.class,
                    precision: c.precision,
                    recall: c.recall,
                    f1: c.f1,
                    support: c.support,
                })
                .collect(),
        }
    }
}

pub fn run(args: &EvaluateArgs) -> CliResult {
    let bundle = ModelBundle::load(&args.model).map_err(|e| model_load_error(e, &args.model))?;
    let (mut images, mut labels) = load_mnist(&args.mnist_dir, MnistPart::Test)
        .map_err(|e| dataset_error(e, "MNIST test data"))?;
    let n = if args.limit > images.len() {
        eprintln!(
            "warning: limit {} exceeds the {} test samples; using {}",
            args.limit,
            images.len(),
            images.len()
        );
        images.len()
    } else {
        args.limit
    };
    if n == 0 {
        return Err(CliError::domain_msg("no test samples to evaluate"));
    }
    images.truncate(n);
    labels.truncate(n);
    let raw = hog_matrix(&images, bundle.hog())
        .map_err(|e| CliError::domain(e, "feature extraction failed"))?;
    let pred: Vec<u8> = (0..raw.rows())
        .into_par_iter()
        .map(|i| bundle.predict_features(raw.row(i)))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::domain(e, "prediction failed"))?;
    let r = report(
        &confusion(&labels, &pred).map_err(|e| CliError::domain(e, "cannot tally predictions"))?,
    );
    println!("EVALUATION ON TESTING DATA");
    print!("{}", format_report(&r));
    println!();
    println!("Accuracy: {:.4} ({} samples)", r.accuracy, r.total);
    if let Some(path) = &args.json {
        let text =
            serde_json::to_string_pretty(&ReportJson::from(&r)).expect("serializable report");
        std::fs::write(path, text + "\n")
            .map_err(|e| CliError::input(e, format!("cannot write {}", path.display())))?;
    }
    Ok(())
}
