use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use hwr_core::dataset::{load_mnist, seeded_subset, MnistPart};
use hwr_core::model_io::{Classifier, ModelBundle};
use hwr_core::{mlp, svm, HogParams, MlpHyper, ScalerParams, SvmHyper, NUM_DIGITS};

use crate::common::{dataset_error, fraction_correct, hog_matrix, CliError, CliResult};
use crate::Kind;

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value = "svm")]
    pub kind: Kind,
    #[arg(long, default_value_os_t = crate::default_mnist_dir())]
    pub mnist_dir: PathBuf,
    /// Output model path.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of training samples, drawn by a seeded shuffle.
    #[arg(long, default_value_t = 10000)]
    pub limit: usize,
    /// Seed for sample selection and MLP weight initialization.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// SVM misclassification penalty.
    #[arg(long)]
    pub c: Option<f64>,
    /// MLP L2 penalty.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// MLP hidden layer sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

pub fn run(args: &TrainArgs) -> CliResult {
    let (images, labels) = load_mnist(&args.mnist_dir, MnistPart::Train)
        .map_err(|e| dataset_error(e, "MNIST training data"))?;
    let chosen = seeded_subset(images.len(), args.limit, args.seed);
    let images: Vec<_> = chosen.iter().map(|&i| images[i].clone()).collect();
    let labels: Vec<u8> = chosen.iter().map(|&i| labels[i]).collect();

    let mut counts = [0usize; NUM_DIGITS];
    for &l in &labels {
        counts[l as usize] += 1;
    }
    let shown: Vec<String> = counts
        .iter()
        .enumerate()
        .map(|(d, n)| format!("{d}: {n}"))
        .collect();
    println!("Count of digits in dataset {{{}}}", shown.join(", "));

    let hog_params = HogParams::default();
    let raw = hog_matrix(&images, &hog_params)
        .map_err(|e| CliError::domain(e, "feature extraction failed"))?;
    let scaler = ScalerParams::fit(&raw).map_err(|e| CliError::domain(e, "cannot fit scaler"))?;
    let x = scaler
        .transform(&raw)
        .map_err(|e| CliError::domain(e, "cannot scale features"))?;

    let mut meta = BTreeMap::new();
    meta.insert("kind".to_owned(), format!("{:?}", args.kind).to_lowercase());
    meta.insert("limit".to_owned(), args.limit.to_string());
    meta.insert("samples".to_owned(), labels.len().to_string());
    meta.insert("seed".to_owned(), args.seed.to_string());
    meta.insert("trainer".to_owned(), "gd-armijo".to_owned());

    let classifier = match args.kind {
        Kind::Svm => {
            let d = SvmHyper::default();
            let hyper = SvmHyper {
                c: args.c.unwrap_or(d.c),
                tol: args.tol.unwrap_or(d.tol),
                max_iter: args.max_iter.unwrap_or(d.max_iter),
            };
            meta.insert("c".to_owned(), hyper.c.to_string());
            meta.insert("tol".to_owned(), hyper.tol.to_string());
            meta.insert("max_iter".to_owned(), hyper.max_iter.to_string());
            Classifier::Svm(
                svm::train(&x, &labels, &hyper)
                    .map_err(|e| CliError::domain(e, "SVM training failed"))?,
            )
        }
        Kind::Mlp => {
            let d = MlpHyper::default();
            let hyper = MlpHyper {
                hidden_sizes: args.hidden.clone().unwrap_or(d.hidden_sizes),
                alpha: args.alpha.unwrap_or(d.alpha),
                seed: args.seed,
                tol: args.tol.unwrap_or(d.tol),
                max_iter: args.max_iter.unwrap_or(d.max_iter),
            };
            meta.insert("alpha".to_owned(), hyper.alpha.to_string());
            meta.insert("hidden".to_owned(), join(&hyper.hidden_sizes));
            meta.insert("tol".to_owned(), hyper.tol.to_string());
            meta.insert("max_iter".to_owned(), hyper.max_iter.to_string());
            let fit = mlp::train_with_report(&x, &labels, &hyper)
                .map_err(|e| CliError::domain(e, "MLP training failed"))?;
            meta.insert("iterations".to_owned(), fit.report.iterations.to_string());
            Classifier::Mlp(fit.model)
        }
    };

    let pred: Vec<u8> = x
        .iter_rows()
        .map(|row| classifier.predict(row))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::domain(e, "prediction failed"))?;
    let acc = fraction_correct(&pred, &labels);
    println!("Training accuracy: {:.4}", acc);

    let bundle = ModelBundle::new(scaler, classifier, hog_params, meta)
        .map_err(|e| CliError::domain(e, "inconsistent model"))?;
    bundle
        .save(&args.out)
        .map_err(|e| CliError::input(e, format!("cannot write {}", args.out.display())))?;
    println!("Saved {} model to {}", bundle.kind(), args.out.display());
    Ok(())
}
