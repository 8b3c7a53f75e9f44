use std::path::PathBuf;

use clap::Args;
use hwr_core::dataset::{
    downsample_to_8x8, load_mnist, seeded_subset, split, MnistPart, SMALL_LEVELS, SMALL_SIDE,
};
use hwr_core::knn::{odd_k_values, sweep_k};
use hwr_core::metrics::{confusion, format_report, report};
use hwr_core::{KnnModel, LabeledDataset, SplitMix64, SplitSpec};

use crate::common::{dataset_error, CliError, CliResult};

/// Test digits shown after the report.
const SHOWN_DIGITS: usize = 5;
const SHADES: &[u8] = b" .:-=+*#%@";

#[derive(Args, Debug)]
pub struct KnnEvalArgs {
    #[arg(long, default_value_os_t = crate::default_mnist_dir())]
    pub mnist_dir: PathBuf,
    /// Number of MNIST training digits to use, drawn by a seeded shuffle.
    #[arg(long, default_value_t = 1797)]
    pub limit: usize,
    /// Seed for sample selection, splitting and the displayed digits.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Largest k tried; every odd k from 1 up to it is evaluated.
    #[arg(long, default_value_t = 29)]
    pub k_max: usize,
}

/// 8×8 digit with values in `0..=16` drawn as text, two characters per pixel.
pub fn ascii_digit(pixels: &[f64]) -> String {
    let mut out = String::new();
    for row in pixels.chunks(SMALL_SIDE) {
        for &v in row {
            let level = (v.clamp(0.0, SMALL_LEVELS as f64) as usize * (SHADES.len() - 1))
                / SMALL_LEVELS as usize;
            let c = SHADES[level] as char;
            out.push(c);
            out.push(c);
        }
        out.push('\n');
    }
    out
}

pub fn run(args: &KnnEvalArgs) -> CliResult {
    let (images, labels) = load_mnist(&args.mnist_dir, MnistPart::Train)
        .map_err(|e| dataset_error(e, "MNIST training data"))?;
    let chosen = seeded_subset(images.len(), args.limit, args.seed);
    let small = chosen
        .iter()
        .map(|&i| downsample_to_8x8(&images[i]))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::domain(e, "cannot downsample digits"))?;
    let data = LabeledDataset::from_images(&small, chosen.iter().map(|&i| labels[i]).collect())
        .map_err(|e| CliError::domain(e, "cannot build dataset"))?;
    let spec = SplitSpec {
        seed: args.seed,
        ..SplitSpec::default()
    };
    let (train, val, test) =
        split(&data, &spec).map_err(|e| CliError::domain(e, "cannot split dataset"))?;
    println!("training data points: {}", train.len());
    println!("validation data points: {}", val.len());
    println!("testing data points: {}", test.len());

    let ks = odd_k_values(args.k_max);
    let sweep = sweep_k(&train, &val, &ks).map_err(|e| CliError::domain(e, "k sweep failed"))?;
    for &(k, acc) in &sweep.accuracies {
        println!("k={}, accuracy={:.2}%", k, acc * 100.0);
    }
    println!(
        "k={} achieved highest accuracy of {:.2}% on validation data",
        sweep.best_k,
        sweep.best_accuracy * 100.0
    );

    let model =
        KnnModel::fit(&train, sweep.best_k).map_err(|e| CliError::domain(e, "cannot fit KNN"))?;
    let pred = model
        .predict_all(test.features())
        .map_err(|e| CliError::domain(e, "prediction failed"))?;
    let r = report(
        &confusion(test.labels(), &pred)
            .map_err(|e| CliError::domain(e, "cannot tally predictions"))?,
    );
    println!("EVALUATION ON TESTING DATA");
    print!("{}", format_report(&r));

    let mut rng = SplitMix64::new(args.seed.wrapping_add(1));
    for _ in 0..SHOWN_DIGITS {
        let i = rng.next_below(test.len() as u64) as usize;
        println!();
        println!("I think that digit is: {}", pred[i]);
        print!("{}", ascii_digit(test.features().row(i)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_shades_span_levels() {
        let mut px = vec![0.0; 64];
        px[0] = 16.0;
        px[1] = 8.0;
        let text = ascii_digit(&px);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 8);
        assert!(lines.iter().all(|l| l.len() == 16));
        assert_eq!(&lines[0][..4], "@@==");
        assert_eq!(lines[7], " ".repeat(16));
    }
}
