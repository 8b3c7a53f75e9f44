use std::fmt;

use anyhow::anyhow;
use hwr_core::dataset::DatasetError;
use hwr_core::features::{hog, FeatureError, HogParams};
use hwr_core::model_io::ModelIoError;
use hwr_core::{GrayImage, Matrix};
use rayon::prelude::*;

/// Failure split by exit status: 1 for unreadable or malformed input, 2 for
/// errors in the modelling domain.
#[derive(Debug)]
pub enum CliError {
    Input(anyhow::Error),
    Domain(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Domain(_) => 2,
        }
    }

    pub fn input(e: impl Into<anyhow::Error>, context: impl fmt::Display) -> Self {
        CliError::Input(e.into().context(context.to_string()))
    }

    pub fn domain(e: impl Into<anyhow::Error>, context: impl fmt::Display) -> Self {
        CliError::Domain(e.into().context(context.to_string()))
    }

    pub fn domain_msg(msg: impl fmt::Display) -> Self {
        CliError::Domain(anyhow!("{msg}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(e) | CliError::Domain(e) => write!(f, "{e:#}"),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub fn dataset_error(e: DatasetError, what: &str) -> CliError {
    CliError::input(e, format!("cannot load {what}"))
}

/// I/O failures are input errors; a readable file that does not hold a
/// usable model is a domain error.
pub fn model_load_error(e: ModelIoError, path: &std::path::Path) -> CliError {
    let context = format!("cannot load model {}", path.display());
    match e {
        ModelIoError::Io(_) => CliError::input(e, context),
        other => CliError::domain(other, context),
    }
}

/// HOG descriptors of all images, one row each. Rows are computed
/// independently, so the result does not depend on thread count.
pub fn hog_matrix(images: &[GrayImage], params: &HogParams) -> Result<Matrix, FeatureError> {
    let rows: Vec<Vec<f64>> = images
        .par_iter()
        .map(|img| hog(img, params))
        .collect::<Result<_, _>>()?;
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, params.output_len(28, 28)));
    }
    Ok(Matrix::from_rows(rows))
}

pub fn fraction_correct(pred: &[u8], truth: &[u8]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len().max(1) as f64
}
