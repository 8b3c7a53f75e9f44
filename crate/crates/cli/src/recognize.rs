use std::path::{Path, PathBuf};

use clap::Args;
use hwr_core::imageproc::{
    connected_components, draw_annotations, extract_roi, gaussian_blur_5x5, threshold_inv,
    to_grayscale, DEFAULT_THRESHOLD,
};
use hwr_core::netpbm::{self, PnmImage};
use hwr_core::{BoundingBox, GrayImage, ModelBundle};
use serde::Serialize;

use crate::common::{model_load_error, CliError, CliResult};

#[derive(Args, Debug)]
pub struct RecognizeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Input image (PGM or PPM, ASCII or binary).
    #[arg(long)]
    pub image: PathBuf,
    /// Annotated output image (binary PPM).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write detections as a JSON array of {x, y, w, h, digit}.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Detection {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub digit: u8,
}

/// Dark digits on a light background: one detection per 8-connected ink
/// component, sorted by `(x, y)`.
pub fn detect(bundle: &ModelBundle, gray: &GrayImage) -> CliResult<Vec<Detection>> {
    let binary = threshold_inv(&gaussian_blur_5x5(gray), DEFAULT_THRESHOLD);
    connected_components(&binary)
        .into_iter()
        .map(|b: BoundingBox| {
            let roi = extract_roi(&binary, &b)
                .map_err(|e| CliError::domain(e, "cannot extract region"))?;
            let digit = bundle
                .predict_image(&roi)
                .map_err(|e| CliError::domain(e, "model does not fit the pipeline"))?;
            Ok(Detection {
                x: b.x,
                y: b.y,
                w: b.w,
                h: b.h,
                digit,
            })
        })
        .collect()
}

fn read_image(path: &Path) -> CliResult<PnmImage> {
    netpbm::read(path)
        .map_err(|e| CliError::input(e, format!("cannot read image {}", path.display())))
}

pub fn run(args: &RecognizeArgs) -> CliResult {
    let bundle = ModelBundle::load(&args.model).map_err(|e| model_load_error(e, &args.model))?;
    let pnm = read_image(&args.image)?;
    let rgb = pnm.to_rgb();
    let gray = match &pnm {
        PnmImage::Gray(g) => g.clone(),
        PnmImage::Rgb(c) => to_grayscale(c),
    };
    let found = detect(&bundle, &gray)?;
    let boxes: Vec<BoundingBox> = found
        .iter()
        .map(|d| BoundingBox::new(d.x, d.y, d.w, d.h))
        .collect();
    let digits: Vec<u8> = found.iter().map(|d| d.digit).collect();
    let annotated = draw_annotations(&rgb, &boxes, &digits)
        .map_err(|e| CliError::domain(e, "cannot annotate image"))?;
    netpbm::write_ppm(&args.out, &annotated)
        .map_err(|e| CliError::input(e, format!("cannot write {}", args.out.display())))?;
    if let Some(path) = &args.json {
        let text = serde_json::to_string(&found).expect("serializable detections");
        std::fs::write(path, text + "\n")
            .map_err(|e| CliError::input(e, format!("cannot write {}", path.display())))?;
    }
    println!("Detected {} digits", found.len());
    for d in &found {
        println!("x={} y={} w={} h={} digit={}", d.x, d.y, d.w, d.h, d.digit);
    }
    Ok(())
}
