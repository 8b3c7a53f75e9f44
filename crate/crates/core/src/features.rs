//! HOG descriptor and per-feature standardization.
//!
//! With the default parameters a 28×28 digit is split into four 14×14 cells,
//! each described by a 9-bin histogram of unsigned gradient orientations:
//! 4 × 9 = 36 features.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::image::GrayImage;
use crate::matrix::Matrix;

/// Stabilizer added to block norms.
pub const NORM_EPS: f64 = 1e-10;
/// Clipping level of the L2-Hys scheme.
pub const L2HYS_CLIP: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("image {width}x{height} is not divisible into {cell}-pixel cells")]
    WrongDimensions {
        width: usize,
        height: usize,
        cell: usize,
    },
    #[error("invalid HOG parameters: {0}")]
    InvalidParams(String),
    #[error("cannot fit a scaler on an empty matrix")]
    EmptyMatrix,
    #[error("expected {expected} columns, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("unknown block norm {0:?}")]
    UnknownNorm(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BlockNorm {
    None,
    L1,
    L2,
    #[default]
    L2Hys,
}

impl fmt::Display for BlockNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockNorm::None => "none",
            BlockNorm::L1 => "l1",
            BlockNorm::L2 => "l2",
            BlockNorm::L2Hys => "l2hys",
        })
    }
}

impl FromStr for BlockNorm {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(BlockNorm::None),
            "l1" => Ok(BlockNorm::L1),
            "l2" => Ok(BlockNorm::L2),
            "l2hys" => Ok(BlockNorm::L2Hys),
            other => Err(FeatureError::UnknownNorm(other.to_owned())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HogParams {
    pub orientations: usize,
    /// Cell side in pixels.
    pub cell_side: usize,
    /// Block side in cells. Blocks slide one cell at a time.
    pub block_cells: usize,
    pub block_norm: BlockNorm,
}

impl Default for HogParams {
    fn default() -> Self {
        Self {
            orientations: 9,
            cell_side: 14,
            block_cells: 1,
            block_norm: BlockNorm::L2Hys,
        }
    }
}

impl HogParams {
    fn validate(&self) -> Result<(), FeatureError> {
        if self.orientations == 0 || self.cell_side == 0 || self.block_cells == 0 {
            return Err(FeatureError::InvalidParams(
                "orientations, cell side and block size must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Descriptor length for a `width × height` image.
    pub fn output_len(&self, width: usize, height: usize) -> usize {
        let (cx, cy) = (width / self.cell_side, height / self.cell_side);
        let bx = (cx + 1).saturating_sub(self.block_cells);
        let by = (cy + 1).saturating_sub(self.block_cells);
        bx * by * self.block_cells * self.block_cells * self.orientations
    }
}

/// Normalizes one block in place.
pub fn normalize_block(block: &mut [f64], norm: BlockNorm) {
    let l2 = |b: &[f64]| b.iter().map(|v| v * v).sum::<f64>().sqrt();
    match norm {
        BlockNorm::None => {}
        BlockNorm::L1 => {
            let s = block.iter().map(|v| v.abs()).sum::<f64>() + NORM_EPS;
            block.iter_mut().for_each(|v| *v /= s);
        }
        BlockNorm::L2 => {
            let s = l2(block) + NORM_EPS;
            block.iter_mut().for_each(|v| *v /= s);
        }
        BlockNorm::L2Hys => {
            let s = l2(block) + NORM_EPS;
            block.iter_mut().for_each(|v| *v = (*v / s).min(L2HYS_CLIP));
            let s = l2(block) + NORM_EPS;
            block.iter_mut().for_each(|v| *v /= s);
        }
    }
}

/// Per-cell orientation histograms, `cells_y × cells_x × orientations`,
/// each bin averaged over the cell's pixel count.
pub fn cell_histograms(img: &GrayImage, params: &HogParams) -> Result<Vec<f64>, FeatureError> {
    params.validate()?;
    let (w, h, cell) = (img.width(), img.height(), params.cell_side);
    if w % cell != 0 || h % cell != 0 {
        return Err(FeatureError::WrongDimensions {
            width: w,
            height: h,
            cell,
        });
    }
    let px: Vec<f64> = img.pixels().iter().map(|&p| p as f64).collect();
    let (cells_x, cells_y) = (w / cell, h / cell);
    let bins = params.orientations;
    let bin_width = 180.0 / bins as f64;
    let mut hist = vec![0.0; cells_x * cells_y * bins];

    for r in 0..h {
        for c in 0..w {
            let g_row = if r == 0 || r == h - 1 {
                0.0
            } else {
                px[(r + 1) * w + c] - px[(r - 1) * w + c]
            };
            let g_col = if c == 0 || c == w - 1 {
                0.0
            } else {
                px[r * w + c + 1] - px[r * w + c - 1]
            };
            let magnitude = g_row.hypot(g_col);
            let orientation = g_row.atan2(g_col).to_degrees().rem_euclid(180.0);
            let bin = ((orientation / bin_width).floor() as usize) % bins;
            hist[((r / cell) * cells_x + c / cell) * bins + bin] += magnitude;
        }
    }
    let area = (cell * cell) as f64;
    hist.iter_mut().for_each(|v| *v /= area);
    Ok(hist)
}

/// HOG descriptor: cell histograms grouped into sliding blocks, each block
/// normalized, concatenated in row-major block order.
pub fn hog(img: &GrayImage, params: &HogParams) -> Result<Vec<f64>, FeatureError> {
    let hist = cell_histograms(img, params)?;
    let (cells_x, cells_y) = (
        img.width() / params.cell_side,
        img.height() / params.cell_side,
    );
    let (bins, b) = (params.orientations, params.block_cells);
    let mut out = Vec::with_capacity(params.output_len(img.width(), img.height()));
    if cells_x < b || cells_y < b {
        return Ok(out);
    }
    for by in 0..=cells_y - b {
        for bx in 0..=cells_x - b {
            let start = out.len();
            for cy in by..by + b {
                for cx in bx..bx + b {
                    let i = (cy * cells_x + cx) * bins;
                    out.extend_from_slice(&hist[i..i + bins]);
                }
            }
            normalize_block(&mut out[start..], params.block_norm);
        }
    }
    Ok(out)
}

/// Column means and population standard deviations.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalerParams {
    pub means: Vec<f64>,
    /// Strictly positive; zero-variance columns hold 1.
    pub stds: Vec<f64>,
}

impl ScalerParams {
    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// Fits means and population standard deviations (Welford's update).
    pub fn fit(features: &Matrix) -> Result<Self, FeatureError> {
        if features.rows() == 0 {
            return Err(FeatureError::EmptyMatrix);
        }
        let d = features.cols();
        let mut means = vec![0.0; d];
        let mut m2 = vec![0.0; d];
        for (k, row) in features.iter_rows().enumerate() {
            let count = (k + 1) as f64;
            for j in 0..d {
                let delta = row[j] - means[j];
                means[j] += delta / count;
                m2[j] += delta * (row[j] - means[j]);
            }
        }
        let n = features.rows() as f64;
        let stds = m2
            .iter()
            .map(|&s| {
                let sd = (s / n).sqrt();
                if sd == 0.0 {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self { means, stds })
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if row.len() != self.dim() {
            return Err(FeatureError::DimensionMismatch {
                expected: self.dim(),
                actual: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }

    pub fn transform(&self, features: &Matrix) -> Result<Matrix, FeatureError> {
        if features.cols() != self.dim() {
            return Err(FeatureError::DimensionMismatch {
                expected: self.dim(),
                actual: features.cols(),
            });
        }
        let mut out = features.clone();
        for i in 0..out.rows() {
            let t = self.transform_row(features.row(i))?;
            out.row_mut(i).copy_from_slice(&t);
        }
        Ok(out)
    }
}
