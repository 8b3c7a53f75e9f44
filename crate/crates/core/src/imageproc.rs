//! Preprocessing and segmentation: grayscale conversion, 5×5 Gaussian blur,
//! inverse threshold, 8-connected component boxes, digit ROI extraction and
//! annotation drawing.
//!
//! Every operation that produces bytes rounds half-up.

use std::collections::VecDeque;

use crate::font;
use crate::image::{BinaryImage, BoundingBox, GrayImage, ImageError, RgbImage};

/// Side length of the classifier input.
pub const ROI_SIDE: usize = 28;
/// Default inverse-threshold level.
pub const DEFAULT_THRESHOLD: u8 = 90;
/// Gaussian σ that a 5-tap kernel gets when σ is derived from the kernel size:
/// 0.3·((5 − 1)·0.5 − 1) + 0.8.
pub const BLUR_SIGMA: f64 = 1.1;

pub const BOX_COLOR: [u8; 3] = [0, 255, 0];
pub const LABEL_COLOR: [u8; 3] = [255, 255, 0];
pub const OUTLINE_THICKNESS: usize = 3;
pub const GLYPH_SCALE: usize = 4;

fn round_half_up(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// ITU-R BT.601 luma, `round(0.299 R + 0.587 G + 0.114 B)`, computed in integers.
pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    let pixels = img
        .pixels()
        .chunks_exact(3)
        .map(|p| {
            let weighted = 299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32;
            ((weighted + 500) / 1000) as u8
        })
        .collect();
    GrayImage::new(img.width(), img.height(), pixels).expect("same dimensions")
}

/// The normalized 5-tap Gaussian kernel for `sigma`, indexed −2..=2.
pub fn gaussian_taps(sigma: f64) -> [f64; 5] {
    let mut taps = [0.0; 5];
    for (k, t) in taps.iter_mut().enumerate() {
        let i = k as f64 - 2.0;
        *t = (-(i * i) / (2.0 * sigma * sigma)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Reflect-101 border index: …, 2, 1, | 0, 1, 2, …, n−1 |, n−2, …
pub fn reflect101(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as i64 {
        m = period - m;
    }
    m as usize
}

// Symmetric taps are applied to mirrored pairs so that blurring a mirrored
// image is bitwise the mirror of the blurred image.
fn convolve_line(taps: &[f64; 5], sample: impl Fn(i64) -> f64, i: i64) -> f64 {
    taps[2] * sample(i)
        + taps[1] * (sample(i - 1) + sample(i + 1))
        + taps[0] * (sample(i - 2) + sample(i + 2))
}

/// Separable 5×5 Gaussian blur (σ = 1.1) with reflect-101 borders.
pub fn gaussian_blur_5x5(img: &GrayImage) -> GrayImage {
    let taps = gaussian_taps(BLUR_SIGMA);
    let (w, h) = (img.width(), img.height());
    let mut horiz = vec![0.0f64; w * h];
    for y in 0..h {
        let row = &img.pixels()[y * w..(y + 1) * w];
        for x in 0..w {
            horiz[y * w + x] = convolve_line(&taps, |i| row[reflect101(i, w)] as f64, x as i64);
        }
    }
    GrayImage::from_fn(w, h, |x, y| {
        let v = convolve_line(&taps, |i| horiz[reflect101(i, h) * w + x], y as i64);
        round_half_up(v)
    })
}

/// Inverse binary threshold: 255 where `pixel <= thresh`, else 0.
pub fn threshold_inv(img: &GrayImage, thresh: u8) -> BinaryImage {
    BinaryImage::from_fn(img.width(), img.height(), |x, y| img.get(x, y) <= thresh)
}

/// Tight bounding boxes of the 8-connected foreground components, sorted by `(x, y)`.
pub fn connected_components(img: &BinaryImage) -> Vec<BoundingBox> {
    let (w, h) = (img.width(), img.height());
    let mut seen = vec![false; w * h];
    let mut boxes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if seen[start] || img.pixels()[start] != BinaryImage::FOREGROUND {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(p) = queue.pop_front() {
            let (x, y) = (p % w, p / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let q = ny * w + nx;
                    if !seen[q] && img.pixels()[q] == BinaryImage::FOREGROUND {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        boxes.push(BoundingBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1));
    }
    boxes.sort_by_key(|b| (b.x, b.y, b.w, b.h));
    boxes
}

// Overlap weights of output cells over source cells, in units of
// 1/(out_len) source pixels so that all weights are integers.
fn area_weights(in_len: usize, out_len: usize) -> Vec<Vec<(usize, u64)>> {
    (0..out_len)
        .map(|o| {
            let (lo, hi) = ((o * in_len) as u64, ((o + 1) * in_len) as u64);
            let first = (lo / out_len as u64) as usize;
            let last = (((hi - 1) / out_len as u64) as usize).min(in_len - 1);
            (first..=last)
                .filter_map(|i| {
                    let (s, e) = ((i * out_len) as u64, ((i + 1) * out_len) as u64);
                    let overlap = hi.min(e).saturating_sub(lo.max(s));
                    (overlap > 0).then_some((i, overlap))
                })
                .collect()
        })
        .collect()
}

/// Area-average resampling: every output pixel is the coverage-weighted mean of
/// the source rectangle it maps onto. Computed in exact integer arithmetic.
pub fn resize_area(img: &GrayImage, out_w: usize, out_h: usize) -> GrayImage {
    assert!(
        out_w >= 1 && out_h >= 1,
        "output dimensions must be positive"
    );
    let wx = area_weights(img.width(), out_w);
    let wy = area_weights(img.height(), out_h);
    let den = (img.width() * img.height()) as u64;
    GrayImage::from_fn(out_w, out_h, |ox, oy| {
        let mut num: u64 = 0;
        for &(sy, ky) in &wy[oy] {
            let row: u64 = wx[ox]
                .iter()
                .map(|&(sx, kx)| kx * img.get(sx, sy) as u64)
                .sum();
            num += ky * row;
        }
        ((2 * num + den) / (2 * den)) as u8
    })
}

/// 3×3 max filter; neighbors outside the image are ignored.
pub fn dilate3x3(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    GrayImage::from_fn(w, h, |x, y| {
        let mut m = 0;
        for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
            for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                m = m.max(img.get(nx, ny));
            }
        }
        m
    })
}

/// Side of the square window cut around a box of height `h`: ⌊1.6·h⌋.
pub fn roi_side(h: usize) -> usize {
    h * 16 / 10
}

/// Top-left corner `(x, y)` of the square ROI window for `bbox`, which may lie
/// outside the image.
pub fn roi_origin(bbox: &BoundingBox) -> (i64, i64) {
    let side = roi_side(bbox.h) as i64;
    (
        bbox.x as i64 + bbox.w as i64 / 2 - side / 2,
        bbox.y as i64 + bbox.h as i64 / 2 - side / 2,
    )
}

/// Cuts the square window of side ⌊1.6·h⌋ centred on the box (zero outside the
/// image), resizes it to 28×28 by area averaging and dilates it with a 3×3 max.
pub fn extract_roi(img: &BinaryImage, bbox: &BoundingBox) -> Result<GrayImage, ImageError> {
    let side = roi_side(bbox.h);
    if side == 0 {
        return Err(ImageError::DegenerateRoi);
    }
    let (x0, y0) = roi_origin(bbox);
    let window = GrayImage::from_fn(side, side, |x, y| {
        img.get_padded(x0 + x as i64, y0 + y as i64)
    });
    Ok(dilate3x3(&resize_area(&window, ROI_SIDE, ROI_SIDE)))
}

/// Pixels of the 3-pixel outline drawn immediately outside `bbox`.
fn outline_pixels(bbox: &BoundingBox) -> impl Iterator<Item = (i64, i64)> {
    let t = OUTLINE_THICKNESS as i64;
    let (x0, y0) = (bbox.x as i64, bbox.y as i64);
    let (x1, y1) = (x0 + bbox.w as i64 - 1, y0 + bbox.h as i64 - 1);
    (y0 - t..=y1 + t).flat_map(move |y| {
        (x0 - t..=x1 + t)
            .filter(move |&x| !(x >= x0 && x <= x1 && y >= y0 && y <= y1))
            .map(move |x| (x, y))
    })
}

/// Pixels of the scaled digit glyph whose bottom-left sits just above the outline.
fn glyph_pixels(bbox: &BoundingBox, digit: u8) -> impl Iterator<Item = (i64, i64)> {
    let s = GLYPH_SCALE;
    let left = bbox.x as i64;
    let top = bbox.y as i64 - OUTLINE_THICKNESS as i64 - 1 - (font::GLYPH_HEIGHT * s) as i64;
    (0..font::GLYPH_HEIGHT * s).flat_map(move |gy| {
        (0..font::GLYPH_WIDTH * s)
            .filter(move |&gx| font::glyph_pixel(digit, gx / s, gy / s))
            .map(move |gx| (left + gx as i64, top + gy as i64))
    })
}

/// Draws a green outline around every box and its predicted digit above it in
/// yellow. Drawing is clipped to the image.
pub fn draw_annotations(
    img: &RgbImage,
    boxes: &[BoundingBox],
    labels: &[u8],
) -> Result<RgbImage, ImageError> {
    if boxes.len() != labels.len() {
        return Err(ImageError::LengthMismatch {
            boxes: boxes.len(),
            labels: labels.len(),
        });
    }
    let mut out = img.clone();
    for (bbox, &digit) in boxes.iter().zip(labels) {
        for (x, y) in outline_pixels(bbox) {
            out.set_clipped(x, y, BOX_COLOR);
        }
        for (x, y) in glyph_pixels(bbox, digit) {
            out.set_clipped(x, y, LABEL_COLOR);
        }
    }
    Ok(out)
}
