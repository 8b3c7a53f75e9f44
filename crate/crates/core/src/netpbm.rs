//! Netpbm image I/O: P2/P5 grayscale and P3/P6 color on read, P5/P6 on write.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::image::{GrayImage, ImageError, RgbImage};

#[derive(Debug, Error)]
pub enum NetpbmError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("unsupported Netpbm magic {0:?} (expected P2, P3, P5 or P6)")]
    UnsupportedMagic(String),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("maxval {0} out of range 1..=255")]
    Maxval(u32),
    #[error("pixel data truncated: expected {expected} samples, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("sample {0} exceeds maxval")]
    SampleRange(u32),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// A decoded Netpbm image in its native channel layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PnmImage {
    Gray(GrayImage),
    Rgb(RgbImage),
}

impl PnmImage {
    pub fn to_rgb(&self) -> RgbImage {
        match self {
            PnmImage::Gray(g) => g.to_rgb(),
            PnmImage::Rgb(c) => c.clone(),
        }
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.data.len() {
            let c = self.data[self.pos];
            if c == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, NetpbmError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(NetpbmError::Header(format!("missing {what}")));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| NetpbmError::Header(format!("bad {what}")))
    }
}

fn scale(sample: u32, maxval: u32) -> Result<u8, NetpbmError> {
    if sample > maxval {
        return Err(NetpbmError::SampleRange(sample));
    }
    if maxval == 255 {
        return Ok(sample as u8);
    }
    // round-half-up of sample·255/maxval
    Ok(((2 * sample * 255 + maxval) / (2 * maxval)) as u8)
}

pub fn decode(data: &[u8]) -> Result<PnmImage, NetpbmError> {
    if data.len() < 2 {
        return Err(NetpbmError::UnsupportedMagic(
            String::from_utf8_lossy(data).into(),
        ));
    }
    let magic = &data[..2];
    let (channels, binary) = match magic {
        b"P2" => (1, false),
        b"P5" => (1, true),
        b"P3" => (3, false),
        b"P6" => (3, true),
        _ => {
            return Err(NetpbmError::UnsupportedMagic(
                String::from_utf8_lossy(magic).into(),
            ))
        }
    };
    let mut cur = Cursor { data, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if !(1..=255).contains(&maxval) {
        return Err(NetpbmError::Maxval(maxval));
    }
    let expected = width * height * channels;
    let mut samples = Vec::with_capacity(expected);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        if cur.pos >= data.len() || !data[cur.pos].is_ascii_whitespace() {
            return Err(NetpbmError::Header(
                "missing whitespace after maxval".into(),
            ));
        }
        let raster = &data[cur.pos + 1..];
        if raster.len() < expected {
            return Err(NetpbmError::Truncated {
                expected,
                actual: raster.len(),
            });
        }
        for &b in &raster[..expected] {
            samples.push(scale(b as u32, maxval)?);
        }
    } else {
        for _ in 0..expected {
            cur.skip_whitespace_and_comments();
            if cur.pos >= data.len() {
                return Err(NetpbmError::Truncated {
                    expected,
                    actual: samples.len(),
                });
            }
            let v = cur.number("sample")?;
            samples.push(scale(v, maxval)?);
        }
    }
    Ok(if channels == 1 {
        PnmImage::Gray(GrayImage::new(width, height, samples)?)
    } else {
        PnmImage::Rgb(RgbImage::new(width, height, samples)?)
    })
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn read(path: impl AsRef<Path>) -> Result<PnmImage, NetpbmError> {
    decode(&fs::read(path)?)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<(), NetpbmError> {
    fs::write(path, encode_pgm(img))?;
    Ok(())
}

pub fn write_ppm(path: impl AsRef<Path>, img: &RgbImage) -> Result<(), NetpbmError> {
    fs::write(path, encode_ppm(img))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_pgm_with_comments() {
        let src = b"P2\n# a comment\n3 2\n# another\n255\n0 1 2\n253 254 255\n";
        let PnmImage::Gray(g) = decode(src).unwrap() else {
            panic!("expected gray");
        };
        assert_eq!((g.width(), g.height()), (3, 2));
        assert_eq!(g.pixels(), &[0, 1, 2, 253, 254, 255]);
    }

    #[test]
    fn ascii_ppm() {
        let src = b"P3 1 1 255 10 20 30";
        assert_eq!(
            decode(src).unwrap(),
            PnmImage::Rgb(RgbImage::new(1, 1, vec![10, 20, 30]).unwrap())
        );
    }

    #[test]
    fn binary_round_trip() {
        let g = GrayImage::from_fn(5, 3, |x, y| (x * 40 + y) as u8);
        assert_eq!(decode(&encode_pgm(&g)).unwrap(), PnmImage::Gray(g.clone()));
        let c = g.to_rgb();
        assert_eq!(decode(&encode_ppm(&c)).unwrap(), PnmImage::Rgb(c));
    }

    #[test]
    fn binary_raster_may_contain_header_like_bytes() {
        // raster bytes that look like whitespace or '#' must not be skipped
        let mut data = b"P5\n2 1\n255\n".to_vec();
        data.extend_from_slice(b"# ");
        let PnmImage::Gray(g) = decode(&data).unwrap() else {
            panic!()
        };
        assert_eq!(g.pixels(), b"# ");
    }

    #[test]
    fn small_maxval_is_rescaled() {
        let PnmImage::Gray(g) = decode(b"P2 3 1 1 0 1 1").unwrap() else {
            panic!()
        };
        assert_eq!(g.pixels(), &[0, 255, 255]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            decode(b"P4 1 1"),
            Err(NetpbmError::UnsupportedMagic(_))
        ));
        assert!(matches!(
            decode(b"P5 2 2 255\n\x00"),
            Err(NetpbmError::Truncated { .. })
        ));
        assert!(matches!(
            decode(b"P5 2 2 65535\n"),
            Err(NetpbmError::Maxval(65535))
        ));
        assert!(matches!(
            decode(b"P2 1 1 10 11"),
            Err(NetpbmError::SampleRange(11))
        ));
        assert!(matches!(decode(b"P5 x"), Err(NetpbmError::Header(_))));
    }
}
