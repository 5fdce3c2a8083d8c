//! 8-bit binary PGM (P5) images and masks.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::segnet::SegMask;

/// Grey levels at or above this are read as iris in a mask.
pub const MASK_THRESHOLD: u8 = 128;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// Row-major grey levels.
    pub pixels: Vec<u8>,
}

pub fn write_pgm<W: Write>(img: &GrayImage, mut out: W) -> Result<()> {
    if img.pixels.len() != img.width * img.height {
        return Err(Error::shape("write_pgm", "pixel count does not match the extents"));
    }
    write!(out, "P5\n{} {}\n255\n", img.width, img.height)?;
    out.write_all(&img.pixels)?;
    out.flush()?;
    Ok(())
}

fn header_token<R: BufRead>(input: &mut R) -> Result<String> {
    let mut tok = Vec::new();
    loop {
        let mut b = [0u8; 1];
        if input.read(&mut b)? == 0 {
            break;
        }
        match b[0] {
            b'#' if tok.is_empty() => {
                let mut skip = Vec::new();
                input.read_until(b'\n', &mut skip)?;
            }
            c if c.is_ascii_whitespace() => {
                if !tok.is_empty() {
                    break;
                }
            }
            c => tok.push(c),
        }
    }
    if tok.is_empty() {
        return Err(Error::Format("truncated PGM header".into()));
    }
    String::from_utf8(tok).map_err(|_| Error::Format("PGM header is not ASCII".into()))
}

/// Reads a P5 file with `maxval <= 255`.
pub fn read_pgm<R: BufRead>(mut input: R) -> Result<GrayImage> {
    if header_token(&mut input)? != "P5" {
        return Err(Error::Format("not a binary PGM (P5) file".into()));
    }
    let mut num = |what: &str| -> Result<usize> {
        let t = header_token(&mut input)?;
        t.parse()
            .map_err(|_| Error::Format(format!("PGM {what} `{t}` is not a number")))
    };
    let (width, height, maxval) = (num("width")?, num("height")?, num("maxval")?);
    if width == 0 || height == 0 || maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!(
            "unsupported PGM {width}x{height} with maxval {maxval}"
        )));
    }
    let mut pixels = vec![0u8; width * height];
    input
        .read_exact(&mut pixels)
        .map_err(|_| Error::Format("PGM pixel data is truncated".into()))?;
    Ok(GrayImage { width, height, pixels })
}

impl GrayImage {
    /// Iris pixels as 255, background as 0.
    pub fn from_mask(mask: &SegMask) -> Self {
        Self {
            width: mask.width(),
            height: mask.height(),
            pixels: mask.labels().iter().map(|&l| l * 255).collect(),
        }
    }

    pub fn to_mask(&self) -> Result<SegMask> {
        SegMask::new(
            self.width,
            self.height,
            self.pixels.iter().map(|&p| (p >= MASK_THRESHOLD) as u8).collect(),
        )
    }

    /// Quantises a `[1, H, W]` tensor, clamping to `[0, 1]`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (c, height, width) = t.dims3("pgm")?;
        if c != 1 {
            return Err(Error::shape("pgm", format!("expected one channel, got {c}")));
        }
        let pixels = t
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        Ok(Self { width, height, pixels })
    }

    /// `[1, H, W]` tensor with values in `[0, 1]`.
    pub fn to_tensor(&self) -> Tensor {
        let data = self.pixels.iter().map(|&p| p as f64 / 255.0).collect();
        Tensor::new(&[1, self.height, self.width], data).expect("extents match")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_comments() {
        let img = GrayImage {
            width: 3,
            height: 2,
            pixels: vec![0, 10, 255, 128, 32, 10],
        };
        let mut buf = Vec::new();
        write_pgm(&img, &mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(read_pgm(&buf[..]).unwrap(), img);
        let mut commented = b"P5\n# made by hand\n3 2\n255\n".to_vec();
        commented.extend_from_slice(&img.pixels);
        assert_eq!(read_pgm(&commented[..]).unwrap(), img);
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(read_pgm(&b"P2\n1 1\n255\n0"[..]).is_err());
        assert!(read_pgm(&b"P5\n2 2\n255\n\x00"[..]).is_err());
        assert!(read_pgm(&b"P5\n2 2\n65535\n"[..]).is_err());
        assert!(read_pgm(&b"P5\nx 2\n255\n"[..]).is_err());
    }

    #[test]
    fn mask_and_tensor_conversions() {
        let mut m = SegMask::empty(4, 2);
        m.set(1, 0, true);
        m.set(3, 1, true);
        let img = GrayImage::from_mask(&m);
        assert_eq!(img.to_mask().unwrap(), m);
        let t = img.to_tensor();
        assert_eq!(t.shape(), &[1, 2, 4]);
        assert_eq!(GrayImage::from_tensor(&t).unwrap(), img);
    }
}
