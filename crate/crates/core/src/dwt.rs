//! Single-level 2D Haar wavelet transform.
//!
//! The four analysis filters are the unnormalized Haar kernels, applied as
//! stride-2 cross-correlations channel by channel:
//!
//! ```text
//! f_LL = [ 1  1]   f_LH = [-1 -1]   f_HL = [-1  1]   f_HH = [ 1 -1]
//!        [ 1  1]          [ 1  1]          [-1  1]          [-1  1]
//! ```
//!
//! Because the filters have unit entries the transform scales energy by 4;
//! [`dwt_inverse`] divides by 4 and reconstructs exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// One of the four Haar subbands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Band {
    LL,
    LH,
    HL,
    HH,
}

impl Band {
    pub const ALL: [Band; 4] = [Band::LL, Band::LH, Band::HL, Band::HH];

    /// The 2x2 analysis kernel, row-major `[top-left, top-right, bottom-left, bottom-right]`.
    pub const fn kernel(self) -> [f64; 4] {
        match self {
            Band::LL => [1.0, 1.0, 1.0, 1.0],
            Band::LH => [-1.0, -1.0, 1.0, 1.0],
            Band::HL => [-1.0, 1.0, -1.0, 1.0],
            Band::HH => [1.0, -1.0, -1.0, 1.0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::LL => "ll",
            Band::LH => "lh",
            Band::HL => "hl",
            Band::HH => "hh",
        }
    }
}

/// The four half-resolution subbands of a `[C, H, W]` input.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSet {
    pub ll: Tensor,
    pub lh: Tensor,
    pub hl: Tensor,
    pub hh: Tensor,
}

impl SubbandSet {
    pub fn band(&self, band: Band) -> &Tensor {
        match band {
            Band::LL => &self.ll,
            Band::LH => &self.lh,
            Band::HL => &self.hl,
            Band::HH => &self.hh,
        }
    }

    pub fn energy(&self) -> f64 {
        Band::ALL.iter().map(|&b| self.band(b).sum_squares()).sum()
    }
}

fn even_dims(x: &Tensor, op: &'static str) -> Result<(usize, usize, usize)> {
    let (c, h, w) = x.dims3(op)?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(
            op,
            format!("extents {h}x{w} must be even; pad the input first"),
        ));
    }
    Ok((c, h, w))
}

/// Applies a single analysis filter with stride 2.
pub fn dwt_band(x: &Tensor, band: Band) -> Result<Tensor> {
    let (c, h, w) = even_dims(x, "dwt_forward")?;
    let k = band.kernel();
    let (oh, ow) = (h / 2, w / 2);
    let xs = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for i in 0..oh {
            let top = &xs[(ch * h + 2 * i) * w..(ch * h + 2 * i + 1) * w];
            let bot = &xs[(ch * h + 2 * i + 1) * w..(ch * h + 2 * i + 2) * w];
            for j in 0..ow {
                out.push(
                    k[0] * top[2 * j] + k[1] * top[2 * j + 1] + k[2] * bot[2 * j] + k[3] * bot[2 * j + 1],
                );
            }
        }
    }
    Ok(Tensor::from_raw(vec![c, oh, ow], out))
}

/// Adjoint of [`dwt_band`]: spreads a subband gradient back onto the input grid.
pub fn dwt_band_adjoint(dy: &Tensor, band: Band) -> Result<Tensor> {
    let (c, oh, ow) = dy.dims3("dwt_band_adjoint")?;
    let k = band.kernel();
    let (h, w) = (2 * oh, 2 * ow);
    let g = dy.data();
    let mut dx = vec![0.0; c * h * w];
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let v = g[(ch * oh + i) * ow + j];
                let t = (ch * h + 2 * i) * w + 2 * j;
                dx[t] += k[0] * v;
                dx[t + 1] += k[1] * v;
                dx[t + w] += k[2] * v;
                dx[t + w + 1] += k[3] * v;
            }
        }
    }
    Ok(Tensor::from_raw(vec![c, h, w], dx))
}

pub fn dwt_forward(x: &Tensor) -> Result<SubbandSet> {
    Ok(SubbandSet {
        ll: dwt_band(x, Band::LL)?,
        lh: dwt_band(x, Band::LH)?,
        hl: dwt_band(x, Band::HL)?,
        hh: dwt_band(x, Band::HH)?,
    })
}

/// Exact synthesis: the four kernels are mutually orthogonal with squared
/// norm 4, so the inverse is the adjoint scaled by 1/4.
pub fn dwt_inverse(s: &SubbandSet) -> Result<Tensor> {
    let shape = s.ll.shape();
    for b in [Band::LH, Band::HL, Band::HH] {
        if s.band(b).shape() != shape {
            return Err(Error::shape(
                "dwt_inverse",
                format!(
                    "subband {} has shape {:?}, ll has {:?}",
                    b.name(),
                    s.band(b).shape(),
                    shape
                ),
            ));
        }
    }
    let mut acc = dwt_band_adjoint(&s.ll, Band::LL)?;
    for b in [Band::LH, Band::HL, Band::HH] {
        acc.add_assign(&dwt_band_adjoint(s.band(b), b)?);
    }
    acc.scale_assign(0.25);
    Ok(acc)
}
