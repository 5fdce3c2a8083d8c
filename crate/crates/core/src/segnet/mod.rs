//! U-shaped segmentation network whose encoder-to-decoder links are wavelet
//! refinement blocks.
//!
//! Layout for the default 64x64 input and widths `[8, 16, 32, 64]`:
//!
//! ```text
//! enc1 64x64x8 ──WRB──┐
//!  pool               │
//! enc2 32x32x16 ─WRB─┐│
//!  pool              ││
//! enc3 16x16x32 WRB┐ ││
//!  pool            │ ││
//! enc4 8x8x64 ─────┴─┼┼─> dec3 8x8x32 ─up─> dec2 16x16x16 ─up─> dec1 32x32x8 ─up─> head 64x64 -> 2
//! ```
//!
//! A WRB splits an encoder feature into its four Haar subbands, passes each
//! through its own 1x1 convolution and concatenates the results with the
//! decoder feature at half the encoder resolution. Every conv block is two
//! 3x3 convolutions with ReLU. The head also sees the raw input image.

mod boundary;
mod train;

pub use boundary::{extract_upper_boundary, BoundaryPoint, Half, UpperBoundary};
pub use train::{segnet_train, SegTrainConfig, SegTrainReport};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dwt::Band;
use crate::error::{Error, Result};
use crate::nn::{Graph, ParamId, ParamStore, Tensor, Var};

/// Binary per-pixel labels, row-major, `1` = iris.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl SegMask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::shape(
                "SegMask",
                format!("{width}x{height} mask needs {} labels, got {}", width * height, labels.len()),
            ));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::invalid("mask labels must be 0 or 1"));
        }
        Ok(Self { width, height, labels })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            labels: vec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, x: usize, z: usize) -> bool {
        self.labels[z * self.width + x] == 1
    }

    pub fn set(&mut self, x: usize, z: usize, on: bool) {
        self.labels[z * self.width + x] = on as u8;
    }

    pub fn count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Per-pixel class indices in the layout expected by `softmax_ce`.
    pub fn class_indices(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| l as usize).collect()
    }
}

/// How encoder features reach the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SkipKind {
    /// Wavelet refinement block.
    Wavelet,
    /// Ablation: 2x2 max pooling followed by one 1x1 convolution with the same
    /// output width as the four WRB branches together.
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WrbNetConfig {
    pub height: usize,
    pub width: usize,
    pub widths: [usize; 4],
    pub classes: usize,
    /// 1x1 output channels per subband at each of the three WRB levels.
    pub subband_channels: [usize; 3],
    pub skip: SkipKind,
}

impl Default for WrbNetConfig {
    fn default() -> Self {
        Self::with_widths(64, 64, [8, 16, 32, 64])
    }
}

impl WrbNetConfig {
    pub fn with_widths(height: usize, width: usize, widths: [usize; 4]) -> Self {
        Self {
            height,
            width,
            widths,
            classes: 2,
            subband_channels: [
                (widths[0] / 4).max(1),
                (widths[1] / 4).max(1),
                (widths[2] / 4).max(1),
            ],
            skip: SkipKind::Wavelet,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.height % 8 != 0 || self.width % 8 != 0 {
            return Err(Error::invalid(format!(
                "input {}x{} must be positive multiples of 8",
                self.height, self.width
            )));
        }
        if self.widths.contains(&0) || self.subband_channels.contains(&0) || self.classes < 2 {
            return Err(Error::invalid("channel widths must be positive and classes >= 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    w: ParamId,
    b: ParamId,
    pad: usize,
}

impl Conv {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, cin: usize, cout: usize, k: usize) -> Self {
        let w = store.add_he(format!("{name}.w"), &[cout, cin, k, k], cin * k * k, rng);
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[cout]));
        Self { w, b, pad: k / 2 }
    }

    fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let (w, b) = (g.param(store, self.w), g.param(store, self.b));
        g.conv2d(x, w, b, 1, self.pad)
    }
}

#[derive(Debug, Clone, Copy)]
struct Block {
    a: Conv,
    b: Conv,
}

impl Block {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, cin: usize, cout: usize) -> Self {
        Self {
            a: Conv::new(store, rng, &format!("{name}.0"), cin, cout, 3),
            b: Conv::new(store, rng, &format!("{name}.1"), cout, cout, 3),
        }
    }

    fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.a.apply(g, store, x)?;
        let h = g.relu(h)?;
        let h = self.b.apply(g, store, h)?;
        g.relu(h)
    }
}

/// Encoder-to-decoder link at one level.
#[derive(Debug, Clone)]
pub struct WrbBlock {
    kind: SkipKind,
    convs: Vec<Conv>,
}

impl WrbBlock {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, kind: SkipKind, cin: usize, per_band: usize) -> Self {
        let convs = match kind {
            SkipKind::Wavelet => Band::ALL
                .iter()
                .map(|b| Conv::new(store, rng, &format!("{name}.{}", b.name()), cin, per_band, 1))
                .collect(),
            SkipKind::Plain => vec![Conv::new(store, rng, &format!("{name}.plain"), cin, 4 * per_band, 1)],
        };
        Self { kind, convs }
    }

    /// Output channels contributed on top of the decoder feature.
    pub fn extra_channels(&self, store: &ParamStore) -> usize {
        self.convs.iter().map(|c| store.get(c.b).value.len()).sum()
    }

    /// `concat(decoder, conv(LL), conv(LH), conv(HL), conv(HH))`; the decoder
    /// feature must be at exactly half the encoder resolution.
    pub fn apply(&self, g: &mut Graph, store: &ParamStore, encoder: Var, decoder: Var) -> Result<Var> {
        let (_, eh, ew) = g.value(encoder).dims3("wrb_block")?;
        let (_, dh, dw) = g.value(decoder).dims3("wrb_block")?;
        if eh != 2 * dh || ew != 2 * dw {
            return Err(Error::shape(
                "wrb_block",
                format!("decoder {dh}x{dw} is not half of encoder {eh}x{ew}"),
            ));
        }
        let mut parts = vec![decoder];
        match self.kind {
            SkipKind::Wavelet => {
                for (band, conv) in Band::ALL.iter().zip(&self.convs) {
                    let sub = g.dwt_band(encoder, *band)?;
                    parts.push(conv.apply(g, store, sub)?);
                }
            }
            SkipKind::Plain => {
                let pooled = g.maxpool2x2(encoder)?;
                parts.push(self.convs[0].apply(g, store, pooled)?);
            }
        }
        g.concat(&parts)
    }
}

/// Network structure; the weights live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct WrbNet {
    pub config: WrbNetConfig,
    enc: [Block; 4],
    skips: Vec<WrbBlock>,
    dec: [Block; 3],
    head: Conv,
    out: Conv,
}

impl WrbNet {
    /// Builds the network and registers freshly initialised weights in `store`.
    pub fn new(config: WrbNetConfig, store: &mut ParamStore, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = config.widths;
        let enc = [
            Block::new(store, &mut rng, "enc1", 1, w[0]),
            Block::new(store, &mut rng, "enc2", w[0], w[1]),
            Block::new(store, &mut rng, "enc3", w[1], w[2]),
            Block::new(store, &mut rng, "enc4", w[2], w[3]),
        ];
        let sc = config.subband_channels;
        let skips: Vec<WrbBlock> = (0..3)
            .map(|i| WrbBlock::new(store, &mut rng, &format!("wrb{}", i + 1), config.skip, w[i], sc[i]))
            .collect();
        let dec = [
            Block::new(store, &mut rng, "dec3", w[3] + 4 * sc[2], w[2]),
            Block::new(store, &mut rng, "dec2", w[2] + 4 * sc[1], w[1]),
            Block::new(store, &mut rng, "dec1", w[1] + 4 * sc[0], w[0]),
        ];
        let head = Conv::new(store, &mut rng, "head", w[0] + 1, w[0], 3);
        let out = Conv::new(store, &mut rng, "out", w[0], config.classes, 1);
        Ok(Self {
            config,
            enc,
            skips,
            dec,
            head,
            out,
        })
    }

    pub fn wrb(&self, level: usize) -> &WrbBlock {
        &self.skips[level]
    }

    fn check_image(&self, image: &Tensor) -> Result<()> {
        let expected = [1, self.config.height, self.config.width];
        if image.shape() != expected {
            return Err(Error::shape(
                "segnet_forward",
                format!("expected image {:?}, got {:?}", expected, image.shape()),
            ));
        }
        Ok(())
    }

    /// Records the forward pass and returns the `[classes, H, W]` logits.
    pub fn forward_graph(&self, g: &mut Graph, store: &ParamStore, image: &Tensor) -> Result<Var> {
        self.check_image(image)?;
        let x = g.input(image.clone());
        let e1 = self.enc[0].apply(g, store, x)?;
        let p1 = g.maxpool2x2(e1)?;
        let e2 = self.enc[1].apply(g, store, p1)?;
        let p2 = g.maxpool2x2(e2)?;
        let e3 = self.enc[2].apply(g, store, p2)?;
        let p3 = g.maxpool2x2(e3)?;
        let e4 = self.enc[3].apply(g, store, p3)?;

        let c3 = self.skips[2].apply(g, store, e3, e4)?;
        let d3 = self.dec[0].apply(g, store, c3)?;
        let u3 = g.upsample2x(d3)?;
        let c2 = self.skips[1].apply(g, store, e2, u3)?;
        let d2 = self.dec[1].apply(g, store, c2)?;
        let u2 = g.upsample2x(d2)?;
        let c1 = self.skips[0].apply(g, store, e1, u2)?;
        let d1 = self.dec[2].apply(g, store, c1)?;
        let u1 = g.upsample2x(d1)?;

        let cat = g.concat(&[u1, x])?;
        let h = self.head.apply(g, store, cat)?;
        let h = g.relu(h)?;
        self.out.apply(g, store, h)
    }

    /// Per-pixel class logits `[classes, H, W]`.
    pub fn forward(&self, store: &ParamStore, image: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let y = self.forward_graph(&mut g, store, image)?;
        Ok(g.value(y).clone())
    }

    /// Mean per-pixel cross-entropy; the returned graph is ready for `backward`.
    pub fn loss_graph(&self, store: &ParamStore, image: &Tensor, mask: &SegMask) -> Result<(Graph, Var)> {
        if mask.width() != self.config.width || mask.height() != self.config.height {
            return Err(Error::shape("segnet loss", "mask extents differ from the configured input"));
        }
        let mut g = Graph::new();
        let logits = self.forward_graph(&mut g, store, image)?;
        let loss = g.softmax_ce(logits, &mask.class_indices())?;
        Ok((g, loss))
    }

    /// Argmax labels of [`forward`](Self::forward).
    pub fn predict(&self, store: &ParamStore, image: &Tensor) -> Result<SegMask> {
        let logits = self.forward(store, image)?;
        Ok(argmax_mask(&logits))
    }
}

/// Converts `[classes, H, W]` logits into a binary mask (class 1 = iris).
pub fn argmax_mask(logits: &Tensor) -> SegMask {
    let (c, h, w) = (logits.shape()[0], logits.shape()[1], logits.shape()[2]);
    let plane = h * w;
    let d = logits.data();
    let labels = (0..plane)
        .map(|p| {
            let best = (0..c).fold(0, |best, k| if d[k * plane + p] > d[best * plane + p] { k } else { best });
            (best == 1) as u8
        })
        .collect();
    SegMask {
        width: w,
        height: h,
        labels,
    }
}

/// Intensity image for a mask: iris 0.75, background 0.2, plus Gaussian noise.
pub fn render_slice_image<R: rand::Rng + ?Sized>(mask: &SegMask, noise_sigma: f64, rng: &mut R) -> Tensor {
    use rand_distr::{Distribution, Normal};
    let normal = Normal::new(0.0, noise_sigma.max(0.0)).expect("finite sigma");
    let data = mask
        .labels()
        .iter()
        .map(|&l| {
            let base = if l == 1 { 0.75 } else { 0.2 };
            if noise_sigma > 0.0 {
                base + normal.sample(rng)
            } else {
                base
            }
        })
        .collect();
    Tensor::from_raw(vec![1, mask.height(), mask.width()], data)
}
