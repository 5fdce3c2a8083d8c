//! Synthetic iris phantom.
//!
//! The anterior iris surface is a surface of revolution around the optical
//! axis with height profile
//!
//! ```text
//! f(ρ) = b·(1 − ((ρ − ρm)/w)²) + a·exp(−(ρ − ρf)² / 2σ²)
//! ```
//!
//! on `ρ ∈ [ρp, ρr]`, where `ρm` and `w` are the centre and half-width of the
//! annulus. `b` is the anterior bowing at mid-annulus and the Gaussian term
//! is the frill ridge. An optional azimuthal modulation of `b` breaks the
//! rotational symmetry.
//!
//! In image space the surface is drawn with anterior up: the boundary depth of
//! a column at radius `ρ` is `base_depth − f(ρ)/s_z` rows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scan::{ScanGeometry, SliceBoundary, SliceBoundarySet};
use crate::segnet::{render_slice_image, BoundaryPoint, SegMask};
use crate::nn::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Open,
    Closure,
}

impl Label {
    pub fn class_index(self) -> usize {
        match self {
            Label::Open => 0,
            Label::Closure => 1,
        }
    }

    pub fn from_class(c: usize) -> Label {
        if c == 1 {
            Label::Closure
        } else {
            Label::Open
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomParams {
    pub pupil_radius: f64,
    pub root_radius: f64,
    pub bowing: f64,
    pub frill_amplitude: f64,
    pub frill_center: f64,
    pub frill_width: f64,
    /// Relative amplitude of the azimuthal modulation of `bowing`.
    pub azimuthal_noise: f64,
    /// Volumes with `bowing > label_threshold` are labelled closure.
    pub label_threshold: f64,
    /// Image row of the `f = 0` level.
    pub base_depth: f64,
    /// Rasterised iris thickness in rows.
    pub thickness: usize,
    pub seed: u64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            pupil_radius: 40.0,
            root_radius: 200.0,
            bowing: 0.0,
            frill_amplitude: 4.0,
            frill_center: 90.0,
            frill_width: 12.0,
            azimuthal_noise: 0.0,
            label_threshold: 9.0,
            base_depth: 70.0,
            thickness: 16,
            seed: 0,
        }
    }
}

impl PhantomParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.pupil_radius,
            self.root_radius,
            self.bowing,
            self.frill_amplitude,
            self.frill_center,
            self.frill_width,
            self.azimuthal_noise,
            self.label_threshold,
            self.base_depth,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("phantom parameters must be finite"));
        }
        if !(0.0 < self.pupil_radius && self.pupil_radius < self.root_radius) {
            return Err(Error::invalid("need 0 < pupil_radius < root_radius"));
        }
        if self.frill_width <= 0.0 {
            return Err(Error::invalid("frill_width must be positive"));
        }
        if self.bowing < 0.0 || self.frill_amplitude < 0.0 || self.azimuthal_noise < 0.0 {
            return Err(Error::invalid("amplitudes must be non-negative"));
        }
        if self.thickness == 0 {
            return Err(Error::invalid("thickness must be at least one row"));
        }
        Ok(())
    }

    pub fn label(&self) -> Label {
        if self.bowing > self.label_threshold {
            Label::Closure
        } else {
            Label::Open
        }
    }

    pub fn profile(&self) -> Profile {
        self.profile_with_bowing(self.bowing)
    }

    fn profile_with_bowing(&self, bowing: f64) -> Profile {
        Profile {
            pupil_radius: self.pupil_radius,
            root_radius: self.root_radius,
            bowing,
            frill_amplitude: self.frill_amplitude,
            frill_center: self.frill_center,
            frill_width: self.frill_width,
        }
    }

    fn modulation(&self) -> [f64; 6] {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        std::array::from_fn(|_| rng.gen_range(-1.0..1.0))
    }

    /// Bowing amplitude along azimuth `phi`.
    pub fn bowing_at(&self, phi: f64) -> f64 {
        if self.azimuthal_noise == 0.0 {
            return self.bowing;
        }
        let c = self.modulation();
        let m: f64 = (1..=3)
            .map(|k| {
                let kf = k as f64;
                c[2 * (k - 1)] * (kf * phi).cos() + c[2 * k - 1] * (kf * phi).sin()
            })
            .sum::<f64>()
            / 3.0;
        (self.bowing * (1.0 + self.azimuthal_noise * m)).max(0.0)
    }

    /// Surface height at plan-view radius `rho` and azimuth `phi`.
    pub fn height(&self, rho: f64, phi: f64) -> f64 {
        self.profile_with_bowing(self.bowing_at(phi)).f(rho)
    }

    /// Height of the surface in reconstructed-cloud coordinates, where `z`
    /// grows with image depth.
    pub fn cloud_z(&self, rho: f64, phi: f64, geom: &ScanGeometry) -> f64 {
        geom.s_z * self.base_depth - self.height(rho, phi)
    }
}

/// Radial height profile and its closed-form curvatures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile {
    pub pupil_radius: f64,
    pub root_radius: f64,
    pub bowing: f64,
    pub frill_amplitude: f64,
    pub frill_center: f64,
    pub frill_width: f64,
}

impl Profile {
    fn mid(&self) -> f64 {
        0.5 * (self.pupil_radius + self.root_radius)
    }

    fn half_width(&self) -> f64 {
        0.5 * (self.root_radius - self.pupil_radius)
    }

    fn gauss(&self, rho: f64) -> f64 {
        let d = rho - self.frill_center;
        (-d * d / (2.0 * self.frill_width * self.frill_width)).exp()
    }

    pub fn f(&self, rho: f64) -> f64 {
        let u = (rho - self.mid()) / self.half_width();
        self.bowing * (1.0 - u * u) + self.frill_amplitude * self.gauss(rho)
    }

    pub fn df(&self, rho: f64) -> f64 {
        let w = self.half_width();
        let s2 = self.frill_width * self.frill_width;
        -2.0 * self.bowing * (rho - self.mid()) / (w * w)
            - self.frill_amplitude * (rho - self.frill_center) / s2 * self.gauss(rho)
    }

    pub fn d2f(&self, rho: f64) -> f64 {
        let w = self.half_width();
        let s2 = self.frill_width * self.frill_width;
        let d = rho - self.frill_center;
        -2.0 * self.bowing / (w * w) + self.frill_amplitude * self.gauss(rho) * (d * d / (s2 * s2) - 1.0 / s2)
    }

    /// Meridional normal curvature for the `+z` normal.
    pub fn kappa_meridional(&self, rho: f64) -> f64 {
        let d = self.df(rho);
        self.d2f(rho) / (1.0 + d * d).powf(1.5)
    }

    /// Circumferential normal curvature for the `+z` normal.
    pub fn kappa_circumferential(&self, rho: f64) -> f64 {
        let d = self.df(rho);
        d / (rho * (1.0 + d * d).sqrt())
    }
}

/// A rasterised phantom volume.
#[derive(Debug, Clone)]
pub struct PhantomVolume {
    pub params: PhantomParams,
    pub geometry: ScanGeometry,
    pub masks: Vec<SegMask>,
    /// Exact (sub-pixel) upper boundary of every slice.
    pub boundaries: SliceBoundarySet,
    /// Most peripheral boundary point of the left and right half per slice.
    pub tic_points: Vec<[BoundaryPoint; 2]>,
    pub label: Label,
}

/// Rasterises one slice. Returns the mask, the exact boundary and the two
/// peripheral (root) points.
pub fn phantom_slice(
    p: &PhantomParams,
    geom: &ScanGeometry,
    slice: usize,
) -> Result<(SegMask, SliceBoundary, [BoundaryPoint; 2])> {
    let theta = geom.slice_angle(slice);
    let xc = geom.center_column();
    let mut mask = SegMask::empty(geom.width, geom.height);
    let mut boundary = SliceBoundary {
        slice,
        ..Default::default()
    };
    for x in 0..geom.width {
        let signed = (x as f64 - xc) * geom.s_xy;
        let rho = signed.abs();
        if rho < p.pupil_radius || rho > p.root_radius {
            continue;
        }
        let phi = if signed >= 0.0 { theta } else { theta + std::f64::consts::PI };
        let z = p.base_depth - p.height(rho, phi) / geom.s_z;
        let top = z.round();
        let bottom = top + p.thickness as f64;
        if top < 0.0 || bottom > geom.height as f64 {
            return Err(Error::Geometry(format!(
                "phantom leaves the {}x{} image on slice {slice} (column {x}, rows {top}..{bottom})",
                geom.width, geom.height
            )));
        }
        for row in top as usize..bottom as usize {
            mask.set(x, row, true);
        }
        let pt = BoundaryPoint::new(x as f64, z);
        if signed < 0.0 {
            boundary.left.push(pt);
        } else {
            boundary.right.push(pt);
        }
    }
    let (Some(&l), Some(&r)) = (boundary.left.first(), boundary.right.last()) else {
        return Err(Error::Geometry(format!(
            "phantom iris does not fit the image width on slice {slice}"
        )));
    };
    Ok((mask, boundary, [l, r]))
}

/// Rasterises every slice of a volume.
pub fn phantom_slices(p: &PhantomParams, geom: &ScanGeometry) -> Result<PhantomVolume> {
    p.validate()?;
    geom.validate()?;
    let xc = geom.center_column();
    if xc - p.root_radius / geom.s_xy < 0.0 || xc + p.root_radius / geom.s_xy > (geom.width - 1) as f64 {
        return Err(Error::Geometry("root radius exceeds the image width".into()));
    }
    let mut masks = Vec::with_capacity(geom.slices);
    let mut slices = Vec::with_capacity(geom.slices);
    let mut tic_points = Vec::with_capacity(geom.slices);
    for i in 0..geom.slices {
        let (m, b, tic) = phantom_slice(p, geom, i)?;
        masks.push(m);
        slices.push(b);
        tic_points.push(tic);
    }
    Ok(PhantomVolume {
        params: p.clone(),
        geometry: *geom,
        masks,
        boundaries: SliceBoundarySet { slices },
        tic_points,
        label: p.label(),
    })
}

/// Parameter ranges for the two classes of the desk-scale experiment. The
/// bowing ranges do not overlap.
pub fn sample_volume_params(label: Label, seed: u64) -> PhantomParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bowing = match label {
        Label::Closure => rng.gen_range(14.0..26.0),
        Label::Open => rng.gen_range(0.0..4.0),
    };
    PhantomParams {
        pupil_radius: rng.gen_range(35.0..50.0),
        root_radius: rng.gen_range(185.0..205.0),
        bowing,
        frill_amplitude: rng.gen_range(1.0..6.0),
        frill_center: rng.gen_range(75.0..110.0),
        frill_width: rng.gen_range(9.0..16.0),
        azimuthal_noise: rng.gen_range(0.0..0.2),
        label_threshold: 9.0,
        base_depth: rng.gen_range(64.0..76.0),
        thickness: 16,
        seed,
    }
}

/// Phantom slices rendered as noisy images for segmentation training.
/// Each slice comes from an independently drawn phantom at a random angle.
pub fn segmentation_slices(count: usize, size: usize, seed: u64) -> Result<Vec<(Tensor, SegMask)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geom = ScanGeometry {
        slices: 128,
        width: size,
        height: size,
        s_xy: 1.0,
        s_z: 1.0,
    };
    let s = size as f64 / 64.0;
    (0..count)
        .map(|_| {
            let p = PhantomParams {
                pupil_radius: rng.gen_range(3.0..6.0) * s,
                root_radius: rng.gen_range(22.0..28.0) * s,
                bowing: rng.gen_range(0.0..8.0) * s,
                frill_amplitude: rng.gen_range(0.0..3.0) * s,
                frill_center: rng.gen_range(9.0..16.0) * s,
                frill_width: rng.gen_range(2.0..4.0) * s,
                azimuthal_noise: 0.2,
                label_threshold: 4.0 * s,
                base_depth: rng.gen_range(26.0..34.0) * s,
                thickness: (rng.gen_range(5.0..9.0) * s).round() as usize,
                seed: rng.gen(),
            };
            let slice = rng.gen_range(0..geom.slices);
            let (mask, _, _) = phantom_slice(&p, &geom, slice)?;
            let image = render_slice_image(&mask, 0.05, &mut rng);
            Ok((image, mask))
        })
        .collect()
}
