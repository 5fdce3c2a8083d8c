//! Radial scan layout and per-slice boundary sets.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segnet::{BoundaryPoint, Half, UpperBoundary};

/// Radial scan layout: `slices` images through the optical axis, slice `i`
/// at angle `i·π/slices`, each `width` x `height` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanGeometry {
    pub slices: usize,
    pub width: usize,
    pub height: usize,
    /// Length units per pixel across the image.
    pub s_xy: f64,
    /// Length units per pixel in depth.
    pub s_z: f64,
}

impl Default for ScanGeometry {
    fn default() -> Self {
        Self {
            slices: 128,
            width: 512,
            height: 128,
            s_xy: 1.0,
            s_z: 1.0,
        }
    }
}

impl ScanGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.slices < 4 {
            return Err(Error::invalid(format!("need at least 4 slices, got {}", self.slices)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image extents must be positive"));
        }
        if !(self.s_xy > 0.0 && self.s_z > 0.0 && self.s_xy.is_finite() && self.s_z.is_finite()) {
            return Err(Error::invalid("pixel scales must be positive and finite"));
        }
        Ok(())
    }

    /// Column of the optical axis.
    pub fn center_column(&self) -> f64 {
        self.width as f64 / 2.0
    }

    pub fn slice_angle(&self, slice: usize) -> f64 {
        slice as f64 * std::f64::consts::PI / self.slices as f64
    }
}

/// Upper boundary points of one slice, split into the two halves.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SliceBoundary {
    pub slice: usize,
    pub left: Vec<BoundaryPoint>,
    pub right: Vec<BoundaryPoint>,
}

impl SliceBoundary {
    pub fn from_upper(slice: usize, b: &UpperBoundary) -> Self {
        Self {
            slice,
            left: b.points(Half::Left),
            right: b.points(Half::Right),
        }
    }

    pub fn half(&self, half: Half) -> &[BoundaryPoint] {
        match half {
            Half::Left => &self.left,
            Half::Right => &self.right,
        }
    }

    pub fn half_mut(&mut self, half: Half) -> &mut Vec<BoundaryPoint> {
        match half {
            Half::Left => &mut self.left,
            Half::Right => &mut self.right,
        }
    }
}

/// Boundaries of all slices of a volume.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SliceBoundarySet {
    pub slices: Vec<SliceBoundary>,
}

pub const BOUNDARY_CSV_HEADER: &str = "slice_index,half,point_index,x,z";

impl SliceBoundarySet {
    pub fn point_count(&self) -> usize {
        self.slices.iter().map(|s| s.left.len() + s.right.len()).sum()
    }

    /// Rows `slice_index,half,point_index,x,z`; `point_index` counts within a half.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{BOUNDARY_CSV_HEADER}")?;
        for s in &self.slices {
            for half in [Half::Left, Half::Right] {
                for (i, p) in s.half(half).iter().enumerate() {
                    writeln!(out, "{},{},{},{},{}", s.slice, half.as_str(), i, p.x, p.z)?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut by_slice: BTreeMap<usize, SliceBoundary> = BTreeMap::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("slice_index")) {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let err = || Error::Format(format!("boundary CSV line {}: `{line}`", lineno + 1));
            if f.len() != 5 {
                return Err(err());
            }
            let slice: usize = f[0].trim().parse().map_err(|_| err())?;
            let half = Half::parse(f[1].trim()).ok_or_else(err)?;
            let x: f64 = f[3].trim().parse().map_err(|_| err())?;
            let z: f64 = f[4].trim().parse().map_err(|_| err())?;
            if !x.is_finite() || !z.is_finite() {
                return Err(err());
            }
            by_slice
                .entry(slice)
                .or_insert_with(|| SliceBoundary {
                    slice,
                    ..Default::default()
                })
                .half_mut(half)
                .push(BoundaryPoint::new(x, z));
        }
        Ok(Self {
            slices: by_slice.into_values().collect(),
        })
    }
}
