//! Boundaries to a refined, curvature-annotated surface in one call.

use serde::{Deserialize, Serialize};

use crate::curvature::{curvature_field, CurvatureField, DEFAULT_NEIGHBOURS};
use crate::error::Result;
use crate::geometry::TriMesh;
use crate::reconstruct::{
    coarse_mesh, poisson_disk_resample, prune_large_circumcircles, retriangulate, slices_to_cloud, SamplingParams,
};
use crate::scan::{ScanGeometry, SliceBoundarySet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurfaceConfig {
    pub meridian_samples: usize,
    pub sampling: SamplingParams,
    pub neighbours: usize,
    /// Faces with a plan-view circumradius above `prune_factor * r2` are
    /// dropped after re-triangulation.
    pub prune_factor: f64,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            meridian_samples: 64,
            sampling: SamplingParams::default(),
            neighbours: DEFAULT_NEIGHBOURS,
            prune_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Surface {
    pub coarse: TriMesh,
    pub mesh: TriMesh,
    /// Disk radius of each refined vertex.
    pub radii: Vec<f64>,
    pub curvature: CurvatureField,
}

/// Cloud, coarse mesh, coarse curvature, adaptive resampling,
/// re-triangulation and refined curvature.
pub fn reconstruct_surface(boundaries: &SliceBoundarySet, geom: &ScanGeometry, cfg: &SurfaceConfig) -> Result<Surface> {
    let cloud = slices_to_cloud(boundaries, geom)?;
    let coarse = coarse_mesh(&cloud, cfg.meridian_samples)?.mesh;
    let coarse_curv = curvature_field(&coarse, cfg.neighbours)?;
    let mut sampling = cfg.sampling.clone();
    sampling.pixel_scale = geom.s_xy;
    let samples = poisson_disk_resample(&coarse, &coarse_curv.max_curvature_filled(), &sampling)?;
    let full = retriangulate(&samples.cloud)?;
    let mesh = prune_large_circumcircles(&full, cfg.prune_factor * sampling.radii().1);
    let curvature = curvature_field(&mesh, cfg.neighbours)?;
    Ok(Surface {
        coarse,
        mesh,
        radii: samples.radii,
        curvature,
    })
}
