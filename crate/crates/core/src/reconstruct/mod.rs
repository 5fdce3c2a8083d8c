//! Boundary slices to a refined 3D surface mesh.
//!
//! `slices_to_cloud` lifts the per-slice boundaries into a point cloud,
//! `coarse_mesh` joins neighbouring meridians into a triangle band,
//! `poisson_disk_resample` redistributes points over that band with a
//! curvature-dependent radius, and `retriangulate` meshes the result.

mod delaunay;
mod poisson;

pub use delaunay::{prune_large_circumcircles, retriangulate};
pub use poisson::{poisson_disk_resample, PoissonSamples, SamplingParams};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{dist, PointCloud3D, Point3, TriMesh};
use crate::scan::{ScanGeometry, SliceBoundarySet};

/// Lifts every boundary point of every slice into 3D.
///
/// Slice `i` lies in the plane at azimuth `θ = iπ/S` through the optical
/// axis. The right half of a slice maps to azimuth `θ`, the left half to
/// `θ + π`; image depth becomes `z`.
pub fn slices_to_cloud(boundaries: &SliceBoundarySet, geom: &ScanGeometry) -> Result<PointCloud3D> {
    geom.validate()?;
    let xc = geom.center_column();
    let mut points = Vec::with_capacity(boundaries.point_count());
    let mut azimuth = Vec::with_capacity(points.capacity());
    let mut radius = Vec::with_capacity(points.capacity());
    for s in &boundaries.slices {
        if s.slice >= geom.slices {
            return Err(Error::Geometry(format!(
                "slice index {} out of range for {} slices",
                s.slice, geom.slices
            )));
        }
        let theta = geom.slice_angle(s.slice);
        for p in s.left.iter().chain(&s.right) {
            if !(0.0..geom.width as f64).contains(&p.x) || !(0.0..geom.height as f64).contains(&p.z) {
                return Err(Error::Geometry(format!(
                    "boundary point ({}, {}) of slice {} lies outside the {}x{} image",
                    p.x, p.z, s.slice, geom.width, geom.height
                )));
            }
            let signed = (p.x - xc) * geom.s_xy;
            let phi = if signed >= 0.0 { theta } else { theta + std::f64::consts::PI };
            let rho = signed.abs();
            points.push([rho * phi.cos(), rho * phi.sin(), p.z * geom.s_z]);
            azimuth.push(phi);
            radius.push(rho);
        }
    }
    let cloud = PointCloud3D {
        points,
        azimuth: Some(azimuth),
        radius: Some(radius),
    };
    cloud.validate()?;
    Ok(cloud)
}

/// Coarse mesh plus bookkeeping about what had to be dropped.
#[derive(Debug, Clone)]
pub struct CoarseMesh {
    pub mesh: TriMesh,
    /// Meridians with fewer than two distinct points.
    pub skipped_meridians: usize,
    /// Zero-area triangles left out of the strips (e.g. at a collapsed pole).
    pub skipped_faces: usize,
}

/// Joins meridians (points sharing an azimuth) into a closed triangle band.
///
/// Each meridian is ordered by radius and resampled to `m` points by arc
/// length; consecutive meridians, including last-to-first, are joined by a
/// strip of `m - 1` quads split into two triangles each. Faces are wound so
/// their normals point to `+z` on a flat annulus.
pub fn coarse_mesh(cloud: &PointCloud3D, m: usize) -> Result<CoarseMesh> {
    if m < 2 {
        return Err(Error::invalid("need at least 2 samples per meridian"));
    }
    let polar;
    let (phi, rho) = match (&cloud.azimuth, &cloud.radius) {
        (Some(phi), Some(rho)) => (phi, rho),
        _ => {
            polar = cloud.clone().with_polar();
            (polar.azimuth.as_ref().unwrap(), polar.radius.as_ref().unwrap())
        }
    };
    let mut meridians: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, &f) in phi.iter().enumerate() {
        // azimuths are non-negative so their bit patterns sort like the values
        meridians.entry(f.to_bits()).or_default().push(i);
    }

    let mut skipped_meridians = 0;
    let mut resampled: Vec<Vec<Point3>> = Vec::new();
    for (key, mut idx) in meridians {
        idx.sort_by(|&a, &b| rho[a].total_cmp(&rho[b]).then(a.cmp(&b)));
        let pts: Vec<Point3> = idx.iter().map(|&i| cloud.points[i]).collect();
        match resample_polyline(&pts, m) {
            Some(r) => resampled.push(r),
            None => {
                log::warn!(
                    "skipping meridian at azimuth {:.6} with {} point(s)",
                    f64::from_bits(key),
                    pts.len()
                );
                skipped_meridians += 1;
            }
        }
    }
    let n = resampled.len();
    if n < 3 {
        return Err(Error::Geometry(format!("need at least 3 usable meridians, found {n}")));
    }

    let vertices: Vec<Point3> = resampled.into_iter().flatten().collect();
    let mut mesh = TriMesh {
        vertices,
        faces: Vec::with_capacity(2 * n * (m - 1)),
    };
    let min_area = mesh.degenerate_area_threshold();
    let mut skipped_faces = 0;
    for j in 0..n {
        let a0 = j * m;
        let b0 = ((j + 1) % n) * m;
        for i in 0..m - 1 {
            let (a, a1, b, b1) = (a0 + i, a0 + i + 1, b0 + i, b0 + i + 1);
            for f in [[a, a1, b], [a1, b1, b]] {
                mesh.faces.push(f);
                if mesh.face_area(mesh.faces.len() - 1) <= min_area {
                    mesh.faces.pop();
                    skipped_faces += 1;
                }
            }
        }
    }
    if skipped_faces > 0 {
        log::warn!("coarse mesh: dropped {skipped_faces} degenerate triangles");
    }
    mesh.validate()?;
    Ok(CoarseMesh {
        mesh,
        skipped_meridians,
        skipped_faces,
    })
}

/// `m` points spaced evenly along the polyline by arc length, or `None` if
/// the polyline has no length.
fn resample_polyline(pts: &[Point3], m: usize) -> Option<Vec<Point3>> {
    if pts.len() < 2 {
        return None;
    }
    let mut cum = Vec::with_capacity(pts.len());
    cum.push(0.0);
    for w in pts.windows(2) {
        cum.push(cum.last().unwrap() + dist(w[0], w[1]));
    }
    let total = *cum.last().unwrap();
    if !(total > 0.0) {
        return None;
    }
    let mut out = Vec::with_capacity(m);
    let mut seg = 0;
    for k in 0..m {
        if k == m - 1 {
            out.push(*pts.last().unwrap());
            break;
        }
        let s = total * k as f64 / (m - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] <= s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { ((s - cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        let (p, q) = (pts[seg], pts[seg + 1]);
        out.push([
            p[0] + t * (q[0] - p[0]),
            p[1] + t * (q[1] - p[1]),
            p[2] + t * (q[2] - p[2]),
        ]);
    }
    Some(out)
}
