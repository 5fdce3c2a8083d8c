//! Point clouds and indexed triangle meshes.

mod ply;

pub use ply::{read_ply, write_ply, PlyMesh};

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

pub fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: Point3, b: Point3) -> f64 {
    norm(sub(a, b))
}

pub fn triangle_area(a: Point3, b: Point3, c: Point3) -> f64 {
    0.5 * norm(cross(sub(b, a), sub(c, a)))
}

/// Azimuth of `(x, y)` in `[0, 2π)`.
pub fn azimuth(x: f64, y: f64) -> f64 {
    let t = y.atan2(x).rem_euclid(std::f64::consts::TAU);
    // rem_euclid can round up to TAU for tiny negative angles
    if t >= std::f64::consts::TAU {
        0.0
    } else {
        t
    }
}

/// 3D points with optional cylindrical bookkeeping.
///
/// When present, `azimuth[i]` and `radius[i]` describe point `i` in the plan
/// view: `x = radius cos(azimuth)`, `y = radius sin(azimuth)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud3D {
    pub points: Vec<Point3>,
    pub azimuth: Option<Vec<f64>>,
    pub radius: Option<Vec<f64>>,
}

impl PointCloud3D {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        let cloud = Self {
            points,
            azimuth: None,
            radius: None,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    /// Fills `azimuth` and `radius` from the x/y coordinates.
    pub fn with_polar(mut self) -> Self {
        self.azimuth = Some(self.points.iter().map(|p| azimuth(p[0], p[1])).collect());
        self.radius = Some(self.points.iter().map(|p| p[0].hypot(p[1])).collect());
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.points.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::Geometry(format!("point {i} has a non-finite coordinate")));
        }
        if let (Some(phi), Some(rho)) = (&self.azimuth, &self.radius) {
            if phi.len() != self.points.len() || rho.len() != self.points.len() {
                return Err(Error::Geometry("polar arrays do not match point count".into()));
            }
            for (i, ((p, &f), &r)) in self.points.iter().zip(phi).zip(rho).enumerate() {
                if r < 0.0 || !(0.0..std::f64::consts::TAU).contains(&f) {
                    return Err(Error::Geometry(format!("point {i} has azimuth {f} / radius {r} out of range")));
                }
                let tol = 1e-9 * (1.0 + r);
                if (r * f.cos() - p[0]).abs() > tol || (r * f.sin() - p[1]).abs() > tol {
                    return Err(Error::Geometry(format!("point {i} polar coordinates disagree with x/y")));
                }
            }
        }
        Ok(())
    }
}

/// Indexed triangle mesh.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point3>,
    pub faces: Vec<[usize; 3]>,
}

/// Faces smaller than this fraction of the squared bounding-box diagonal are
/// treated as degenerate.
const DEGENERATE_AREA_REL: f64 = 1e-14;

impl TriMesh {
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Self { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn face_points(&self, f: usize) -> [Point3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.face_points(f);
        triangle_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn bbox_diagonal(&self) -> f64 {
        if self.vertices.is_empty() {
            return 0.0;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        dist(lo, hi)
    }

    pub(crate) fn degenerate_area_threshold(&self) -> f64 {
        DEGENERATE_AREA_REL * self.bbox_diagonal().powi(2)
    }

    /// Number of faces incident to each undirected edge.
    pub fn edge_face_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Every edge is shared by at most two faces.
    pub fn is_edge_manifold(&self) -> bool {
        self.edge_face_counts().values().all(|&c| c <= 2)
    }

    /// Checks index range, degeneracy and edge manifoldness.
    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.vertices.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::Geometry(format!("vertex {i} has a non-finite coordinate")));
        }
        let n = self.vertices.len();
        let min_area = self.degenerate_area_threshold();
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::Geometry(format!("face {i} indexes past {n} vertices")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] || self.face_area(i) <= min_area {
                return Err(Error::Geometry(format!("face {i} is degenerate")));
            }
        }
        if let Some((&(a, b), &c)) = self.edge_face_counts().iter().find(|(_, &c)| c > 2) {
            return Err(Error::Geometry(format!("edge ({a}, {b}) is shared by {c} faces")));
        }
        Ok(())
    }
}
