use std::collections::HashMap;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist, PointCloud3D, Point3, TriMesh};

/// Radii are in pixels and multiplied by `pixel_scale` to get length units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    /// Radius used where the curvature exceeds the global mean.
    pub r1: f64,
    /// Radius used elsewhere.
    pub r2: f64,
    /// Candidate pool size is `oversampling * area / r2²`.
    pub oversampling: f64,
    pub pixel_scale: f64,
    pub seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            r1: 6.0,
            r2: 10.0,
            oversampling: 10.0,
            pixel_scale: 1.0,
            seed: 0,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r1 > 0.0 && self.r1 < self.r2 && self.r2.is_finite()) {
            return Err(Error::invalid(format!("need 0 < r1 < r2, got r1={} r2={}", self.r1, self.r2)));
        }
        if !(self.oversampling >= 2.0) || !self.oversampling.is_finite() {
            return Err(Error::invalid("oversampling factor must be at least 2"));
        }
        if !(self.pixel_scale > 0.0 && self.pixel_scale.is_finite()) {
            return Err(Error::invalid("pixel_scale must be positive"));
        }
        Ok(())
    }

    /// `(r1, r2)` in length units.
    pub fn radii(&self) -> (f64, f64) {
        (self.r1 * self.pixel_scale, self.r2 * self.pixel_scale)
    }
}

#[derive(Debug, Clone)]
pub struct PoissonSamples {
    pub cloud: PointCloud3D,
    /// Disk radius each sample was accepted with.
    pub radii: Vec<f64>,
    /// Size of the candidate pool that was drawn.
    pub candidates: usize,
}

type Cell = (i64, i64, i64);

fn cell_of(p: Point3, size: f64) -> Cell {
    (
        (p[0] / size).floor() as i64,
        (p[1] / size).floor() as i64,
        (p[2] / size).floor() as i64,
    )
}

/// Curvature-adaptive dart throwing over the mesh surface.
///
/// Candidates are drawn uniformly over the surface area and visited in draw
/// order. A candidate takes radius `r1` if the curvature of its nearest mesh
/// vertex exceeds the mean over all vertices, `r2` otherwise, and is kept
/// unless an accepted sample lies closer than the smaller of the two radii.
pub fn poisson_disk_resample(mesh: &TriMesh, max_curvature: &[f64], p: &SamplingParams) -> Result<PoissonSamples> {
    p.validate()?;
    if max_curvature.len() != mesh.vertex_count() {
        return Err(Error::invalid(format!(
            "{} curvature values for {} vertices",
            max_curvature.len(),
            mesh.vertex_count()
        )));
    }
    if mesh.faces.is_empty() {
        return Err(Error::Geometry("cannot sample a mesh without faces".into()));
    }
    if max_curvature.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("curvature values must be finite"));
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::Geometry("mesh has zero surface area".into()));
    }

    let (r1, r2) = p.radii();
    let mean = max_curvature.iter().sum::<f64>() / max_curvature.len() as f64;
    let tree = ImmutableKdTree::<f64, 3>::new_from_slice(&mesh.vertices)
        .map_err(|e| Error::Geometry(format!("cannot index mesh vertices: {e}")))?;

    let pool = (p.oversampling * total / (r2 * r2)).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut points: Vec<Point3> = Vec::new();
    let mut radii: Vec<f64> = Vec::new();
    let mut grid: HashMap<Cell, Vec<usize>> = HashMap::new();

    for _ in 0..pool {
        let u: f64 = rng.gen::<f64>() * total;
        let f = cumulative.partition_point(|&c| c <= u).min(mesh.faces.len() - 1);
        let [a, b, c] = mesh.face_points(f);
        let (s, t): (f64, f64) = (rng.gen(), rng.gen());
        let sq = s.sqrt();
        let (wa, wb, wc) = (1.0 - sq, sq * (1.0 - t), sq * t);
        let q = [
            wa * a[0] + wb * b[0] + wc * c[0],
            wa * a[1] + wb * b[1] + wc * c[1],
            wa * a[2] + wb * b[2] + wc * c[2],
        ];

        let nearest = tree.query(&q).nearest_one::<SquaredEuclidean<f64>>().execute();
        let rq = if max_curvature[nearest.item as usize] > mean { r1 } else { r2 };

        let (cx, cy, cz) = cell_of(q, r2);
        let mut ok = true;
        'scan: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &j in list {
                            if dist(q, points[j]) < rq.min(radii[j]) {
                                ok = false;
                                break 'scan;
                            }
                        }
                    }
                }
            }
        }
        if ok {
            grid.entry((cx, cy, cz)).or_default().push(points.len());
            points.push(q);
            radii.push(rq);
        }
    }

    let cloud = PointCloud3D::new(points)?.with_polar();
    Ok(PoissonSamples {
        cloud,
        radii,
        candidates: pool,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(size: f64) -> TriMesh {
        TriMesh::new(
            vec![[0.0, 0.0, 0.0], [size, 0.0, 0.0], [size, size, 0.0], [0.0, size, 0.0]],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    fn min_pair_ok(s: &PoissonSamples) -> bool {
        let pts = &s.cloud.points;
        for i in 0..pts.len() {
            for j in 0..i {
                if dist(pts[i], pts[j]) < s.radii[i].min(s.radii[j]) {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn flat_quad_spacing_and_count() {
        let mesh = quad(100.0);
        let s = poisson_disk_resample(&mesh, &[0.0; 4], &SamplingParams::default()).unwrap();
        assert_eq!(s.candidates, 1000);
        assert!(s.radii.iter().all(|&r| r == 10.0));
        assert!(min_pair_ok(&s));
        let area = 1e4;
        let n = s.cloud.len() as f64;
        assert!(n >= area / (std::f64::consts::PI * 100.0) * 0.5 && n <= area / 50.0, "{n}");
    }

    #[test]
    fn small_triangle_gives_one_sample() {
        let mesh = TriMesh::new(vec![[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [0.0, 3.0, 0.0]], vec![[0, 1, 2]]).unwrap();
        let p = SamplingParams {
            oversampling: 400.0,
            ..Default::default()
        };
        let s = poisson_disk_resample(&mesh, &[0.0; 3], &p).unwrap();
        assert!(s.candidates > 1);
        assert_eq!(s.cloud.len(), 1);
    }

    #[test]
    fn curved_region_is_denser() {
        let mesh = quad(100.0);
        // vertex 0 is "curved": the corner around it takes r1
        let curv = [1.0, 0.0, 0.0, 0.0];
        let s = poisson_disk_resample(&mesh, &curv, &SamplingParams::default()).unwrap();
        assert!(min_pair_ok(&s));
        assert!(s.radii.iter().any(|&r| r == 6.0));
        assert!(s.radii.iter().any(|&r| r == 10.0));
        for (q, &r) in s.cloud.points.iter().zip(&s.radii) {
            let nearest0 = (0..4).min_by(|&a, &b| {
                dist(*q, mesh.vertices[a]).total_cmp(&dist(*q, mesh.vertices[b]))
            });
            assert_eq!(r == 6.0, nearest0 == Some(0));
        }
    }

    #[test]
    fn deterministic_and_validated() {
        let mesh = quad(50.0);
        let p = SamplingParams {
            seed: 9,
            ..Default::default()
        };
        let a = poisson_disk_resample(&mesh, &[0.0; 4], &p).unwrap();
        let b = poisson_disk_resample(&mesh, &[0.0; 4], &p).unwrap();
        assert_eq!(a.cloud, b.cloud);
        assert!(poisson_disk_resample(&mesh, &[0.0; 3], &p).is_err());
        let bad = SamplingParams {
            r1: 12.0,
            ..Default::default()
        };
        assert!(poisson_disk_resample(&mesh, &[0.0; 4], &bad).is_err());
        assert!(poisson_disk_resample(&TriMesh::default(), &[], &p).is_err());
    }
}
