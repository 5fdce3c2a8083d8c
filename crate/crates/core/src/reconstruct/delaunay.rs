//! Incremental (Bowyer–Watson) Delaunay triangulation of the plan view.
//!
//! Cocircular ties are resolved by insertion order: a point lying exactly on
//! a triangle's circumcircle does not invalidate it, so the output satisfies
//! the non-strict empty-circle property.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud3D, TriMesh};

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
struct Tri {
    v: [usize; 3],
    /// `nb[k]` is the triangle across edge `v[k] -> v[k+1]`.
    nb: [usize; 3],
    alive: bool,
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Positive when `d` is strictly inside the circumcircle of counter-clockwise `abc`.
fn incircle(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> f64 {
    let (adx, ady) = (a[0] - d[0], a[1] - d[1]);
    let (bdx, bdy) = (b[0] - d[0], b[1] - d[1]);
    let (cdx, cdy) = (c[0] - d[0], c[1] - d[1]);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

fn circumcircle(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> ([f64; 2], f64) {
    let (bx, by) = (b[0] - a[0], b[1] - a[1]);
    let (cx, cy) = (c[0] - a[0], c[1] - a[1]);
    let d = 2.0 * (bx * cy - by * cx);
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    let ux = (cy * b2 - by * c2) / d;
    let uy = (bx * c2 - cx * b2) / d;
    ([a[0] + ux, a[1] + uy], ux.hypot(uy))
}

struct Triangulation {
    pts: Vec<[f64; 2]>,
    tris: Vec<Tri>,
    stamp: Vec<usize>,
    last: usize,
}

impl Triangulation {
    fn tri_pts(&self, t: usize) -> [[f64; 2]; 3] {
        let v = self.tris[t].v;
        [self.pts[v[0]], self.pts[v[1]], self.pts[v[2]]]
    }

    fn locate(&self, p: [f64; 2]) -> Option<usize> {
        let mut t = self.last;
        let mut steps = 0;
        'walk: while steps < self.tris.len() {
            steps += 1;
            let tp = self.tri_pts(t);
            for k in 0..3 {
                if orient(tp[k], tp[(k + 1) % 3], p) < 0.0 {
                    let next = self.tris[t].nb[k];
                    if next == NONE {
                        return None;
                    }
                    t = next;
                    continue 'walk;
                }
            }
            return Some(t);
        }
        // the visibility walk can cycle on degenerate input; fall back to a scan
        (0..self.tris.len()).find(|&t| {
            self.tris[t].alive && {
                let tp = self.tri_pts(t);
                (0..3).all(|k| orient(tp[k], tp[(k + 1) % 3], p) >= 0.0)
            }
        })
    }

    /// Inserts point `i`; returns false if it duplicates an existing vertex.
    fn insert(&mut self, i: usize) -> Result<bool> {
        let p = self.pts[i];
        let t0 = self
            .locate(p)
            .ok_or_else(|| Error::Geometry(format!("point {i} could not be located")))?;
        if self.tris[t0].v.iter().any(|&v| self.pts[v] == p) {
            return Ok(false);
        }

        let mut cavity = vec![t0];
        self.stamp[t0] = i;
        let mut k = 0;
        while k < cavity.len() {
            let t = cavity[k];
            k += 1;
            for &n in &self.tris[t].nb {
                if n == NONE || self.stamp[n] == i {
                    continue;
                }
                let [a, b, c] = self.tri_pts(n);
                if incircle(a, b, c, p) > 0.0 {
                    self.stamp[n] = i;
                    cavity.push(n);
                }
            }
        }

        let mut by_start: HashMap<usize, usize> = HashMap::new();
        let mut by_end: HashMap<usize, usize> = HashMap::new();
        let mut created = Vec::new();
        for &t in &cavity {
            for e in 0..3 {
                let outer = self.tris[t].nb[e];
                if outer != NONE && self.stamp[outer] == i {
                    continue;
                }
                let (a, b) = (self.tris[t].v[e], self.tris[t].v[(e + 1) % 3]);
                let id = self.tris.len();
                self.tris.push(Tri {
                    v: [a, b, i],
                    nb: [outer, NONE, NONE],
                    alive: true,
                });
                self.stamp.push(NONE);
                if outer != NONE {
                    let slot = self.tris[outer].nb.iter().position(|&x| x == t).expect("adjacency is symmetric");
                    self.tris[outer].nb[slot] = id;
                }
                by_start.insert(a, id);
                by_end.insert(b, id);
                created.push(id);
            }
        }
        for &id in &created {
            let [a, b, _] = self.tris[id].v;
            self.tris[id].nb[1] = by_start[&b];
            self.tris[id].nb[2] = by_end[&a];
        }
        for &t in &cavity {
            self.tris[t].alive = false;
        }
        self.last = *created.last().expect("cavity has a boundary");
        Ok(true)
    }
}

/// Delaunay triangulation of the samples' `(x, y)` projection, lifted back
/// to the 3D sample positions. Faces are counter-clockwise in the plan view.
pub fn retriangulate(samples: &PointCloud3D) -> Result<TriMesh> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::Geometry(format!("need at least 3 points to triangulate, got {n}")));
    }
    let mut pts: Vec<[f64; 2]> = samples.points.iter().map(|p| [p[0], p[1]]).collect();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &pts {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let p0 = pts[0];
    let far = pts
        .iter()
        .copied()
        .max_by(|a, b| (a[0] - p0[0]).hypot(a[1] - p0[1]).total_cmp(&(b[0] - p0[0]).hypot(b[1] - p0[1])))
        .unwrap();
    let base = (far[0] - p0[0]).hypot(far[1] - p0[1]);
    let non_collinear = base > 0.0 && pts.iter().any(|&q| orient(p0, far, q).abs() > 1e-12 * base * span);
    if !non_collinear {
        return Err(Error::Geometry("all points are collinear in the plan view".into()));
    }

    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let m = 100.0 * span;
    pts.push([mid[0] - 2.0 * m, mid[1] - m]);
    pts.push([mid[0] + 2.0 * m, mid[1] - m]);
    pts.push([mid[0], mid[1] + 2.0 * m]);
    let mut tr = Triangulation {
        pts,
        tris: vec![Tri {
            v: [n, n + 1, n + 2],
            nb: [NONE; 3],
            alive: true,
        }],
        stamp: vec![NONE],
        last: 0,
    };
    let mut duplicates = 0;
    for i in 0..n {
        if !tr.insert(i)? {
            duplicates += 1;
        }
    }
    if duplicates > 0 {
        log::warn!("retriangulate: ignored {duplicates} duplicate plan-view points");
    }
    let faces = tr
        .tris
        .iter()
        .filter(|t| t.alive && t.v.iter().all(|&v| v < n))
        .map(|t| t.v)
        .collect();
    TriMesh::new(samples.points.clone(), faces)
}

/// Drops faces whose plan-view circumradius exceeds `max_radius`.
///
/// The Delaunay triangulation covers the convex hull, so it bridges holes
/// such as the pupil with large, thin triangles; this removes them. The
/// remaining faces keep the empty-circumcircle property.
pub fn prune_large_circumcircles(mesh: &TriMesh, max_radius: f64) -> TriMesh {
    let faces = mesh
        .faces
        .iter()
        .copied()
        .filter(|f| {
            let p = |i: usize| [mesh.vertices[f[i]][0], mesh.vertices[f[i]][1]];
            circumcircle(p(0), p(1), p(2)).1 <= max_radius
        })
        .collect();
    TriMesh {
        vertices: mesh.vertices.clone(),
        faces,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(xy: &[[f64; 2]]) -> PointCloud3D {
        PointCloud3D::new(xy.iter().map(|p| [p[0], p[1], 0.0]).collect()).unwrap()
    }

    /// Independent oracle: explicit circumcentre, distance compared with a
    /// tolerance relative to the circumradius.
    fn brute_force_delaunay(mesh: &TriMesh, tol: f64) -> bool {
        mesh.faces.iter().all(|f| {
            let p = |i: usize| mesh.vertices[f[i]];
            let (a, b, c) = (p(0), p(1), p(2));
            let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
            let sa = a[0] * a[0] + a[1] * a[1];
            let sb = b[0] * b[0] + b[1] * b[1];
            let sc = c[0] * c[0] + c[1] * c[1];
            let ox = (sa * (b[1] - c[1]) + sb * (c[1] - a[1]) + sc * (a[1] - b[1])) / d;
            let oy = (sa * (c[0] - b[0]) + sb * (a[0] - c[0]) + sc * (b[0] - a[0])) / d;
            let r = (a[0] - ox).hypot(a[1] - oy);
            mesh.vertices.iter().all(|q| (q[0] - ox).hypot(q[1] - oy) >= r - tol * r.max(1.0))
        })
    }

    #[test]
    fn three_points_one_triangle() {
        let m = retriangulate(&cloud(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])).unwrap();
        assert_eq!(m.faces.len(), 1);
    }

    #[test]
    fn square_with_centre() {
        let m = retriangulate(&cloud(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]])).unwrap();
        assert_eq!(m.faces.len(), 4);
        assert!(m.faces.iter().all(|f| f.contains(&4)));
        assert!(brute_force_delaunay(&m, 1e-9));
    }

    #[test]
    fn regular_grid_is_valid() {
        let mut xy = Vec::new();
        for i in 0..12 {
            for j in 0..9 {
                xy.push([i as f64 * 2.0, j as f64 * 2.0]);
            }
        }
        let m = retriangulate(&cloud(&xy)).unwrap();
        assert_eq!(m.faces.len(), 2 * 11 * 8);
        assert!(brute_force_delaunay(&m, 1e-9));
        assert!((m.total_area() - 22.0 * 16.0).abs() < 1e-9);
    }

    #[test]
    fn random_points_and_euler_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xy: Vec<[f64; 2]> = (0..400).map(|_| [rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)]).collect();
        let m = retriangulate(&cloud(&xy)).unwrap();
        assert!(brute_force_delaunay(&m, 1e-9));
        for f in 0..m.face_count() {
            let [a, b, c] = m.face_points(f);
            assert!(orient([a[0], a[1]], [b[0], b[1]], [c[0], c[1]]) > 0.0);
        }
        // triangles = 2n - 2 - hull size; hull of 400 uniform points is small
        let t = m.face_count();
        assert!(t <= 2 * 400 - 5 && t >= 2 * 400 - 2 - 60, "{t}");
    }

    #[test]
    fn collinear_is_rejected() {
        assert!(retriangulate(&cloud(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [5.0, 5.0]])).is_err());
        assert!(retriangulate(&cloud(&[[0.0, 0.0], [1.0, 1.0]])).is_err());
    }

    #[test]
    fn pruning_removes_hole_bridges() {
        let mut xy = Vec::new();
        for k in 0..60 {
            let phi = k as f64 * std::f64::consts::TAU / 60.0;
            for r in [20.0, 26.0, 32.0] {
                xy.push([r * phi.cos(), r * phi.sin()]);
            }
        }
        let m = retriangulate(&cloud(&xy)).unwrap();
        let pruned = prune_large_circumcircles(&m, 8.0);
        assert!(pruned.faces.len() < m.faces.len());
        for f in &pruned.faces {
            let c: Vec<f64> = f.iter().map(|&i| xy[i][0].hypot(xy[i][1])).collect();
            assert!(c.iter().any(|&r| r > 21.0), "face inside the hole survived");
        }
        assert!(brute_force_delaunay(&pruned, 1e-9));
    }
}
