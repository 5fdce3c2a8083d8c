//! Principal curvatures by local quadric fitting, and the shape index.
//!
//! Sign convention: normals are oriented toward `+z`. A surface that bulges
//! toward `+z` (a dome seen from above) has negative curvature, a bowl has
//! positive curvature.
//!
//! The shape index is evaluated exactly as
//!
//! ```text
//! E = (2/π) · arctan((κ2 + κ1) / (κ2 − κ1)),   κ1 ≥ κ2
//! ```
//!
//! with `κ2 − κ1` in the denominator. This is the negative of Koenderink's
//! index: a bowl-shaped umbilic gives `E = −1` and a convex ridge
//! `(κ1, κ2) = (0, −c)` gives `E = +0.5` (a trough `(c, 0)` gives `−0.5`).

use std::io::Write;
use std::num::NonZero;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, TriMesh};

pub const DEFAULT_NEIGHBOURS: usize = 16;
pub const DEFAULT_EPS: f64 = 1e-12;

/// Fraction of vertices that must succeed for `curvature_field` to return.
pub const MIN_COVERAGE: f64 = 0.9;

/// Result of `shape_index`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeIndex {
    pub value: f64,
    pub planar: bool,
}

/// Shape index of a point with principal curvatures `k1 >= k2`.
///
/// Three branches, selected with the absolute tolerance `eps`:
/// - `|k2 - k1| > eps`: the formula evaluated literally;
/// - umbilic (`|k2 - k1| <= eps`, `|k1 + k2| > eps`): the one-sided limit
///   `-sign(k1 + k2)`;
/// - otherwise planar: `0` with the planar flag set.
///
/// Because `eps` is absolute, the branch choice (unlike the formula) is not
/// scale invariant for curvature gaps close to `eps`.
pub fn shape_index(k1: f64, k2: f64, eps: f64) -> Result<ShapeIndex> {
    if !k1.is_finite() || !k2.is_finite() {
        return Err(Error::invalid("curvatures must be finite"));
    }
    if k1 < k2 {
        return Err(Error::invalid(format!("need k1 >= k2, got k1={k1} k2={k2}")));
    }
    let diff = k2 - k1;
    let sum = k1 + k2;
    let (value, planar) = if diff.abs() > eps {
        ((2.0 / std::f64::consts::PI * (sum / diff).atan()).clamp(-1.0, 1.0), false)
    } else if sum.abs() > eps {
        (-sum.signum(), false)
    } else {
        (0.0, true)
    };
    Ok(ShapeIndex { value, planar })
}

/// Principal curvatures `(k1, k2)`, `k1 >= k2`, of the graph
/// `h = d·u + e·v + ½(L·u² + 2M·uv + N·v²)` at the origin, with the normal
/// on the `+h` side.
pub fn quadric_principal(d: f64, e: f64, l: f64, m: f64, n: f64) -> (f64, f64) {
    let (ee, ff, gg) = (1.0 + d * d, d * e, 1.0 + e * e);
    let w = (1.0 + d * d + e * e).sqrt();
    let (l, m, n) = (l / w, m / w, n / w);
    let det1 = ee * gg - ff * ff;
    let gauss = (l * n - m * m) / det1;
    let mean = (ee * n - 2.0 * ff * m + gg * l) / (2.0 * det1);
    let disc = (mean * mean - gauss).max(0.0).sqrt();
    (mean + disc, mean - disc)
}

/// k-nearest-neighbour quadric fitting over a fixed vertex set.
pub struct CurvatureEstimator<'a> {
    points: &'a [Point3],
    tree: ImmutableKdTree<f64, 3>,
    k: usize,
}

impl<'a> CurvatureEstimator<'a> {
    /// `k` neighbours are used per vertex, not counting the vertex itself.
    pub fn new(points: &'a [Point3], k: usize) -> Result<Self> {
        if k < 5 {
            return Err(Error::invalid("a quadric fit needs at least 5 neighbours"));
        }
        if points.len() < k + 1 {
            return Err(Error::invalid(format!(
                "{} vertices is too few for {k} neighbours",
                points.len()
            )));
        }
        let tree = ImmutableKdTree::new_from_slice(points)
            .map_err(|e| Error::Geometry(format!("cannot index vertices: {e}")))?;
        Ok(Self { points, tree, k })
    }

    pub fn principal(&self, vertex: usize) -> Result<(f64, f64)> {
        let p0 = *self
            .points
            .get(vertex)
            .ok_or_else(|| Error::invalid(format!("vertex {vertex} out of range")))?;
        let hood: Vec<Point3> = self
            .tree
            .query(&p0)
            .nearest_n::<SquaredEuclidean<f64>>(NonZero::new(self.k + 1).unwrap())
            .execute()
            .into_iter()
            .map(|r| self.points[r.item as usize])
            .collect();

        let c = hood
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + Vector3::from(*p))
            / hood.len() as f64;
        let mut cov = Matrix3::zeros();
        for p in &hood {
            let q = Vector3::from(*p) - c;
            cov += q * q.transpose();
        }
        let eig = cov.symmetric_eigen();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let (lo, mid, hi) = (order[0], order[1], order[2]);
        if !(eig.eigenvalues[mid] > 1e-12 * eig.eigenvalues[hi]) {
            return Err(Error::RankDeficient { vertex });
        }
        let mut normal: Vector3<f64> = eig.eigenvectors.column(lo).into();
        if normal.z < 0.0 {
            normal = -normal;
        }
        let axis: Vector3<f64> = eig.eigenvectors.column(hi).into();
        let [d, e, l, m, n] = fit_quadric(&hood, p0, normal, axis).ok_or(Error::RankDeficient { vertex })?;
        Ok(quadric_principal(d, e, l, m, n))
    }
}

/// Least-squares `[d, e, L, M, N]` of the graph over the tangent plane at
/// `p0`; `axis` fixes the in-plane orientation. Coordinates are scaled to
/// the neighbourhood radius for conditioning.
fn fit_quadric(hood: &[Point3], p0: Point3, normal: Vector3<f64>, axis: Vector3<f64>) -> Option<[f64; 5]> {
    let e1 = (axis - normal * axis.dot(&normal)).normalize();
    let e2 = normal.cross(&e1);
    let local: Vec<(f64, f64, f64)> = hood
        .iter()
        .map(|p| {
            let q = Vector3::from(*p) - Vector3::from(p0);
            (q.dot(&e1), q.dot(&e2), q.dot(&normal))
        })
        .collect();
    let scale = local.iter().map(|&(u, v, _)| u.hypot(v)).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    let a = DMatrix::from_fn(local.len(), 5, |r, col| {
        let (u, v, _) = local[r];
        let (u, v) = (u / scale, v / scale);
        match col {
            0 => u,
            1 => v,
            2 => 0.5 * u * u,
            3 => u * v,
            _ => 0.5 * v * v,
        }
    });
    let b = DVector::from_iterator(local.len(), local.iter().map(|&(_, _, h)| h));
    let svd = a.svd(true, true);
    if !(svd.singular_values.min() > 1e-10 * svd.singular_values.max()) {
        return None;
    }
    let x = svd.solve(&b, 0.0).ok()?;
    let s2 = scale * scale;
    Some([x[0] / scale, x[1] / scale, x[2] / s2, x[3] / s2, x[4] / s2])
}

/// Principal curvatures at one mesh vertex from its `k` nearest vertices.
pub fn estimate_principal(mesh: &TriMesh, vertex: usize, k: usize) -> Result<(f64, f64)> {
    CurvatureEstimator::new(&mesh.vertices, k)?.principal(vertex)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VertexCurvature {
    pub k1: f64,
    pub k2: f64,
    pub gaussian: f64,
    pub mean: f64,
    pub shape_index: f64,
    pub planar: bool,
}

impl VertexCurvature {
    pub fn from_principal(k1: f64, k2: f64, eps: f64) -> Result<Self> {
        let si = shape_index(k1, k2, eps)?;
        Ok(Self {
            k1,
            k2,
            gaussian: k1 * k2,
            mean: 0.5 * (k1 + k2),
            shape_index: si.value,
            planar: si.planar,
        })
    }

    /// `[k1, k2, K, H, E]`.
    pub fn features(&self) -> [f64; 5] {
        [self.k1, self.k2, self.gaussian, self.mean, self.shape_index]
    }
}

/// Per-vertex curvature; `None` where the local fit failed.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureField {
    pub values: Vec<Option<VertexCurvature>>,
    /// Indices of vertices whose fit failed.
    pub failed: Vec<usize>,
}

impl CurvatureField {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, vertex: usize) -> Option<&VertexCurvature> {
        self.values.get(vertex).and_then(Option::as_ref)
    }

    /// `k1` per vertex, with failed vertices replaced by the mean of the rest.
    pub fn max_curvature_filled(&self) -> Vec<f64> {
        let ok: Vec<f64> = self.values.iter().flatten().map(|c| c.k1).collect();
        let fill = if ok.is_empty() { 0.0 } else { ok.iter().sum::<f64>() / ok.len() as f64 };
        self.values.iter().map(|c| c.map_or(fill, |c| c.k1)).collect()
    }

    /// CSV with header `vertex,x,y,z,k1,k2,K,H,E,planar`; failed vertices are omitted.
    pub fn write_csv<W: Write>(&self, mesh: &TriMesh, mut out: W) -> Result<()> {
        if mesh.vertex_count() != self.values.len() {
            return Err(Error::invalid("curvature field does not match the mesh"));
        }
        writeln!(out, "vertex,x,y,z,k1,k2,K,H,E,planar")?;
        for (i, (v, c)) in mesh.vertices.iter().zip(&self.values).enumerate() {
            if let Some(c) = c {
                writeln!(
                    out,
                    "{i},{},{},{},{},{},{},{},{},{}",
                    v[0], v[1], v[2], c.k1, c.k2, c.gaussian, c.mean, c.shape_index, c.planar as u8
                )?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Curvature at every vertex. Fails only when fewer than 90% of the
/// vertices yield a fit.
pub fn curvature_field(mesh: &TriMesh, k: usize) -> Result<CurvatureField> {
    let est = CurvatureEstimator::new(&mesh.vertices, k)?;
    let mut values = Vec::with_capacity(mesh.vertex_count());
    let mut failed = Vec::new();
    for v in 0..mesh.vertex_count() {
        match est
            .principal(v)
            .and_then(|(k1, k2)| VertexCurvature::from_principal(k1, k2, DEFAULT_EPS))
        {
            Ok(c) => values.push(Some(c)),
            Err(e) => {
                log::debug!("curvature fit failed at vertex {v}: {e}");
                values.push(None);
                failed.push(v);
            }
        }
    }
    let total = values.len();
    if ((total - failed.len()) as f64) < MIN_COVERAGE * total as f64 {
        return Err(Error::CurvatureCoverage {
            failed: failed.len(),
            total,
            first: failed[0],
        });
    }
    Ok(CurvatureField { values, failed })
}
