//! 15° azimuthal sectors and fixed-size per-sector point sets.

use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curvature::CurvatureField;
use crate::error::{Error, Result};
use crate::geometry::{azimuth, dist, Point3, TriMesh};
use crate::phantom::Label;

pub const SECTOR_COUNT: usize = 24;
pub const CHANNELS: usize = 8;
pub const DEFAULT_POINTS: usize = 256;

/// Sector of an azimuth in radians: half-open 15° bins starting at 0.
///
/// A snap of 1e-9 bin widths absorbs the rounding of angles such as
/// `15f64.to_radians()`, which would otherwise land just below the bin edge.
pub fn assign_sector(phi: f64) -> usize {
    let t = phi.rem_euclid(std::f64::consts::TAU) / (std::f64::consts::TAU / SECTOR_COUNT as f64);
    ((t + 1e-9).floor() as usize) % SECTOR_COUNT
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Subsample {
    #[default]
    Farthest,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SectorConfig {
    pub points: usize,
    pub subsample: Subsample,
    pub seed: u64,
    /// Stop at the first empty sector instead of collecting errors.
    pub strict: bool,
}

impl Default for SectorConfig {
    fn default() -> Self {
        Self {
            points: DEFAULT_POINTS,
            subsample: Subsample::Farthest,
            seed: 0,
            strict: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub volume: String,
    pub seed: u64,
}

/// Rows are `x, y, z, k1, k2, K, H, E`; coordinates are centred and scaled
/// to unit maximum norm, curvature channels are raw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorSample {
    pub sector_id: usize,
    pub label: Option<Label>,
    pub points: Vec<[f64; CHANNELS]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl SectorSample {
    pub fn validate(&self) -> Result<()> {
        if self.sector_id >= SECTOR_COUNT {
            return Err(Error::Format(format!("sector id {} out of range", self.sector_id)));
        }
        if self.points.is_empty() {
            return Err(Error::Format("sector sample has no points".into()));
        }
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Format("sector sample has non-finite values".into()));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct SectorBuild {
    pub samples: Vec<SectorSample>,
    /// Vertex count of each sector, before subsampling.
    pub raw_counts: [usize; SECTOR_COUNT],
    /// Sectors that could not be built (permissive mode only).
    pub errors: Vec<Error>,
}

/// Minimum number of usable vertices for a sector sample.
pub const MIN_SECTOR_VERTICES: usize = 3;

/// Partitions the vertices by azimuth and builds one sample per sector.
///
/// Sectors with at least `points` usable vertices are reduced by farthest
/// point sampling (or random subsampling); smaller ones keep every vertex and
/// are padded with bootstrap draws. Each sector uses a fresh generator seeded
/// with `cfg.seed`, so rotating the surface by a multiple of 15° only
/// relabels the sectors.
pub fn build_sector_samples(
    mesh: &TriMesh,
    field: &CurvatureField,
    label: Option<Label>,
    cfg: &SectorConfig,
) -> Result<SectorBuild> {
    if field.len() != mesh.vertex_count() {
        return Err(Error::invalid("curvature field does not match the mesh"));
    }
    if cfg.points == 0 {
        return Err(Error::invalid("points per sector must be positive"));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); SECTOR_COUNT];
    let mut raw_counts = [0usize; SECTOR_COUNT];
    for (i, v) in mesh.vertices.iter().enumerate() {
        let s = assign_sector(azimuth(v[0], v[1]));
        raw_counts[s] += 1;
        if field.get(i).is_some() {
            members[s].push(i);
        }
    }

    let mut samples = Vec::new();
    let mut errors = Vec::new();
    for (sector, idx) in members.iter().enumerate() {
        if idx.len() < MIN_SECTOR_VERTICES {
            let err = Error::EmptySector {
                sector,
                count: idx.len(),
            };
            if cfg.strict {
                return Err(err);
            }
            errors.push(err);
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let pts: Vec<Point3> = idx.iter().map(|&i| mesh.vertices[i]).collect();
        let chosen: Vec<usize> = if pts.len() >= cfg.points {
            match cfg.subsample {
                Subsample::Farthest => farthest_point_sampling(&pts, cfg.points, rng.gen_range(0..pts.len())),
                Subsample::Random => sample(&mut rng, pts.len(), cfg.points).into_vec(),
            }
        } else {
            let mut all: Vec<usize> = (0..pts.len()).collect();
            all.extend((pts.len()..cfg.points).map(|_| rng.gen_range(0..pts.len())));
            all
        };
        samples.push(SectorSample {
            sector_id: sector,
            label,
            points: normalized_rows(&chosen, &pts, idx, field),
            provenance: None,
        });
    }
    Ok(SectorBuild {
        samples,
        raw_counts,
        errors,
    })
}

fn normalized_rows(chosen: &[usize], pts: &[Point3], idx: &[usize], field: &CurvatureField) -> Vec<[f64; CHANNELS]> {
    let n = chosen.len() as f64;
    let mut c = [0.0; 3];
    for &j in chosen {
        for k in 0..3 {
            c[k] += pts[j][k] / n;
        }
    }
    let scale = chosen
        .iter()
        .map(|&j| dist(pts[j], c))
        .fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    chosen
        .iter()
        .map(|&j| {
            let f = field.get(idx[j]).expect("members have curvature").features();
            let p = pts[j];
            [
                (p[0] - c[0]) / scale,
                (p[1] - c[1]) / scale,
                (p[2] - c[2]) / scale,
                f[0],
                f[1],
                f[2],
                f[3],
                f[4],
            ]
        })
        .collect()
}

/// Greedy farthest-point order starting at `start`; ties go to the lowest index.
pub fn farthest_point_sampling(pts: &[Point3], count: usize, start: usize) -> Vec<usize> {
    let count = count.min(pts.len());
    let mut chosen = Vec::with_capacity(count);
    if count == 0 {
        return chosen;
    }
    let mut d = vec![f64::INFINITY; pts.len()];
    let mut cur = start;
    for _ in 0..count {
        chosen.push(cur);
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, p) in pts.iter().enumerate() {
            d[i] = d[i].min(dist(*p, pts[cur]));
            if d[i] > best.0 {
                best = (d[i], i);
            }
        }
        cur = best.1;
    }
    chosen
}

pub fn write_jsonl<W: Write>(samples: &[SectorSample], mut out: W) -> Result<()> {
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<SectorSample>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: SectorSample = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("sector dataset line {}: {e}", i + 1)))?;
        s.validate()?;
        out.push(s);
    }
    Ok(out)
}
