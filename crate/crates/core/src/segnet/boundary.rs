use serde::{Deserialize, Serialize};

use super::SegMask;

/// A boundary sample in image pixel coordinates: `x` is the column, `z` the
/// depth (row index, growing downwards).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub x: f64,
    pub z: f64,
}

impl BoundaryPoint {
    pub fn new(x: f64, z: f64) -> Self {
        Self { x, z }
    }

    pub fn dist(&self, other: &BoundaryPoint) -> f64 {
        (self.x - other.x).hypot(self.z - other.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Half {
    Left,
    Right,
}

impl Half {
    pub fn as_str(self) -> &'static str {
        match self {
            Half::Left => "left",
            Half::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Half> {
        match s {
            "left" | "L" | "l" => Some(Half::Left),
            "right" | "R" | "r" => Some(Half::Right),
            _ => None,
        }
    }
}

/// Upper iris boundary of one slice. Each half is a list of runs of
/// consecutive columns; a missing column starts a new run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpperBoundary {
    pub left: Vec<Vec<BoundaryPoint>>,
    pub right: Vec<Vec<BoundaryPoint>>,
}

impl UpperBoundary {
    pub fn is_empty(&self) -> bool {
        self.left.is_empty() && self.right.is_empty()
    }

    pub fn half(&self, half: Half) -> &[Vec<BoundaryPoint>] {
        match half {
            Half::Left => &self.left,
            Half::Right => &self.right,
        }
    }

    /// All points of one half, in increasing `x`.
    pub fn points(&self, half: Half) -> Vec<BoundaryPoint> {
        self.half(half).iter().flatten().copied().collect()
    }

    pub fn polylines(&self) -> impl Iterator<Item = &Vec<BoundaryPoint>> {
        self.left.iter().chain(&self.right)
    }
}

/// Column-wise topmost iris pixel of `mask`.
///
/// Columns without iris break the boundary into runs. The widest interior
/// gap is taken as the pupil and splits the runs into left and right halves;
/// when there is no interior gap the single run goes to the half holding its
/// midpoint.
pub fn extract_upper_boundary(mask: &SegMask) -> UpperBoundary {
    let (w, h) = (mask.width(), mask.height());
    let tops: Vec<Option<usize>> = (0..w).map(|x| (0..h).find(|&z| mask.get(x, z))).collect();

    let mut runs: Vec<Vec<BoundaryPoint>> = Vec::new();
    let mut prev: Option<usize> = None;
    for (x, top) in tops.iter().enumerate() {
        if let Some(z) = *top {
            let p = BoundaryPoint::new(x as f64, z as f64);
            match prev {
                Some(px) if px + 1 == x => runs.last_mut().unwrap().push(p),
                _ => runs.push(vec![p]),
            }
            prev = Some(x);
        }
    }

    let mut out = UpperBoundary::default();
    match runs.len() {
        0 => {}
        1 => {
            let run = runs.pop().unwrap();
            let mid = 0.5 * (run[0].x + run[run.len() - 1].x);
            if mid < w as f64 / 2.0 {
                out.left.push(run);
            } else {
                out.right.push(run);
            }
        }
        _ => {
            // widest gap; ties go to the one nearest the image centre
            let centre = w as f64 / 2.0;
            let split = (1..runs.len())
                .max_by(|&a, &b| {
                    let gap = |i: usize| runs[i][0].x - runs[i - 1].last().unwrap().x;
                    let off = |i: usize| (0.5 * (runs[i][0].x + runs[i - 1].last().unwrap().x) - centre).abs();
                    gap(a)
                        .partial_cmp(&gap(b))
                        .unwrap()
                        .then(off(b).partial_cmp(&off(a)).unwrap())
                })
                .unwrap();
            out.right = runs.split_off(split);
            out.left = runs;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(w: usize, h: usize, on: &[(usize, usize)]) -> SegMask {
        let mut m = SegMask::empty(w, h);
        for &(x, z) in on {
            m.set(x, z, true);
        }
        m
    }

    #[test]
    fn empty_mask_gives_empty_boundary() {
        assert!(extract_upper_boundary(&SegMask::empty(8, 8)).is_empty());
    }

    #[test]
    fn single_row() {
        let pts: Vec<_> = (10..=20).map(|x| (x, 7)).collect();
        let b = extract_upper_boundary(&mask_from(64, 16, &pts));
        assert_eq!(b.left.len() + b.right.len(), 1);
        let line = b.polylines().next().unwrap();
        assert_eq!(line.len(), 11);
        for (i, p) in line.iter().enumerate() {
            assert_eq!(*p, BoundaryPoint::new(10.0 + i as f64, 7.0));
        }
    }

    #[test]
    fn two_components_split_into_halves() {
        let mut pts = Vec::new();
        for x in 2..12 {
            for z in 5..9 {
                pts.push((x, z));
            }
        }
        for x in 20..30 {
            for z in 3..6 {
                pts.push((x, z));
            }
        }
        let b = extract_upper_boundary(&mask_from(32, 12, &pts));
        assert_eq!(b.left.len(), 1);
        assert_eq!(b.right.len(), 1);
        assert!(b.left[0].iter().all(|p| p.z == 5.0));
        assert!(b.right[0].iter().all(|p| p.z == 3.0));
    }

    #[test]
    fn narrow_gap_inside_a_half_is_a_break() {
        // left half has a one-column hole at x=5; the pupil gap is 10..20
        let mut pts: Vec<_> = (1..5).chain(6..10).map(|x| (x, 4)).collect();
        pts.extend((20..28).map(|x| (x, 4)));
        let b = extract_upper_boundary(&mask_from(32, 8, &pts));
        assert_eq!(b.left.len(), 2);
        assert_eq!(b.right.len(), 1);
    }
}
