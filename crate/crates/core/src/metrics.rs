//! Segmentation, boundary and classification metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scan::SliceBoundarySet;
use crate::segnet::{BoundaryPoint, Half, SegMask};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Self::default();
        for (pred, truth) in pairs {
            match (pred, truth) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    /// `tp / (tp + fn)`, or 1 when there are no positives to miss.
    pub fn sensitivity(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    /// `tn / (tn + fp)`, or 1 when there are no negatives.
    pub fn specificity(&self) -> f64 {
        if self.tn + self.fp == 0 {
            1.0
        } else {
            self.tn as f64 / (self.tn + self.fp) as f64
        }
    }

    /// `2tp / (2tp + fp + fn)`, or 1 when both sets are empty.
    pub fn dice(&self) -> f64 {
        let d = 2 * self.tp + self.fp + self.fn_;
        if d == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / d as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionMetrics {
    pub sensitivity: f64,
    pub dice: f64,
    pub accuracy: f64,
}

pub fn region_metrics(pred: &SegMask, gt: &SegMask) -> Result<RegionMetrics> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::shape(
            "region_metrics",
            format!("{}x{} vs {}x{}", pred.width(), pred.height(), gt.width(), gt.height()),
        ));
    }
    let c = ConfusionCounts::from_pairs(pred.labels().iter().zip(gt.labels()).map(|(&p, &g)| (p == 1, g == 1)));
    Ok(RegionMetrics {
        sensitivity: c.sensitivity(),
        dice: c.dice(),
        accuracy: c.accuracy(),
    })
}

fn by_column(points: &[BoundaryPoint]) -> BTreeMap<i64, f64> {
    let mut m = BTreeMap::new();
    for p in points {
        m.entry(p.x.round() as i64).or_insert(p.z);
    }
    m
}

/// Root mean squared depth difference over the columns both boundaries
/// cover, divided by the image height.
pub fn rnmse(pred: &[BoundaryPoint], gt: &[BoundaryPoint], image_height: usize) -> Result<f64> {
    if image_height == 0 {
        return Err(Error::invalid("image height must be positive"));
    }
    let gt = by_column(gt);
    let mut sum = 0.0;
    let mut n = 0usize;
    for (x, zp) in by_column(pred) {
        if let Some(zg) = gt.get(&x) {
            sum += (zp - zg) * (zp - zg);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid("boundaries share no columns"));
    }
    Ok((sum / n as f64).sqrt() / image_height as f64)
}

/// Symmetric Hausdorff distance, evaluated exhaustively.
pub fn hausdorff(a: &[[f64; 2]], b: &[[f64; 2]]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("Hausdorff distance needs two non-empty sets"));
    }
    let directed = |from: &[[f64; 2]], to: &[[f64; 2]]| {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| (p[0] - q[0]).hypot(p[1] - q[1]))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    Ok(directed(a, b).max(directed(b, a)))
}

/// Most peripheral point (largest `|x - center_column|`) of one boundary half;
/// the first such point wins ties.
pub fn tic_point(half: &[BoundaryPoint], center_column: f64) -> Option<BoundaryPoint> {
    half.iter().copied().fold(None, |best: Option<BoundaryPoint>, p| match best {
        Some(b) if (b.x - center_column).abs() >= (p.x - center_column).abs() => Some(b),
        _ => Some(p),
    })
}

/// Pixel distance between the predicted TIC point of a boundary half and
/// the reference point.
pub fn tic_error(pred_half: &[BoundaryPoint], center_column: f64, reference: BoundaryPoint) -> Result<f64> {
    let p = tic_point(pred_half, center_column).ok_or_else(|| Error::invalid("predicted boundary is empty"))?;
    Ok(p.dist(&reference))
}

/// Boundary metrics of a volume, averaged over the slices both sets share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMetrics {
    pub rnmse: f64,
    pub hausdorff: f64,
    /// Mean TIC error over every half that is non-empty on both sides.
    pub tic_error: f64,
    pub slices: usize,
}

impl BoundaryMetrics {
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("rnmse", self.rnmse),
            ("hausdorff", self.hausdorff),
            ("tic_error", self.tic_error),
            ("slices", self.slices as f64),
        ]
    }
}

pub fn boundary_metrics(
    pred: &SliceBoundarySet,
    gt: &SliceBoundarySet,
    image_height: usize,
    center_column: f64,
) -> Result<BoundaryMetrics> {
    let (mut rn, mut hd, mut tic) = (0.0, 0.0, 0.0);
    let (mut slices, mut tics) = (0usize, 0usize);
    for g in &gt.slices {
        let Some(p) = pred.slices.iter().find(|p| p.slice == g.slice) else {
            continue;
        };
        let pp: Vec<BoundaryPoint> = p.left.iter().chain(&p.right).copied().collect();
        let gp: Vec<BoundaryPoint> = g.left.iter().chain(&g.right).copied().collect();
        if pp.is_empty() || gp.is_empty() {
            continue;
        }
        rn += rnmse(&pp, &gp, image_height)?;
        let xy = |v: &[BoundaryPoint]| v.iter().map(|b| [b.x, b.z]).collect::<Vec<_>>();
        hd += hausdorff(&xy(&pp), &xy(&gp))?;
        slices += 1;
        for half in [Half::Left, Half::Right] {
            if let (false, Some(reference)) = (p.half(half).is_empty(), tic_point(g.half(half), center_column)) {
                tic += tic_error(p.half(half), center_column, reference)?;
                tics += 1;
            }
        }
    }
    if slices == 0 {
        return Err(Error::invalid("no slice has boundary points in both sets"));
    }
    Ok(BoundaryMetrics {
        rnmse: rn / slices as f64,
        hausdorff: hd / slices as f64,
        tic_error: if tics > 0 { tic / tics as f64 } else { f64::NAN },
        slices,
    })
}

/// Probability that a random positive outranks a random negative, ties
/// counted half (Mann–Whitney U / (n_pos · n_neg)).
pub fn auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("AUC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    /// `None` when only one class is present.
    pub auc: Option<f64>,
}

/// Class-1 probabilities `>= 0.5` count as positive predictions.
pub fn classification_metrics(scores: &[f64], labels: &[usize]) -> Result<ClassificationMetrics> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::invalid("need equally many scores and labels, at least one"));
    }
    if let Some(&l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::invalid(format!("label {l} is not binary")));
    }
    let c = ConfusionCounts::from_pairs(scores.iter().zip(labels).map(|(&s, &l)| (s >= 0.5, l == 1)));
    Ok(ClassificationMetrics {
        accuracy: c.accuracy(),
        sensitivity: c.sensitivity(),
        specificity: c.specificity(),
        auc: auc(scores, labels).ok(),
    })
}

impl ClassificationMetrics {
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        let mut v = vec![
            ("accuracy", self.accuracy),
            ("sensitivity", self.sensitivity),
            ("specificity", self.specificity),
        ];
        if let Some(a) = self.auc {
            v.push(("auc", a));
        }
        v
    }
}

impl RegionMetrics {
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("sensitivity", self.sensitivity),
            ("dice", self.dice),
            ("accuracy", self.accuracy),
        ]
    }
}

/// `{"name": value, ...}` with every value printed to 6 decimals, in the
/// given order. Non-finite values are written as `null`.
pub fn format_report<S: AsRef<str>>(entries: &[(S, f64)]) -> String {
    let body: Vec<String> = entries
        .iter()
        .map(|(k, v)| {
            let key = serde_json::to_string(k.as_ref()).expect("strings serialise");
            if v.is_finite() {
                format!("  {key}: {v:.6}")
            } else {
                format!("  {key}: null")
            }
        })
        .collect();
    format!("{{\n{}\n}}\n", body.join(",\n"))
}
