//! Desk-scale phantom experiment: balanced phantom volumes, surface
//! reconstruction, sector samples, a volume-level split and classifier
//! training.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{psn_train, PsnConfig, PsnReport, TrainedPsn};
use crate::error::{Error, Result};
use crate::phantom::{phantom_slices, sample_volume_params, Label};
use crate::scan::{ScanGeometry, SliceBoundary, SliceBoundarySet};
use crate::segnet::{extract_upper_boundary, SegMask};
use crate::sectors::{build_sector_samples, Provenance, SectorConfig, SectorSample};
use crate::surface::{reconstruct_surface, SurfaceConfig};

/// Where the reconstruction takes its slice boundaries from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundarySource {
    /// Top pixel of each mask column, as a segmentation would deliver.
    #[default]
    Masks,
    /// Sub-pixel analytic boundary of the phantom.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Total volume count; half of them are closure-like.
    pub volumes: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub boundaries: BoundarySource,
    pub geometry: ScanGeometry,
    pub surface: SurfaceConfig,
    pub sectors: SectorConfig,
    pub classifier: PsnConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            volumes: 100,
            train_fraction: 0.8,
            seed: 0,
            boundaries: BoundarySource::default(),
            geometry: ScanGeometry::default(),
            surface: SurfaceConfig::default(),
            sectors: SectorConfig::default(),
            classifier: PsnConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.volumes < 4 || self.volumes % 2 != 0 {
            return Err(Error::invalid("need an even number of at least 4 volumes"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid("train fraction must lie strictly between 0 and 1"));
        }
        self.geometry.validate()?;
        self.classifier.validate()
    }
}

/// Label and generator seed of every volume: the first half closure-like,
/// the second half open-like.
pub fn volume_plan(volumes: usize, seed: u64) -> Vec<(Label, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..volumes)
        .map(|i| {
            let label = if i < volumes / 2 { Label::Closure } else { Label::Open };
            (label, rng.gen())
        })
        .collect()
}

/// Splits volume indices per class so both sides keep the class balance.
/// Each side gets at least one volume of a class that has two or more.
/// Returns `(train, valid)`, each sorted.
pub fn split_volumes(labels: &[Label], train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for class in [Label::Closure, Label::Open] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let mut cut = (idx.len() as f64 * train_fraction).round() as usize;
        if idx.len() >= 2 {
            cut = cut.clamp(1, idx.len() - 1);
        }
        train.extend_from_slice(&idx[..cut]);
        valid.extend_from_slice(&idx[cut..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    (train, valid)
}

/// Sector samples of one generated volume.
pub fn volume_samples(
    label: Label,
    seed: u64,
    name: &str,
    cfg: &ExperimentConfig,
) -> Result<Vec<SectorSample>> {
    let params = sample_volume_params(label, seed);
    let vol = phantom_slices(&params, &cfg.geometry)?;
    let boundaries = match cfg.boundaries {
        BoundarySource::Exact => vol.boundaries,
        BoundarySource::Masks => masks_to_boundaries(&vol.masks),
    };
    let surface = reconstruct_surface(&boundaries, &cfg.geometry, &cfg.surface)?;
    let build = build_sector_samples(&surface.mesh, &surface.curvature, Some(vol.label), &cfg.sectors)?;
    for e in &build.errors {
        log::warn!("volume {name}: {e}");
    }
    Ok(build
        .samples
        .into_iter()
        .map(|mut s| {
            s.provenance = Some(Provenance {
                volume: name.to_string(),
                seed,
            });
            s
        })
        .collect())
}

/// Upper boundary of every slice mask, slice `i` being `masks[i]`.
pub fn masks_to_boundaries(masks: &[SegMask]) -> SliceBoundarySet {
    SliceBoundarySet {
        slices: masks
            .iter()
            .enumerate()
            .map(|(i, m)| SliceBoundary::from_upper(i, &extract_upper_boundary(m)))
            .collect(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub train_volumes: Vec<usize>,
    pub valid_volumes: Vec<usize>,
    pub classifier: PsnReport,
    pub seconds_data: f64,
    pub seconds_train: f64,
}

/// Builds every volume's samples with `build` (which may run in parallel),
/// then splits and trains.
pub fn run_experiment_with<F>(cfg: &ExperimentConfig, build: F) -> Result<(ExperimentReport, TrainedPsn)>
where
    F: FnOnce(&[(Label, u64)]) -> Result<Vec<Vec<SectorSample>>>,
{
    cfg.validate()?;
    let plan = volume_plan(cfg.volumes, cfg.seed);
    let t0 = Instant::now();
    let per_volume = build(&plan)?;
    if per_volume.len() != plan.len() {
        return Err(Error::invalid("sample builder returned the wrong number of volumes"));
    }
    let seconds_data = t0.elapsed().as_secs_f64();
    let labels: Vec<Label> = plan.iter().map(|p| p.0).collect();
    let (train_idx, valid_idx) = split_volumes(&labels, cfg.train_fraction, cfg.seed ^ 0x51_1e);
    let gather = |idx: &[usize]| -> Vec<SectorSample> { idx.iter().flat_map(|&i| per_volume[i].clone()).collect() };
    let (train, valid) = (gather(&train_idx), gather(&valid_idx));
    let t1 = Instant::now();
    let trained = psn_train(&train, &valid, &cfg.classifier)?;
    let report = ExperimentReport {
        train_volumes: train_idx,
        valid_volumes: valid_idx,
        classifier: trained.report.clone(),
        seconds_data,
        seconds_train: t1.elapsed().as_secs_f64(),
    };
    Ok((report, trained))
}

/// Sequential [`run_experiment_with`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentReport, TrainedPsn)> {
    run_experiment_with(cfg, |plan| {
        plan.iter()
            .enumerate()
            .map(|(i, &(label, seed))| volume_samples(label, seed, &format!("vol{i:03}"), cfg))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_is_balanced_and_seeded() {
        let a = volume_plan(10, 3);
        assert_eq!(a.iter().filter(|p| p.0 == Label::Closure).count(), 5);
        assert_eq!(a, volume_plan(10, 3));
        assert_ne!(a, volume_plan(10, 4));
    }

    #[test]
    fn split_keeps_classes_balanced() {
        let labels: Vec<Label> = volume_plan(100, 0).into_iter().map(|p| p.0).collect();
        let (train, valid) = split_volumes(&labels, 0.8, 9);
        assert_eq!((train.len(), valid.len()), (80, 20));
        assert_eq!(valid.iter().filter(|&&i| labels[i] == Label::Closure).count(), 10);
        let mut all: Vec<usize> = train.iter().chain(&valid).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let small: Vec<Label> = volume_plan(4, 0).into_iter().map(|p| p.0).collect();
        let (train, valid) = split_volumes(&small, 0.8, 1);
        assert_eq!((train.len(), valid.len()), (2, 2));
    }

    #[test]
    fn rejects_odd_volume_counts() {
        let cfg = ExperimentConfig {
            volumes: 5,
            ..Default::default()
        };
        assert!(run_experiment(&cfg).is_err());
    }
}
