//! Run configuration: a JSON file with every section optional, then
//! command-line overrides on top.

use std::path::Path;

use iris3d::classifier::PsnConfig;
use iris3d::phantom::PhantomParams;
use iris3d::pipeline::{BoundarySource, ExperimentConfig};
use iris3d::scan::ScanGeometry;
use iris3d::sectors::SectorConfig;
use iris3d::segnet::{SegTrainConfig, WrbNetConfig};
use iris3d::surface::SurfaceConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegnetSection {
    pub net: WrbNetConfig,
    pub train: SegTrainConfig,
    /// Synthetic training slices generated by `train --kind segnet`.
    pub slices: usize,
    /// Extra held-out slices scored after training.
    pub holdout: usize,
}

impl Default for SegnetSection {
    fn default() -> Self {
        Self {
            net: WrbNetConfig::default(),
            train: SegTrainConfig::default(),
            slices: 60,
            holdout: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSection {
    pub volumes: usize,
    pub train_fraction: f64,
    pub boundaries: BoundarySource,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Self {
            volumes: e.volumes,
            train_fraction: e.train_fraction,
            boundaries: e.boundaries,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Copied into every stochastic stage.
    pub seed: u64,
    pub geometry: ScanGeometry,
    pub phantom: PhantomParams,
    pub surface: SurfaceConfig,
    pub sectors: SectorConfig,
    pub classifier: PsnConfig,
    pub segnet: SegnetSection,
    pub experiment: ExperimentSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            geometry: ScanGeometry::default(),
            phantom: PhantomParams::default(),
            surface: SurfaceConfig::default(),
            sectors: SectorConfig::default(),
            classifier: PsnConfig::default(),
            segnet: SegnetSection::default(),
            experiment: ExperimentSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = crate::io::read_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Sets the global seed and hands it to every stage.
    pub fn propagate_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed {
            self.seed = s;
        }
        let s = self.seed;
        self.phantom.seed = s;
        self.surface.sampling.seed = s;
        self.sectors.seed = s;
        self.classifier.seed = s;
        self.segnet.train.seed = s;
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            volumes: self.experiment.volumes,
            train_fraction: self.experiment.train_fraction,
            seed: self.seed,
            boundaries: self.experiment.boundaries,
            geometry: self.geometry,
            surface: self.surface.clone(),
            sectors: self.sectors.clone(),
            classifier: self.classifier.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_files_fill_defaults() {
        let c: PipelineConfig = serde_json::from_str(r#"{"seed": 3, "geometry": {"slices": 64}}"#).unwrap();
        assert_eq!(c.geometry.slices, 64);
        assert_eq!(c.geometry.width, 512);
        assert_eq!(c.classifier, PsnConfig::default());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sed": 3}"#).is_err());
    }

    #[test]
    fn seed_reaches_every_stage() {
        let mut c = PipelineConfig::default();
        c.propagate_seed(Some(9));
        assert_eq!(
            [c.phantom.seed, c.surface.sampling.seed, c.sectors.seed, c.classifier.seed, c.segnet.train.seed],
            [9; 5]
        );
        assert_eq!(c.experiment().seed, 9);
    }
}
