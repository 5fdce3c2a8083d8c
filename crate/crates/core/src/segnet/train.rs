use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SegMask, WrbNet};
use crate::error::{Error, Result};
use crate::nn::{ParamStore, Sgd, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SegTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 0.05,
            momentum: 0.9,
            batch_size: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegTrainReport {
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

impl SegTrainReport {
    pub fn initial_loss(&self) -> f64 {
        self.epoch_losses.first().copied().unwrap_or(f64::NAN)
    }

    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(f64::NAN)
    }
}

/// Mini-batch SGD with momentum on mean per-pixel cross-entropy. Visiting
/// order is reshuffled every epoch from `cfg.seed`.
pub fn segnet_train(
    net: &WrbNet,
    store: &mut ParamStore,
    dataset: &[(Tensor, SegMask)],
    cfg: &SegTrainConfig,
) -> Result<SegTrainReport> {
    if dataset.is_empty() {
        return Err(Error::invalid("segmentation training set is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Sgd::new(store, cfg.lr, cfg.momentum);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    store.zero_grad();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            for &i in batch {
                let (image, mask) = &dataset[i];
                let (g, loss) = net.loss_graph(store, image, mask)?;
                total += g.value(loss).data()[0];
                g.backward(loss, store)?;
            }
            store.scale_grads(1.0 / batch.len() as f64);
            opt.step(store);
        }
        epoch_losses.push(total / dataset.len() as f64);
    }
    Ok(SegTrainReport { epoch_losses })
}
