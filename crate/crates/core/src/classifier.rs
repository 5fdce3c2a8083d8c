//! PointNet-style sector classifier: a shared per-point MLP, a channel-wise
//! max over the points, and a small dense head producing two logits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{classification_metrics, ClassificationMetrics};
use crate::nn::{Graph, ParamId, ParamStore, Sgd, Tensor, Var};
use crate::sectors::{SectorSample, CHANNELS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsnConfig {
    /// Shared per-point layer widths, input channels first.
    pub point_widths: Vec<usize>,
    /// Head widths after pooling, ending in the class count.
    pub head_widths: Vec<usize>,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PsnConfig {
    fn default() -> Self {
        Self {
            point_widths: vec![CHANNELS, 64, 128],
            head_widths: vec![128, 64, 2],
            lr: 0.01,
            momentum: 0.9,
            epochs: 20,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl PsnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.point_widths.len() < 2 || self.point_widths[0] != CHANNELS {
            return Err(Error::invalid(format!(
                "per-point widths must start at {CHANNELS} channels and have at least one layer"
            )));
        }
        if self.head_widths.len() < 2 || self.head_widths.last() != Some(&2) {
            return Err(Error::invalid("head widths must end in 2 classes"));
        }
        if self.head_widths[0] != *self.point_widths.last().unwrap() {
            return Err(Error::invalid("head input width must match the pooled feature width"));
        }
        if self.point_widths.iter().chain(&self.head_widths).any(|&w| w == 0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("need lr > 0 and momentum in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

impl Dense {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, cin: usize, cout: usize) -> Self {
        let w = store.add_he(format!("{name}.w"), &[cout, cin], cin, rng);
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[cout]));
        Self { w, b }
    }

    fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        g.dense(x, w, b)
    }
}

/// Network structure; weights live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct PointNet {
    pub config: PsnConfig,
    point: Vec<Dense>,
    head: Vec<Dense>,
}

impl PointNet {
    pub fn new(config: PsnConfig, store: &mut ParamStore) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let point = config
            .point_widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(store, &mut rng, &format!("point{}", i + 1), w[0], w[1]))
            .collect();
        let head = config
            .head_widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(store, &mut rng, &format!("head{}", i + 1), w[0], w[1]))
            .collect();
        Ok(Self { config, point, head })
    }

    /// Pooled `[C, 1]` feature of a `[channels, N]` point tensor. Points
    /// whose mask entry is `false` are left out of the max.
    pub fn global_feature_graph(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        points: &Tensor,
        mask: Option<&[bool]>,
    ) -> Result<Var> {
        let (c, _) = points.dims2("psn_forward")?;
        let expected = store.get(self.point[0].w).value.shape()[1];
        if c != expected {
            return Err(Error::shape(
                "psn_forward",
                format!("points have {c} channels, weights expect {expected}"),
            ));
        }
        let mut x = g.input(points.clone());
        for layer in &self.point {
            x = layer.apply(g, store, x)?;
            x = g.relu(x)?;
        }
        g.max_over_points(x, mask)
    }

    /// Records the full forward pass; returns `[2, 1]` logits.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        points: &Tensor,
        mask: Option<&[bool]>,
    ) -> Result<Var> {
        let mut x = self.global_feature_graph(g, store, points, mask)?;
        for (i, layer) in self.head.iter().enumerate() {
            x = layer.apply(g, store, x)?;
            if i + 1 < self.head.len() {
                x = g.relu(x)?;
            }
        }
        Ok(x)
    }

    pub fn global_feature(&self, store: &ParamStore, points: &Tensor, mask: Option<&[bool]>) -> Result<Tensor> {
        let mut g = Graph::new();
        let v = self.global_feature_graph(&mut g, store, points, mask)?;
        Ok(g.value(v).clone())
    }

    /// Class logits `[open, closure]` of one sector sample.
    pub fn forward(&self, store: &ParamStore, sample: &SectorSample) -> Result<[f64; 2]> {
        sample.validate()?;
        let mut g = Graph::new();
        let y = self.forward_graph(&mut g, store, &points_tensor(sample), None)?;
        let d = g.value(y).data();
        Ok([d[0], d[1]])
    }

    /// Softmax probability of the closure class.
    pub fn score(&self, store: &ParamStore, sample: &SectorSample) -> Result<f64> {
        let [a, b] = self.forward(store, sample)?;
        Ok(1.0 / (1.0 + (a - b).exp()))
    }

    fn loss_graph(&self, store: &ParamStore, sample: &SectorSample, label: usize) -> Result<(Graph, Var)> {
        let mut g = Graph::new();
        let logits = self.forward_graph(&mut g, store, &points_tensor(sample), None)?;
        let loss = g.softmax_ce(logits, &[label])?;
        Ok((g, loss))
    }

    /// Cross-entropy of one labelled sample, for gradient checks.
    pub fn loss(&self, store: &mut ParamStore, sample: &SectorSample, backward: bool) -> Result<f64> {
        let label = class_of(sample)?;
        let (g, loss) = self.loss_graph(store, sample, label)?;
        if backward {
            g.backward(loss, store)?;
        }
        Ok(g.value(loss).data()[0])
    }
}

/// Channel-first `[CHANNELS, N]` tensor of a sample's rows.
pub fn points_tensor(sample: &SectorSample) -> Tensor {
    let n = sample.points.len();
    let mut data = vec![0.0; CHANNELS * n];
    for (j, row) in sample.points.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            data[c * n + j] = v;
        }
    }
    Tensor::new(&[CHANNELS, n], data).expect("shape matches data")
}

fn class_of(sample: &SectorSample) -> Result<usize> {
    sample
        .label
        .map(|l| l.class_index())
        .ok_or_else(|| Error::invalid(format!("sector {} has no label", sample.sector_id)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsnReport {
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub train_count: usize,
    pub valid_count: usize,
    pub valid: ClassificationMetrics,
}

#[derive(Debug, Clone)]
pub struct TrainedPsn {
    pub net: PointNet,
    pub store: ParamStore,
    pub report: PsnReport,
}

/// Closure-class scores of a batch of samples.
pub fn psn_scores(net: &PointNet, store: &ParamStore, samples: &[SectorSample]) -> Result<Vec<f64>> {
    samples.iter().map(|s| net.score(store, s)).collect()
}

/// Scores `samples` and summarises them against their labels.
pub fn psn_evaluate(net: &PointNet, store: &ParamStore, samples: &[SectorSample]) -> Result<ClassificationMetrics> {
    let labels = samples.iter().map(class_of).collect::<Result<Vec<_>>>()?;
    classification_metrics(&psn_scores(net, store, samples)?, &labels)
}

/// Mini-batch SGD with momentum; the visiting order is reshuffled every
/// epoch from `cfg.seed`, and gradients accumulate in a fixed order.
pub fn psn_train(train: &[SectorSample], valid: &[SectorSample], cfg: &PsnConfig) -> Result<TrainedPsn> {
    cfg.validate()?;
    let labels = train.iter().map(class_of).collect::<Result<Vec<_>>>()?;
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::invalid("training set must contain both classes"));
    }
    if valid.is_empty() {
        return Err(Error::invalid("validation set is empty"));
    }
    for s in train.iter().chain(valid) {
        s.validate()?;
    }
    let mut store = ParamStore::new();
    let net = PointNet::new(cfg.clone(), &mut store)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut opt = Sgd::new(&store, cfg.lr, cfg.momentum);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    store.zero_grad();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            for &i in batch {
                let (g, loss) = net.loss_graph(&store, &train[i], labels[i])?;
                total += g.value(loss).data()[0];
                g.backward(loss, &mut store)?;
            }
            store.scale_grads(1.0 / batch.len() as f64);
            opt.step(&mut store);
        }
        let mean = total / train.len() as f64;
        log::debug!("psn epoch {}: loss {mean:.6}", epoch + 1);
        epoch_losses.push(mean);
    }
    let valid_metrics = psn_evaluate(&net, &store, valid)?;
    Ok(TrainedPsn {
        net,
        store,
        report: PsnReport {
            epoch_losses,
            train_count: train.len(),
            valid_count: valid.len(),
            valid: valid_metrics,
        },
    })
}
