use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::arch::{Kind, HEATMAP_CHANNELS, MAP_SIZE, PAF_CHANNELS};
use super::model::{depth_input, histogram_input, Model};
use crate::error::{Error, Result};
use crate::map::Map;
use crate::nn::{adam_step, mse_loss, split_channels, AdamConfig, AdamState, Tensor};
use crate::scene::dataset::Frame;
use crate::scene::LabelSet;
use crate::seed::{derive, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub batch_size: usize,
    pub epochs: usize,
    pub depth_weight: f32,
    pub heatmap_weight: f32,
    pub paf_weight: f32,
    /// Learning rate is multiplied by this factor after every epoch.
    pub lr_decay: f32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 20,
            depth_weight: 1.0,
            heatmap_weight: 1.0,
            paf_weight: 1.0,
            lr_decay: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.learning_rate,
            self.depth_weight,
            self.heatmap_weight,
            self.paf_weight,
            self.lr_decay,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0))
            || self.batch_size == 0
            || self.epochs == 0
        {
            return Err(Error::Config(format!(
                "training settings must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Stacked network inputs and supervision targets, one leading-axis item per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Examples {
    pub kind: Kind,
    pub inputs: Tensor,
    pub targets: Tensor,
}

impl Examples {
    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn batch(&self, idx: &[usize]) -> (Tensor, Tensor) {
        let gather = |t: &Tensor| {
            let mut shape = t.shape().to_vec();
            shape[0] = idx.len();
            let mut data = Vec::with_capacity(shape.iter().product());
            for &i in idx {
                data.extend_from_slice(t.item(i));
            }
            Tensor::from_vec(&shape, data).expect("gathered whole items")
        };
        (gather(&self.inputs), gather(&self.targets))
    }
}

/// Histogram inputs with their 32x32 depth labels.
pub fn depth_examples<'a>(frames: impl IntoIterator<Item = &'a Frame>) -> Result<Examples> {
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut n = 0;
    let mut dims = None;
    for f in frames {
        let h = &f.histogram;
        let d = (h.n_bins, h.grid_y, h.grid_x);
        if *dims.get_or_insert(d) != d || f.labels.depth32.width != MAP_SIZE {
            return Err(Error::Config(
                "frames disagree on histogram or label size".into(),
            ));
        }
        inputs.extend(histogram_input(h));
        targets.extend_from_slice(&f.labels.depth32.data);
        n += 1;
    }
    let (bins, gy, gx) = dims.ok_or_else(|| Error::Config("no frames to train on".into()))?;
    Ok(Examples {
        kind: Kind::Pixels2Depth,
        inputs: Tensor::from_vec(&[n, 1, bins, gy, gx], inputs)?,
        targets: Tensor::from_vec(&[n, 1, MAP_SIZE, MAP_SIZE], targets)?,
    })
}

/// Depth inputs (ground truth or predicted) with heatmap and PAF labels.
pub fn pose_examples(depths: &[&Map], labels: &[&LabelSet], depth_range: f32) -> Result<Examples> {
    if depths.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} depth maps for {} label sets",
            depths.len(),
            labels.len()
        )));
    }
    if depths.is_empty() {
        return Err(Error::Config("no frames to train on".into()));
    }
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for (d, l) in depths.iter().zip(labels) {
        if d.width != MAP_SIZE || d.height != MAP_SIZE || l.resolution != MAP_SIZE {
            return Err(Error::Config(format!(
                "pose training needs {MAP_SIZE}x{MAP_SIZE} depth and labels"
            )));
        }
        inputs.extend(depth_input(d, depth_range));
        targets.extend_from_slice(&l.heatmaps);
        targets.extend_from_slice(&l.pafs);
    }
    let n = depths.len();
    Ok(Examples {
        kind: Kind::Depth2Pose,
        inputs: Tensor::from_vec(&[n, 1, MAP_SIZE, MAP_SIZE], inputs)?,
        targets: Tensor::from_vec(
            &[n, HEATMAP_CHANNELS + PAF_CHANNELS, MAP_SIZE, MAP_SIZE],
            targets,
        )?,
    })
}

/// Loss of a batch and, when requested, the gradient for every graph output.
fn loss_and_grads(
    kind: Kind,
    outputs: &[&Tensor],
    targets: &Tensor,
    cfg: &TrainConfig,
    want_grads: bool,
) -> Result<(f64, Vec<Option<Tensor>>)> {
    let mut total = 0.0f64;
    let mut grads = Vec::with_capacity(outputs.len());
    let scale = |g: Tensor, w: f32| g.map(|v| v * w);
    match kind {
        Kind::Pixels2Depth => {
            let (l, g) = mse_loss(outputs[0], targets, None)?;
            total += (cfg.depth_weight * l) as f64;
            grads.push(want_grads.then(|| scale(g, cfg.depth_weight)));
        }
        Kind::Depth2Pose => {
            let parts = split_channels(targets, &[HEATMAP_CHANNELS, PAF_CHANNELS])?;
            for pair in outputs.chunks_exact(2) {
                let (lh, gh) = mse_loss(pair[0], &parts[0], None)?;
                let (lp, gp) = mse_loss(pair[1], &parts[1], None)?;
                total += (cfg.heatmap_weight * lh) as f64 + (cfg.paf_weight * lp) as f64;
                grads.push(want_grads.then(|| scale(gh, cfg.heatmap_weight)));
                grads.push(want_grads.then(|| scale(gp, cfg.paf_weight)));
            }
        }
    }
    if !total.is_finite() {
        return Err(Error::Numeric("training loss is not finite".into()));
    }
    Ok((total, grads))
}

/// Mean per-frame loss over a whole example set, evaluated in fixed-size chunks.
pub fn evaluate_loss(model: &Model, data: &Examples, cfg: &TrainConfig) -> Result<f64> {
    let mut sum = 0.0;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(cfg.batch_size.max(1)) {
        let (x, y) = data.batch(chunk);
        let outs = model.forward(x)?;
        let refs: Vec<&Tensor> = outs.iter().collect();
        let (l, _) = loss_and_grads(model.spec.kind, &refs, &y, cfg, false)?;
        sum += l * chunk.len() as f64;
    }
    Ok(sum / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

impl std::fmt::Display for EpochLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:.6e} {:.6e}",
            self.epoch, self.train_loss, self.val_loss
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

impl TrainReport {
    /// The loss log as text, one `epoch train val` line per epoch.
    pub fn log_text(&self) -> String {
        self.log.iter().map(|e| format!("{e}\n")).collect()
    }
}

/// Trains `model` in place with Adam over seeded shuffles and leaves it at the epoch with
/// the lowest validation loss (the untrained model counts as epoch 0).
pub fn train(
    model: &mut Model,
    train_set: &Examples,
    val_set: &Examples,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainReport> {
    cfg.validate()?;
    let kind = model.spec.kind;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Config(
            "training and validation sets must be non-empty".into(),
        ));
    }
    if train_set.kind != kind || val_set.kind != kind {
        return Err(Error::Config(format!(
            "examples do not match the heads of {}",
            model.spec.id()
        )));
    }
    let mut adam = AdamState::new(
        &model.params,
        AdamConfig {
            lr: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );
    let first = EpochLog {
        epoch: 0,
        train_loss: evaluate_loss(model, train_set, cfg)?,
        val_loss: evaluate_loss(model, val_set, cfg)?,
    };
    on_epoch(&first);
    let mut log = vec![first];
    let mut best = (first.val_loss, 0, model.params.clone());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, Stream::Shuffle, epoch as u64));
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, y) = train_set.batch(chunk);
            let acts = model.graph.forward(&model.params, x)?;
            let outs = model.graph.outputs(&acts);
            let (l, grads) = loss_and_grads(kind, &outs, &y, cfg, true)?;
            sum += l * chunk.len() as f64;
            let g = model.graph.backward(&model.params, &acts, grads)?;
            for (p, g) in model.params.iter_mut().zip(g.params) {
                if !g.all_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite gradient for {}",
                        p.name
                    )));
                }
                p.grad = g;
            }
            adam_step(&mut model.params, &mut adam)?;
        }
        adam.config.lr *= cfg.lr_decay;
        let entry = EpochLog {
            epoch,
            train_loss: sum / train_set.len() as f64,
            val_loss: evaluate_loss(model, val_set, cfg)?,
        };
        on_epoch(&entry);
        log.push(entry);
        if entry.val_loss < best.0 {
            best = (entry.val_loss, epoch, model.params.clone());
        }
    }
    model.params = best.2;
    for p in &mut model.params {
        p.zero_grad();
    }
    Ok(TrainReport {
        log,
        best_epoch: best.1,
    })
}
