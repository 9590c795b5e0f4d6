//! Adam training with step learning-rate decay, validation tracking and
//! best-checkpoint selection.

mod checkpoint;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, MultiGraph};
use crate::metrics::{self, EvalResult};
use crate::model::{LossWeights, Model, ModelConfig, ParamStore, Tape};
use crate::seed::{derive_seed, rng_for};
use crate::symh::{KeypointRecord, SymhTree};
use crate::synthesis::{perturb_keypoints, symmetry_free, GenConfig, Sample};

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub lr: f64,
    pub weight_decay: f64,
    /// Epochs between learning-rate decays.
    pub step_size: usize,
    pub decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weights: LossWeights,
    pub seed: u64,
    pub model: ModelConfig,
    /// Voxel resolution of the per-epoch validation IoU.
    pub val_resolution: usize,
    /// Keypoint jitter applied to training inputs, redrawn every epoch.
    pub augment_noise_sigma: f64,
    /// Engine keypoint drop probability applied to training inputs.
    pub augment_engine_drop: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 1e-5,
            step_size: 50,
            decay: 0.8,
            epochs: 200,
            batch_size: 64,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weights: LossWeights::default(),
            seed: 0,
            model: ModelConfig::default(),
            val_resolution: 32,
            augment_noise_sigma: 0.0,
            augment_engine_drop: 0.0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let positive = [("lr", self.lr), ("decay", self.decay), ("eps", self.eps)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.weight_decay < 0.0 || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("weight decay must be >= 0 and betas in [0, 1)".into()));
        }
        if self.step_size == 0 || self.batch_size == 0 {
            return Err(Error::Config("step size and batch size must be positive".into()));
        }
        let w = self.weights;
        if w.cls < 0.0 || w.sym < 0.0 || w.obb < 0.0 {
            return Err(Error::Config("loss weights must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.augment_engine_drop) || self.augment_noise_sigma < 0.0 {
            return Err(Error::Config("augmentation settings out of range".into()));
        }
        Ok(())
    }

    /// `lr · decay^⌊epoch / step_size⌋`, epochs counted from 0.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.decay.powi((epoch / self.step_size) as i32)
    }
}

/// A sample ready for the network: its graph and the supervising tree.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub id: String,
    pub keypoints: KeypointRecord,
    pub graph: MultiGraph,
    pub tree: SymhTree,
}

/// Builds graphs and, when the model is trained without symmetry, swaps in
/// symmetry-free trees.
pub fn prepare(samples: &[Sample], cfg: &ModelConfig) -> Result<Vec<Prepared>> {
    samples
        .iter()
        .map(|s| {
            Ok(Prepared {
                id: s.id.clone(),
                keypoints: s.keypoints.clone(),
                graph: build_graph(&s.keypoints)?,
                tree: if cfg.ablation.symmetry { s.tree.clone() } else { symmetry_free(&s.tree)? },
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_iou: f64,
    pub val_sms: f64,
}

impl EpochRecord {
    pub const CSV_HEADER: &'static str = "epoch,lr,train_loss,val_loss,val_IoU,val_SMS";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:.6},{:.6},{:.4},{:.4}",
            self.epoch, self.lr, self.train_loss, self.val_loss, self.val_iou, self.val_sms
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestModel {
    pub epoch: usize,
    pub val_loss: f64,
    pub store: ParamStore,
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub cfg: TrainingConfig,
    pub model: Model,
    pub adam_m: Vec<Array2<f64>>,
    pub adam_v: Vec<Array2<f64>>,
    pub adam_step: u64,
    /// Completed epochs.
    pub epoch: usize,
    pub rng: ChaCha8Rng,
    pub history: Vec<EpochRecord>,
    pub best: Option<BestModel>,
}

impl TrainState {
    pub fn new(cfg: TrainingConfig) -> Result<Self> {
        cfg.validate()?;
        let model = Model::new(cfg.model.clone(), cfg.seed)?;
        let zeros = model.store.zero_grads();
        Ok(Self {
            rng: rng_for(cfg.seed, "train/shuffle"),
            cfg,
            adam_m: zeros.clone(),
            adam_v: zeros,
            adam_step: 0,
            epoch: 0,
            model,
            history: Vec::new(),
            best: None,
        })
    }

    pub fn current_lr(&self) -> f64 {
        self.cfg.lr_at(self.epoch)
    }

    /// The model with the lowest validation loss seen so far, or the
    /// current one before any validation.
    pub fn best_model(&self) -> Model {
        let mut model = self.model.clone();
        if let Some(best) = &self.best {
            model.store = best.store.clone();
        }
        model
    }

    fn adam_update(&mut self, grads: &[Array2<f64>], lr: f64) {
        self.adam_step += 1;
        let c = &self.cfg;
        let t = self.adam_step as i32;
        let (bc1, bc2) = (1.0 - c.beta1.powi(t), 1.0 - c.beta2.powi(t));
        for (((p, g), m), v) in
            self.model.store.params_mut().zip(grads).zip(self.adam_m.iter_mut()).zip(self.adam_v.iter_mut())
        {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let update = (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
                *p -= lr * (update + c.weight_decay * *p);
            });
        }
    }

    fn update_running_stats(&mut self, tape: &Tape) {
        const MOMENTUM: f64 = 0.1;
        for s in &tape.bn_stats {
            let mean = self.model.store.buffer_mut(s.mean);
            ndarray::Zip::from(mean.row_mut(0))
                .and(&s.batch_mean)
                .for_each(|r, &b| *r = (1.0 - MOMENTUM) * *r + MOMENTUM * b);
            let var = self.model.store.buffer_mut(s.var);
            ndarray::Zip::from(var.row_mut(0))
                .and(&s.batch_var_unbiased)
                .for_each(|r, &b| *r = (1.0 - MOMENTUM) * *r + MOMENTUM * b);
        }
    }

    fn training_graphs(&self, train: &[Prepared], order: &[usize]) -> Result<Vec<MultiGraph>> {
        let c = &self.cfg;
        if c.augment_noise_sigma == 0.0 && c.augment_engine_drop == 0.0 {
            return Ok(order.iter().map(|&i| train[i].graph.clone()).collect());
        }
        let gen = GenConfig {
            noise_sigma: c.augment_noise_sigma,
            engine_drop: c.augment_engine_drop,
            ..GenConfig::default()
        };
        order
            .iter()
            .map(|&i| {
                let seed = derive_seed(c.seed, &format!("augment/{}/{}", self.epoch, i));
                build_graph(&perturb_keypoints(&train[i].keypoints, &gen, seed))
            })
            .collect()
    }

    /// One pass over the shuffled training set followed by validation.
    pub fn train_epoch(&mut self, train: &[Prepared], val: &[Prepared]) -> Result<EpochRecord> {
        if train.is_empty() || val.is_empty() {
            return Err(Error::Config("training and validation splits must be non-empty".into()));
        }
        let epoch = self.epoch;
        let lr = self.current_lr();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.rng);
        let graphs = self.training_graphs(train, &order)?;
        let (mut total, mut count) = (0.0, 0usize);
        for (b, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            let start = b * self.cfg.batch_size;
            let gs: Vec<&MultiGraph> = graphs[start..start + chunk.len()].iter().collect();
            let ts: Vec<&SymhTree> = chunk.iter().map(|&i| &train[i].tree).collect();
            let diverged = |loss: f64| Error::Diverged { epoch, batch: b, loss };
            let (tape, loss, parts) = match self.model.batch_loss(&gs, &ts, &self.cfg.weights, true) {
                Ok(x) => x,
                Err(Error::NonFinite { .. }) => return Err(diverged(f64::NAN)),
                Err(e) => return Err(e),
            };
            if !parts.total.is_finite() {
                return Err(diverged(parts.total));
            }
            let mut grads = self.model.store.zero_grads();
            tape.backward(loss, &mut grads).map_err(|_| diverged(parts.total))?;
            self.adam_update(&grads, lr);
            self.update_running_stats(&tape);
            total += parts.total * chunk.len() as f64;
            count += chunk.len();
        }
        let val_loss = evaluation_loss(&self.model, val, &self.cfg.weights, self.cfg.batch_size)?;
        let val_metrics = evaluate_free(&self.model, val, self.cfg.val_resolution)?;
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: total / count as f64,
            val_loss,
            val_iou: val_metrics.iou,
            val_sms: val_metrics.sms,
        };
        if self.best.as_ref().is_none_or(|b| val_loss < b.val_loss) {
            self.best = Some(BestModel { epoch, val_loss, store: self.model.store.clone() });
        }
        self.history.push(record);
        self.epoch += 1;
        Ok(record)
    }

    /// Trains until `cfg.epochs` epochs are complete, reporting each one.
    pub fn run(
        &mut self,
        train: &[Prepared],
        val: &[Prepared],
        mut on_epoch: impl FnMut(&EpochRecord),
    ) -> Result<()> {
        while self.epoch < self.cfg.epochs {
            let record = self.train_epoch(train, val)?;
            on_epoch(&record);
        }
        Ok(())
    }
}

/// Teacher-forced loss with running batch-norm statistics, averaged over
/// samples.
pub fn evaluation_loss(model: &Model, data: &[Prepared], weights: &LossWeights, batch_size: usize) -> Result<f64> {
    let (mut total, mut count) = (0.0, 0usize);
    for chunk in data.chunks(batch_size.max(1)) {
        let gs: Vec<&MultiGraph> = chunk.iter().map(|p| &p.graph).collect();
        let ts: Vec<&SymhTree> = chunk.iter().map(|p| &p.tree).collect();
        let (_, _, parts) = model.batch_loss(&gs, &ts, weights, false)?;
        total += parts.total * chunk.len() as f64;
        count += chunk.len();
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Mean metrics of freely decoded trees against the prepared trees.
pub fn evaluate_free(model: &Model, data: &[Prepared], resolution: usize) -> Result<EvalResult> {
    let results = data
        .iter()
        .map(|p| metrics::evaluate(&model.infer(&p.graph)?, &p.tree, resolution))
        .collect::<Result<Vec<_>>>()?;
    Ok(metrics::mean(&results))
}

/// Trains from scratch on `train`/`val`.
pub fn train(
    train: &[Prepared],
    val: &[Prepared],
    cfg: TrainingConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainState> {
    let mut state = TrainState::new(cfg)?;
    state.run(train, val, on_epoch)?;
    Ok(state)
}
