//! Adam training with validation-ranked top-k checkpoints and probability
//! ensembling.

mod adam;
mod checkpoint;
mod registry;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use registry::{RegistryEntry, TopKRegistry, DEFAULT_TOP_K};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Graph;
use crate::data::{
    augment, epoch_order, make_batch, prepare_slices, restore_labels, AugmentConfig, Case, DataError, Slice,
};
use crate::error::TensorError;
use crate::loss::{combined_loss, labels_from_one_hot};
use crate::metrics::dice;
use crate::model::{CSegNet, ModelConfig};
use crate::tensor::Tensor;
use crate::volume::Volume;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("non-finite gradient for {0}")]
    NonFiniteGradient(String),
    #[error("training diverged: {0} consecutive non-finite steps at epoch {1}")]
    Diverged(usize, usize),
    #[error("gradient shape does not match parameter {0}")]
    GradientShape(String),
    #[error("no parameter named {0}")]
    UnknownParameter(String),
    #[error("checkpoints do not share a model configuration")]
    ConfigMismatch,
    #[error("ensemble needs at least one model")]
    EmptyEnsemble,
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    VersionUnsupported(u32),
    #[error("corrupt checkpoint: {0}")]
    CorruptEntry(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("empty training set")]
    EmptyTrainingSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub augment: AugmentConfig,
    pub top_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 8,
            seed: 0,
            adam: AdamConfig::default(),
            augment: AugmentConfig::default(),
            top_k: DEFAULT_TOP_K,
        }
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Mean 2-D Dice over validation slices for RVC, LVM, LVC.
    pub val_dice: [f64; 3],
    pub val_dice_mean: f64,
}

pub const LOG_HEADER: &str = "epoch,train_loss,val_dice_rvc,val_dice_lvm,val_dice_lvc,val_dice_mean";

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.epoch, self.train_loss, self.val_dice[0], self.val_dice[1], self.val_dice[2], self.val_dice_mean
        )
    }
}

pub fn log_csv(log: &[EpochLog]) -> String {
    let mut s = format!("{LOG_HEADER}\n");
    for row in log {
        let _ = writeln!(s, "{}", row.csv_row());
    }
    s
}

pub struct TrainOutcome {
    pub registry: TopKRegistry<Checkpoint>,
    pub log: Vec<EpochLog>,
    /// Model and optimizer state after the last epoch.
    pub last: Checkpoint,
}

/// Stable per-sample augmentation seed.
fn sample_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    let mut x =
        seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    x ^= x >> 33;
    x = x.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    x ^ (x >> 33)
}

/// One optimizer step on a batch. Returns the loss, or `None` when the loss
/// or a gradient was non-finite and the step was skipped.
pub fn train_step(
    model: &mut CSegNet<f32>,
    adam: &mut AdamState<f32>,
    images: &Tensor<f32>,
    target: &Tensor<f32>,
) -> Result<Option<f64>, TrainError> {
    let mut g = Graph::new();
    let x = g.constant(images.clone());
    let out = model.forward(&mut g, x, true)?;
    let loss = combined_loss(&mut g, out.main, &out.aux, target, &model.config.deep_supervision_weights)?;
    let value = f64::from(g.value(loss).item());
    if !value.is_finite() {
        return Ok(None);
    }
    let mut grads = g.backward(loss)?;
    let mut by_name = BTreeMap::new();
    for (name, var) in &out.bindings {
        if let Some(t) = grads.take(*var) {
            by_name.insert(name.clone(), t);
        }
    }
    match adam_step(adam, &mut model.params, &by_name) {
        Ok(()) => {}
        Err(TrainError::NonFiniteGradient(_)) => return Ok(None),
        Err(e) => return Err(e),
    }
    model.apply_batch_stats(&out.batch_stats);
    Ok(Some(value))
}

/// Per-class mean 2-D Dice of the model's predictions over `slices`.
pub fn validate(model: &CSegNet<f32>, slices: &[Slice], batch_size: usize) -> Result<[f64; 3], TrainError> {
    let mut sums = [0.0; 3];
    if slices.is_empty() {
        return Ok(sums);
    }
    let refs: Vec<&Slice> = slices.iter().collect();
    for chunk in refs.chunks(batch_size.max(1)) {
        let batch = make_batch(chunk, model.config.num_classes);
        let probs = model.predict_proba(&batch.images)?;
        let pred = labels_from_one_hot(&probs)?;
        let hw = chunk[0].h * chunk[0].w;
        for (p, t) in pred.chunks(hw).zip(batch.labels.chunks(hw)) {
            for (c, sum) in sums.iter_mut().enumerate() {
                let class = c as u8 + 1;
                let pm: Vec<bool> = p.iter().map(|&v| v == class).collect();
                let tm: Vec<bool> = t.iter().map(|&v| v == class).collect();
                *sum += dice(&pm, &tm);
            }
        }
    }
    Ok(sums.map(|s| s / slices.len() as f64))
}

/// Trains a freshly built model. `on_epoch` observes each log row as it is
/// produced.
pub fn train(
    model_config: &ModelConfig,
    train_cfg: &TrainConfig,
    train_slices: &[Slice],
    val_slices: &[Slice],
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, TrainError> {
    train_cfg.augment.validate()?;
    let mut model = CSegNet::<f32>::build(model_config.clone(), train_cfg.seed)?;
    let mut adam = AdamState::new(train_cfg.adam);
    let mut registry = TopKRegistry::new(train_cfg.top_k);
    let mut log = Vec::with_capacity(train_cfg.epochs);
    if train_cfg.epochs > 0 && train_slices.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    for epoch in 0..train_cfg.epochs {
        let order = epoch_order(train_slices.len(), train_cfg.seed, epoch);
        let (mut loss_sum, mut steps, mut bad_run) = (0.0, 0usize, 0usize);
        for chunk in order.chunks(train_cfg.batch_size.max(1)) {
            let augmented: Vec<Slice> = chunk
                .iter()
                .map(|&i| augment(&train_slices[i], &train_cfg.augment, sample_seed(train_cfg.seed, epoch, i)))
                .collect();
            let refs: Vec<&Slice> = augmented.iter().collect();
            let batch = make_batch(&refs, model_config.num_classes);
            match train_step(&mut model, &mut adam, &batch.images, &batch.target)? {
                Some(loss) => {
                    loss_sum += loss;
                    steps += 1;
                    bad_run = 0;
                }
                None => {
                    bad_run += 1;
                    if bad_run >= 2 {
                        return Err(TrainError::Diverged(bad_run, epoch));
                    }
                }
            }
        }
        let val_dice = validate(&model, val_slices, train_cfg.batch_size)?;
        let row = EpochLog {
            epoch,
            train_loss: if steps > 0 { loss_sum / steps as f64 } else { f64::NAN },
            val_dice,
            val_dice_mean: val_dice.iter().sum::<f64>() / 3.0,
        };
        on_epoch(&row);
        registry.offer(
            row.val_dice_mean,
            epoch,
            Checkpoint {
                config: model.config.clone(),
                params: model.params.clone(),
                adam: None,
                score: row.val_dice_mean,
                epoch,
            },
        );
        log.push(row);
    }
    let score = log.last().map_or(0.0, |r| r.val_dice_mean);
    let last = Checkpoint {
        config: model.config.clone(),
        params: model.params,
        adam: Some(adam),
        score,
        epoch: train_cfg.epochs.saturating_sub(1),
    };
    Ok(TrainOutcome { registry, log, last })
}

/// Mean of the members' softmax probabilities, accumulated in `f64`.
pub fn ensemble_proba(models: &[CSegNet<f32>], images: &Tensor<f32>) -> Result<Tensor<f32>, TrainError> {
    let first = models.first().ok_or(TrainError::EmptyEnsemble)?;
    if models.iter().any(|m| m.config != first.config) {
        return Err(TrainError::ConfigMismatch);
    }
    let mut acc: Vec<f64> = Vec::new();
    let mut shape = Vec::new();
    for m in models {
        let p = m.predict_proba(images)?;
        if acc.is_empty() {
            acc = vec![0.0; p.numel()];
            shape = p.shape().to_vec();
        }
        for (a, &v) in acc.iter_mut().zip(p.data()) {
            *a += f64::from(v);
        }
    }
    let k = models.len() as f64;
    Ok(Tensor::from_vec(&shape, acc.into_iter().map(|v| (v / k) as f32).collect()))
}

/// Label map `(B, H, W)` from the ensemble mean; ties go to the lowest class.
pub fn ensemble_predict(models: &[CSegNet<f32>], images: &Tensor<f32>) -> Result<Vec<u8>, TrainError> {
    Ok(labels_from_one_hot(&ensemble_proba(models, images)?)?)
}

/// Segments every slice of `case` with the ensemble and maps the labels back
/// onto the case's own grid.
pub fn predict_case(models: &[CSegNet<f32>], case: &Case) -> Result<Volume<u8>, TrainError> {
    let first = models.first().ok_or(TrainError::EmptyEnsemble)?;
    let size = first.config.input_size;
    let slices = prepare_slices(case, size);
    let refs: Vec<&Slice> = slices.iter().collect();
    let batch = make_batch(&refs, first.config.num_classes);
    let labels = ensemble_predict(models, &batch.images)?;
    let planes: Vec<Vec<u8>> = labels.chunks(size.0 * size.1).map(|p| restore_labels(p, size, case)).collect();
    let [_, h, w] = case.image.dims();
    Ok(Volume::from_slices(h, w, &planes).expect("planes share the case grid"))
}
