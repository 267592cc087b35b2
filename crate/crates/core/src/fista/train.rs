use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{FistaError, Model, Normalizer, POSE_DIM};
use crate::datagen::{window, SampleWindow, Trajectory};

/// Samples per gradient task. Fixed so the summation order does not depend
/// on the thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub val_fraction: f64,
    /// Training windows drawn (without replacement) per epoch; `None` uses all.
    pub samples_per_epoch: Option<usize>,
    /// Every `val_stride`-th validation window is scored.
    pub val_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            momentum: 0.9,
            batch: 64,
            epochs: 200,
            seed: 0,
            val_fraction: 0.1,
            samples_per_epoch: None,
            val_stride: 1,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), FistaError> {
        let bad = |m: &str| Err(FistaError::InvalidTraining(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch == 0 {
            return bad("batch must be at least 1");
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad("lr must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        if self.val_stride == 0 {
            return bad("val_stride must be at least 1");
        }
        if self.samples_per_epoch == Some(0) {
            return bad("samples_per_epoch must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    /// Dataset indices of the training and validation trajectories.
    pub train_trajectories: Vec<usize>,
    pub val_trajectories: Vec<usize>,
    pub train_windows: usize,
    pub val_windows: usize,
}

impl TrainingReport {
    /// Learning curve as `epoch,train_mse,val_mse`.
    pub fn write_curve(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "epoch,train_mse,val_mse")?;
        for e in &self.epochs {
            writeln!(w, "{},{},{}", e.epoch, e.train_mse, e.val_mse)?;
        }
        Ok(())
    }

    pub fn save_curve(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_curve(&mut w)?;
        w.flush()
    }
}

struct Prepared {
    history: Vec<f64>,
    target: [f64; POSE_DIM],
    label: [f64; POSE_DIM],
}

fn prepare(norm: &Normalizer, windows: &[&SampleWindow]) -> Vec<Prepared> {
    windows
        .iter()
        .map(|w| Prepared {
            history: norm.history(&w.history),
            target: norm.target(&w.target_ee),
            label: norm.label(&w.label_elbow),
        })
        .collect()
}

/// Splits trajectories into (train, validation) index lists.
pub(crate) fn split(n: usize, val_fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_val = ((val_fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1));
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

fn mean_loss(model: &Model, samples: &[Prepared]) -> Result<f64, FistaError> {
    let losses: Vec<f64> = samples
        .par_iter()
        .map(|s| {
            let (y, _) = model.forward_normalized(&s.history, &s.target)?;
            Ok(y.iter()
                .zip(&s.label)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / POSE_DIM as f64)
        })
        .collect::<Result<_, FistaError>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Summed loss and gradient over `batch`, reduced in a fixed order.
fn batch_gradient(model: &Model, batch: &[&Prepared]) -> Result<(f64, Vec<f64>), FistaError> {
    let scale = 1.0 / batch.len() as f64;
    let parts: Vec<(f64, Vec<f64>)> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; model.params.len()];
            let mut loss = 0.0;
            for s in chunk {
                loss += model.loss_and_grad(&s.history, &s.target, &s.label, scale, &mut g)?;
            }
            Ok((loss, g))
        })
        .collect::<Result<_, FistaError>>()?;
    let mut parts = parts.into_iter();
    let (mut loss, mut grad) = parts.next().expect("non-empty batch");
    for (l, g) in parts {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((loss, grad))
}

/// Trains `model` with momentum SGD on normalized MSE and returns the
/// parameters of the epoch with the lowest validation loss.
///
/// The split is by trajectory. The normalizer is refit on the training
/// windows and replaces the model's.
pub fn train(
    model: Model,
    dataset: &[Trajectory],
    hyper: &TrainConfig,
) -> Result<(Model, TrainingReport), FistaError> {
    train_with_progress(model, dataset, hyper, |_| {})
}

/// [`train`] with a callback after each epoch.
pub fn train_with_progress(
    mut model: Model,
    dataset: &[Trajectory],
    hyper: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(Model, TrainingReport), FistaError> {
    hyper.validate()?;
    if dataset.len() < 2 {
        return Err(FistaError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let (train_ids, val_ids) = split(dataset.len(), hyper.val_fraction, &mut rng);

    let windows = window(dataset, model.history_len());
    let mut is_val = vec![false; dataset.len()];
    for &i in &val_ids {
        is_val[i] = true;
    }
    let train_w: Vec<&SampleWindow> = windows.iter().filter(|w| !is_val[w.traj]).collect();
    let val_w: Vec<&SampleWindow> = windows
        .iter()
        .filter(|w| is_val[w.traj])
        .step_by(hyper.val_stride)
        .collect();
    if train_w.is_empty() || val_w.is_empty() {
        return Err(FistaError::EmptyDataset);
    }

    model.normalizer = Normalizer::fit(train_w.iter().copied())?;
    let train_set = prepare(&model.normalizer, &train_w);
    let val_set = prepare(&model.normalizer, &val_w);
    drop(windows);

    let per_epoch = hyper
        .samples_per_epoch
        .map_or(train_set.len(), |s| s.min(train_set.len()));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut velocity = vec![0.0; model.params.len()];
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut epochs = Vec::with_capacity(hyper.epochs);

    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for idx in order[..per_epoch].chunks(hyper.batch) {
            let batch: Vec<&Prepared> = idx.iter().map(|&i| &train_set[i]).collect();
            let (loss, grad) = batch_gradient(&model, &batch)?;
            loss_sum += loss;
            for ((p, v), g) in model.params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = hyper.momentum * *v + g;
                *p -= hyper.lr * *v;
            }
        }
        let stats = EpochStats {
            epoch,
            train_mse: loss_sum / per_epoch as f64,
            val_mse: mean_loss(&model, &val_set)?,
        };
        if stats.val_mse < best_val || !best_val.is_finite() {
            best_val = stats.val_mse;
            best_epoch = epoch;
            best.params.clone_from(&model.params);
            best.normalizer = model.normalizer.clone();
        }
        on_epoch(&stats);
        epochs.push(stats);
    }

    let report = TrainingReport {
        epochs,
        best_epoch,
        best_val_mse: best_val,
        train_trajectories: train_ids,
        val_trajectories: val_ids,
        train_windows: train_set.len(),
        val_windows: val_set.len(),
    };
    Ok((best, report))
}
