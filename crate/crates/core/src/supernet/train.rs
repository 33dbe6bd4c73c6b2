use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::network::softmax_backward;
use super::state::SupernetState;
use crate::dataio::{LabeledDataset, Split};
use crate::diffcore::{adam_step, argmax_rows, sgd_step, softmax_cross_entropy, Tensor};
use crate::error::{Error, Result};
use crate::seed;

const EVAL_BATCH: usize = 64;
const ADAM_EPS: f64 = 1e-8;

/// A batch of images `[B, C, H, W]` with their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub images: Tensor,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn from_dataset(dataset: &LabeledDataset, indices: &[usize]) -> Self {
        let (images, labels) = dataset.batch(indices);
        Batch { images, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepMetrics {
    pub train_loss: f64,
    pub train_correct: usize,
    /// Validation loss of the logit step; `None` when logits are frozen.
    pub val_loss: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub train_acc: f64,
    pub val_acc: f64,
    pub train_loss: f64,
}

/// Accuracy and loss logged during a training run; steps count from the
/// start of the run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub points: Vec<CurvePoint>,
}

impl TrainingCurve {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// First logged step whose train accuracy reaches `threshold`.
    pub fn first_step_reaching(&self, threshold: f64) -> Option<usize> {
        self.points
            .iter()
            .find(|p| p.train_acc >= threshold)
            .map(|p| p.step)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,train_acc,val_acc,train_loss\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{},{}", p.step, p.train_acc, p.val_acc, p.train_loss);
        }
        out
    }
}

/// How edges are mixed during a run.
#[derive(Clone, Debug)]
pub(crate) enum Mixing {
    /// Softmax of the logits, which are trained too.
    Search,
    /// Fixed weights, e.g. the one-hot masks of a genotype.
    Fixed(Vec<f64>),
}

impl Mixing {
    fn weights(&self, state: &SupernetState) -> Vec<f64> {
        match self {
            Mixing::Search => state.arch.mixing_weights(None),
            Mixing::Fixed(w) => w.clone(),
        }
    }
}

fn check_classes(state: &SupernetState, dataset: &LabeledDataset) -> Result<()> {
    if state.num_classes != dataset.num_classes() {
        return Err(Error::Contract(format!(
            "head has {} classes but {} has {}",
            state.num_classes,
            dataset.name(),
            dataset.num_classes()
        )));
    }
    Ok(())
}

pub(crate) fn accuracy_with(
    state: &SupernetState,
    dataset: &LabeledDataset,
    split: Split,
    mix: &[f64],
) -> Result<f64> {
    check_classes(state, dataset)?;
    let indices = dataset.split(split);
    if indices.is_empty() {
        return Err(Error::Precondition(format!(
            "{} has an empty {split} split",
            dataset.name()
        )));
    }
    let mut correct = 0;
    for chunk in indices.chunks(EVAL_BATCH) {
        let (x, labels) = dataset.batch(chunk);
        let preds = argmax_rows(&state.logits(&x, mix)?);
        correct += preds.iter().zip(&labels).filter(|(p, l)| p == l).count();
    }
    Ok(correct as f64 / indices.len() as f64)
}

/// Top-1 accuracy of the supernet (softmax mixing) on one split.
pub fn evaluate(state: &SupernetState, dataset: &LabeledDataset, split: Split) -> Result<f64> {
    accuracy_with(state, dataset, split, &state.arch.mixing_weights(None))
}

/// Mean cross-entropy of the supernet (softmax mixing) on a batch.
pub fn supernet_loss(state: &SupernetState, batch: &Batch) -> Result<f64> {
    let logits = state.logits(&batch.images, &state.arch.mixing_weights(None))?;
    Ok(softmax_cross_entropy(&logits, &batch.labels)?.0)
}

/// Loss on a batch with gradients written into every parameter's `grad`,
/// including the logits.
pub fn supernet_gradients(state: &mut SupernetState, batch: &Batch) -> Result<f64> {
    let n_ops = state.config.num_ops();
    let mix = state.arch.mixing_weights(None);
    let (logits, cache) = state.forward(&batch.images, &mix, true)?;
    let (loss, d_logits) = softmax_cross_entropy(&logits, &batch.labels)?;
    state.zero_grads();
    let g_mix = state
        .backward(&batch.images, &cache, &d_logits, &mix, true, true)?
        .expect("requested");
    let alpha = &mut state.arch.alpha;
    alpha.grad = Tensor::from_vec(alpha.value.shape(), softmax_backward(&mix, &g_mix, n_ops))?;
    Ok(loss)
}

fn weight_phase(
    state: &mut SupernetState,
    batch: &Batch,
    mix: &[f64],
    config: &TrainConfig,
) -> Result<(f64, usize)> {
    let (logits, cache) = state.forward(&batch.images, mix, false)?;
    let (loss, d_logits) = softmax_cross_entropy(&logits, &batch.labels)?;
    let correct = argmax_rows(&logits)
        .iter()
        .zip(&batch.labels)
        .filter(|(p, l)| p == l)
        .count();
    state.zero_grads();
    state.backward(&batch.images, &cache, &d_logits, mix, true, false)?;
    for p in state.weight_params_mut() {
        sgd_step(p, config.w_lr, config.w_momentum, config.w_weight_decay);
    }
    Ok((loss, correct))
}

/// One bilevel step: an Adam step on the logits from the validation batch
/// with weights fixed, then a momentum-SGD step on the weights from the
/// training batch with uniformly perturbed logits.
pub fn train_step(
    state: &mut SupernetState,
    train: &Batch,
    val: &Batch,
    config: &TrainConfig,
) -> Result<StepMetrics> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Precondition("train_step needs non-empty batches".into()));
    }
    let n_ops = state.config.num_ops();
    let mut val_loss = None;
    if config.alpha_lr > 0.0 {
        let mix = state.arch.mixing_weights(None);
        let (logits, cache) = state.forward(&val.images, &mix, true)?;
        let (loss, d_logits) = softmax_cross_entropy(&logits, &val.labels)?;
        let g_mix = state
            .backward(&val.images, &cache, &d_logits, &mix, false, true)?
            .expect("requested");
        let g_alpha = softmax_backward(&mix, &g_mix, n_ops);
        let alpha = &mut state.arch.alpha;
        alpha.grad = Tensor::from_vec(alpha.value.shape(), g_alpha)?;
        adam_step(alpha, config.alpha_lr, config.alpha_beta1, config.alpha_beta2, ADAM_EPS);
        val_loss = Some(loss);
    }

    let mix = if config.perturb_radius > 0.0 {
        let r = config.perturb_radius;
        let mut rng = seed::rng(seed::derive_indexed(state.rng_seed, "perturb", state.step_count));
        let delta: Vec<f64> = (0..state.arch.alpha.value.len())
            .map(|_| rng.random_range(-r..=r))
            .collect();
        state.arch.mixing_weights(Some(&delta))
    } else {
        state.arch.mixing_weights(None)
    };
    let (train_loss, train_correct) = weight_phase(state, train, &mix, config)?;
    state.step_count += 1;
    if !state.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite parameters after step {}",
            state.step_count
        )));
    }
    Ok(StepMetrics {
        train_loss,
        train_correct,
        val_loss,
    })
}

pub(crate) fn run_training(
    state: &mut SupernetState,
    dataset: &LabeledDataset,
    config: &TrainConfig,
    mixing: &Mixing,
) -> Result<TrainingCurve> {
    config.validate()?;
    check_classes(state, dataset)?;
    let train_idx = dataset.split(Split::Train);
    let val_idx = dataset.split(Split::Val);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::Precondition(format!(
            "{} needs non-empty train and val splits",
            dataset.name()
        )));
    }
    let mut curve = TrainingCurve::default();
    let mut step = 0usize;
    let mut loss_sum = 0.0;
    let mut loss_count = 0usize;
    let mut val_cursor = 0usize;
    let mut val_order = val_idx.to_vec();
    for epoch in 0..config.epochs {
        let mut order = train_idx.to_vec();
        order.shuffle(&mut seed::rng(seed::derive_indexed(config.seed, "shuffle", epoch as u64)));
        for chunk in order.chunks(config.batch_size) {
            let train = Batch::from_dataset(dataset, chunk);
            let loss = match mixing {
                Mixing::Search => {
                    let mut val_batch = Vec::with_capacity(config.batch_size);
                    while val_batch.len() < config.batch_size.min(val_order.len()) {
                        if val_cursor == 0 {
                            val_order.shuffle(&mut seed::rng(seed::derive_indexed(
                                config.seed,
                                "val",
                                step as u64,
                            )));
                        }
                        val_batch.push(val_order[val_cursor]);
                        val_cursor = (val_cursor + 1) % val_order.len();
                    }
                    let val = Batch::from_dataset(dataset, &val_batch);
                    train_step(state, &train, &val, config)?.train_loss
                }
                Mixing::Fixed(mix) => {
                    let (loss, _) = weight_phase(state, &train, mix, config)?;
                    state.step_count += 1;
                    loss
                }
            };
            step += 1;
            loss_sum += loss;
            loss_count += 1;
            if step % config.curve_log_every == 0 {
                let mix = mixing.weights(state);
                curve.points.push(CurvePoint {
                    step,
                    train_acc: accuracy_with(state, dataset, Split::Train, &mix)?,
                    val_acc: accuracy_with(state, dataset, Split::Val, &mix)?,
                    train_loss: loss_sum / loss_count as f64,
                });
                loss_sum = 0.0;
                loss_count = 0;
            }
        }
    }
    Ok(curve)
}

/// Train for `config.epochs` epochs with a seeded shuffle per epoch; no
/// early stopping.
pub fn train_supernet(
    state: &mut SupernetState,
    dataset: &LabeledDataset,
    config: &TrainConfig,
) -> Result<TrainingCurve> {
    run_training(state, dataset, config, &Mixing::Search)
}
