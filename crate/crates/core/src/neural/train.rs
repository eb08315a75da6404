use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::mlp::Mlp;
use super::relnet::{segment_sums, stack_pairs, RelNet};
use super::target::sign;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a new best validation loss before stopping.
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Seeds the minibatch shuffling.
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            lr: adam.lr,
            batch_size: 32,
            max_epochs: 100,
            patience: 3,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::InvalidConfig(format!(
                "batch_size, max_epochs and patience must be positive, got {}, {}, {}",
                self.batch_size, self.max_epochs, self.patience
            )));
        }
        self.adam().validate()
    }
}

/// Precomputed network input for one scene and its target map.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    /// One row per microphone pair, as built by
    /// [`pair_features`](super::pair_features).
    pub pairs: Array2<f64>,
    pub target: Vec<f64>,
}

/// Parameter gradients of both MLPs.
#[derive(Debug, Clone)]
pub struct RelNetGradients {
    pub relation: Mlp,
    pub fusion: Mlp,
}

fn views<'a>(batch: &[&'a TrainingExample]) -> Vec<ArrayView2<'a, f64>> {
    batch.iter().map(|e| e.pairs.view()).collect()
}

fn check_targets(model: &RelNet, batch: &[&TrainingExample]) -> Result<()> {
    let cells = model.spec.num_cells();
    match batch.iter().find(|e| e.target.len() != cells) {
        Some(e) => Err(Error::DimensionMismatch { expected: cells, got: e.target.len() }),
        None => Ok(()),
    }
}

/// Mean MAE over the batch and its gradient with respect to every weight.
pub fn batch_gradients(model: &RelNet, batch: &[&TrainingExample]) -> Result<(f64, RelNetGradients)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset("batch"));
    }
    check_targets(model, batch)?;
    let width = model.spec.features.input_size();
    let (stacked, segments) = stack_pairs(&views(batch), width)?;
    let (relations, relation_cache) = model.relation.forward(stacked.view())?;
    let summed = segment_sums(&relations, &segments);
    let (out, fusion_cache) = model.fusion.forward(summed.view())?;

    let cells = model.spec.num_cells() as f64;
    let scale = 1.0 / (cells * batch.len() as f64);
    let mut loss = 0.0;
    let mut d_out = Array2::zeros(out.raw_dim());
    for (b, e) in batch.iter().enumerate() {
        for (k, &t) in e.target.iter().enumerate() {
            let d = out[[b, k]] - t;
            loss += d.abs();
            d_out[[b, k]] = sign(d) * scale;
        }
    }
    loss *= scale;

    let (fusion, d_summed) = model.fusion.backward(&fusion_cache, d_out.view())?;
    let mut d_relations = Array2::zeros(relations.raw_dim());
    for (b, &(lo, hi)) in segments.iter().enumerate() {
        for r in lo..hi {
            d_relations.row_mut(r).assign(&d_summed.row(b));
        }
    }
    let (relation, _) = model.relation.backward(&relation_cache, d_relations.view())?;
    Ok((loss, RelNetGradients { relation, fusion }))
}

/// Mean MAE over a dataset, evaluated in chunks of `batch_size`.
pub fn dataset_loss(model: &RelNet, examples: &[TrainingExample], batch_size: usize) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset("evaluation set"));
    }
    let mut total = 0.0;
    for chunk in examples.chunks(batch_size.max(1)) {
        let refs: Vec<&TrainingExample> = chunk.iter().collect();
        check_targets(model, &refs)?;
        let out = model.forward_batch(&views(&refs))?;
        for (b, e) in chunk.iter().enumerate() {
            let row = out.row(b);
            total += row.iter().zip(&e.target).map(|(p, t)| (p - t).abs()).sum::<f64>() / e.target.len() as f64;
        }
    }
    Ok(total / examples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were returned (1-based).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for r in &self.epochs {
            writeln!(out, "{},{:e},{:e}", r.epoch, r.train_loss, r.val_loss).expect("write to String");
        }
        out
    }
}

/// Minibatch Adam on the MAE loss with early stopping on the validation
/// loss. Returns the weights of the best validation epoch.
pub fn train(
    model: RelNet,
    train_set: &[TrainingExample],
    val_set: &[TrainingExample],
    config: &TrainConfig,
) -> Result<(RelNet, TrainHistory)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("training set"));
    }
    if val_set.is_empty() {
        return Err(Error::EmptyDataset("validation set"));
    }
    let mut model = model;
    let sizes: Vec<usize> =
        model.relation.params().iter().chain(model.fusion.params().iter()).map(|p| p.len()).collect();
    let mut adam = Adam::new(config.adam(), &sizes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut history = TrainHistory::default();
    let mut best = (f64::INFINITY, model.clone());
    let mut stale = 0;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&TrainingExample> = idx.iter().map(|&i| &train_set[i]).collect();
            let (loss, grads) = batch_gradients(&model, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NanLoss { epoch, batch: b });
            }
            total += loss * batch.len() as f64;
            let grads: Vec<&[f64]> = grads.relation.params().into_iter().chain(grads.fusion.params()).collect();
            let RelNet { relation, fusion, .. } = &mut model;
            let mut params: Vec<&mut [f64]> = relation.params_mut().into_iter().chain(fusion.params_mut()).collect();
            adam.step(&mut params, &grads)?;
        }
        let train_loss = total / train_set.len() as f64;
        let val_loss = dataset_loss(&model, val_set, config.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::NanLoss { epoch, batch: usize::MAX });
        }
        log::info!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5}");
        history.epochs.push(EpochRecord { epoch, train_loss, val_loss });
        if val_loss < best.0 {
            best = (val_loss, model.clone());
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                history.stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }
    Ok((best.1, history))
}
