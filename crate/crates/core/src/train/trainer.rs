use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{error_sums, l1_loss, BatchLabels, ErrorSums, LossWeights};
use super::metrics::Metrics;
use super::normalize::fit_normalization;
use super::optim::{clip_grad_norm, cosine_lr, AdamW};
use super::split::{shuffled, SplitSpec};
use crate::error::{Error, Result};
use crate::graph::{AtomGraph, AtomicStructure};
use crate::model::{MlaNet, Prediction};
use crate::tensor::{Tape, Tensor};

fn default_lr() -> f64 {
    4e-4
}
fn default_wd() -> f64 {
    0.01
}
fn default_batch() -> usize {
    32
}
fn default_epochs() -> usize {
    100
}
fn default_shards() -> usize {
    4
}
fn default_true() -> bool {
    true
}

/// Optimization hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_wd")]
    pub weight_decay: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Cosine period in epochs; defaults to `epochs`.
    #[serde(default)]
    pub t_max: Option<usize>,
    #[serde(default)]
    pub lr_min: f64,
    #[serde(default)]
    pub loss: LossWeights,
    /// Global gradient-norm bound.
    #[serde(default)]
    pub grad_clip: Option<f64>,
    /// Fixed number of gradient shards per batch, one tape each, evaluated
    /// in parallel and summed in shard order.
    #[serde(default = "default_shards")]
    pub shards: usize,
    /// Fit reference energies and target scales before the first epoch.
    #[serde(default = "default_true")]
    pub fit_normalization: bool,
    /// Stop after this many epochs without validation improvement.
    #[serde(default)]
    pub early_stopping_patience: Option<usize>,
    #[serde(default)]
    pub split: SplitSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: default_lr(),
            weight_decay: default_wd(),
            batch_size: default_batch(),
            epochs: default_epochs(),
            seed: 0,
            t_max: None,
            lr_min: 0.0,
            loss: LossWeights::default(),
            grad_clip: None,
            shards: default_shards(),
            fit_normalization: true,
            early_stopping_patience: None,
            split: SplitSpec::default(),
        }
    }
}

impl TrainConfig {
    /// Published per-dataset learning rate, batch size and loss ratio.
    pub fn preset(name: &str) -> Result<Self> {
        let (lr, batch, ratio) = match name.to_ascii_lowercase().as_str() {
            "qm7" | "qm9" | "qm9s" => (4e-4, 128, "1:0"),
            "md17" => (4e-4, 128, "0:1000"),
            "mptrj_li" => (2e-3, 200, "1:1000"),
            "sio2" | "gesbte" | "phosphorus" | "bilayer_graphene" | "formate" => (4e-4, 32, "1:1000"),
            "water" => (4e-4, 16, "1:1000"),
            "charged" | "c10h2" | "ag3" | "nacl" => (4e-4, 128, "1:1000"),
            other => return Err(Error::Config(format!("unknown preset {other:?}"))),
        };
        Ok(TrainConfig {
            learning_rate: lr,
            batch_size: batch,
            loss: LossWeights::from_ratio(ratio)?,
            ..TrainConfig::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || self.shards == 0 {
            return Err(Error::Config("batch_size, epochs and shards must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || self.lr_min < 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Config("learning rates must be positive and weight decay non-negative".into()));
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("grad_clip must be positive".into()));
        }
        self.loss.validate()?;
        self.split.validate()
    }

    pub fn t_max(&self) -> usize {
        self.t_max.unwrap_or(self.epochs)
    }
}

/// Structures with their graphs, built once.
#[derive(Clone, Debug)]
pub struct Dataset {
    structures: Vec<AtomicStructure>,
    graphs: Vec<AtomGraph>,
}

impl Dataset {
    pub fn new(structures: Vec<AtomicStructure>, model: &MlaNet) -> Result<Self> {
        let graphs = structures.par_iter().map(|s| model.graph(s)).collect::<Result<Vec<_>>>()?;
        Ok(Dataset { structures, graphs })
    }

    pub fn len(&self) -> usize {
        self.structures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.structures.is_empty()
    }

    pub fn structures(&self) -> &[AtomicStructure] {
        &self.structures
    }

    pub fn structure(&self, i: usize) -> &AtomicStructure {
        &self.structures[i]
    }

    pub fn graph(&self, i: usize) -> &AtomGraph {
        &self.graphs[i]
    }

    pub fn select(&self, idx: &[usize]) -> Vec<&AtomicStructure> {
        idx.iter().map(|&i| &self.structures[i]).collect()
    }

    fn batch_graph(&self, idx: &[usize]) -> Result<AtomGraph> {
        let refs: Vec<&AtomGraph> = idx.iter().map(|&i| &self.graphs[i]).collect();
        AtomGraph::batch(&refs)
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_mae_energy: f64,
    pub train_mae_energy_per_atom: f64,
    pub train_mae_forces: Option<f64>,
    pub grad_norm: f64,
    pub val: Option<Metrics>,
    pub seconds: f64,
}

/// Progress counters that a checkpoint must carry for an exact resume.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainProgress {
    /// Completed epochs.
    pub epoch: usize,
    pub best_val: Option<f64>,
    pub stale_epochs: usize,
}

#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: MlaNet,
    pub optimizer: AdamW,
    pub config: TrainConfig,
    pub progress: TrainProgress,
}

/// Predictions for `idx`, batched `batch_size` at a time.
pub fn predict_indices(model: &MlaNet, data: &Dataset, idx: &[usize], batch_size: usize) -> Result<Vec<Prediction>> {
    let chunks: Vec<&[usize]> = idx.chunks(batch_size.max(1)).collect();
    let parts = chunks
        .par_iter()
        .map(|c| model.predict_graph(&data.batch_graph(c)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

pub fn evaluate(model: &MlaNet, data: &Dataset, idx: &[usize], batch_size: usize) -> Result<Metrics> {
    let preds = predict_indices(model, data, idx, batch_size)?;
    Metrics::compute(&preds, &data.select(idx))
}

impl Trainer {
    pub fn new(model: MlaNet, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if config.loss.forces > 0.0 && !model.has_force_head() {
            return Err(Error::Config("force loss weight set but the model has no force head".into()));
        }
        if config.loss.stress_weight() > 0.0 && !model.has_stress_head() {
            return Err(Error::Config("stress loss weight set but the stress head is disabled".into()));
        }
        let optimizer = AdamW::new(model.params(), config.weight_decay);
        Ok(Trainer {
            model,
            optimizer,
            config,
            progress: TrainProgress::default(),
        })
    }

    /// Fits reference energies and target scales on `idx`.
    pub fn fit_normalization(&mut self, data: &Dataset, idx: &[usize]) -> Result<()> {
        self.model.normalization = fit_normalization(&data.select(idx), self.model.species_index())?;
        Ok(())
    }

    pub fn lr_for_epoch(&self, epoch: usize) -> f64 {
        cosine_lr(epoch, self.config.t_max(), self.config.learning_rate, self.config.lr_min)
    }

    /// Loss, error sums and summed gradients of one batch.
    fn batch_gradients(&self, data: &Dataset, batch: &[usize]) -> Result<(f64, ErrorSums, Vec<Tensor>)> {
        let atoms: usize = batch.iter().map(|&i| data.structure(i).len()).sum();
        let n_shards = self.config.shards.min(batch.len());
        let size = batch.len().div_ceil(n_shards);
        let shards: Vec<&[usize]> = batch.chunks(size).collect();
        let w = self.config.loss;
        let model = &self.model;
        let results = shards
            .par_iter()
            .map(|shard| -> Result<(f64, ErrorSums, Vec<Tensor>)> {
                let structures = data.select(shard);
                let labels = BatchLabels::gather(&structures, &w)?;
                let g = data.batch_graph(shard)?;
                let mut tape = Tape::new();
                let p = model.params().bind(&mut tape, true);
                let out = model.forward(&mut tape, &g, &p)?;
                let loss = l1_loss(&mut tape, &out, &labels, &w, batch.len(), atoms)?;
                tape.backward(loss)?;
                let grads = p
                    .iter()
                    .enumerate()
                    .map(|(i, v)| tape.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(model.params().get(i).shape())))
                    .collect();
                Ok((tape.value(loss).data()[0], error_sums(&tape, &out, &structures), grads))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut iter = results.into_iter();
        let (mut loss, mut sums, mut grads) = iter.next().expect("at least one shard");
        for (l, s, g) in iter {
            loss += l;
            sums.energy_abs += s.energy_abs;
            sums.energy_abs_per_atom += s.energy_abs_per_atom;
            sums.force_abs += s.force_abs;
            for (a, b) in grads.iter_mut().zip(&g) {
                a.add_assign(b);
            }
        }
        Ok((loss, sums, grads))
    }

    /// One pass over `train` in a seeded order that depends only on the
    /// seed and the epoch number.
    pub fn train_epoch(&mut self, data: &Dataset, train: &[usize]) -> Result<EpochRecord> {
        if train.is_empty() {
            return Err(Error::Data("empty training set".into()));
        }
        let start = Instant::now();
        let epoch = self.progress.epoch;
        let lr = self.lr_for_epoch(epoch);
        let order: Vec<usize> = shuffled(train.len(), self.config.seed, epoch as u64 + 1)
            .into_iter()
            .map(|k| train[k])
            .collect();
        let (mut loss_sum, mut batches, mut grad_norm) = (0.0, 0usize, 0.0f64);
        let mut sums = ErrorSums::default();
        for batch in order.chunks(self.config.batch_size) {
            let (loss, s, mut grads) = self.batch_gradients(data, batch)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("non-finite loss at epoch {epoch}")));
            }
            let norm = match self.config.grad_clip {
                Some(c) => clip_grad_norm(&mut grads, c),
                None => grads.iter().map(|g| g.norm().powi(2)).sum::<f64>().sqrt(),
            };
            grad_norm = grad_norm.max(norm);
            self.optimizer.update(self.model.params_mut(), &grads, lr)?;
            loss_sum += loss;
            batches += 1;
            sums.energy_abs += s.energy_abs;
            sums.energy_abs_per_atom += s.energy_abs_per_atom;
            sums.force_abs += s.force_abs;
        }
        self.progress.epoch += 1;
        let structures = data.select(train);
        let labelled_e = structures.iter().filter(|s| s.energy.is_some()).count().max(1) as f64;
        let force_comps: usize = structures.iter().filter_map(|s| s.forces.as_ref()).map(|f| 3 * f.len()).sum();
        Ok(EpochRecord {
            epoch: self.progress.epoch,
            lr,
            train_loss: loss_sum / batches as f64,
            train_mae_energy: sums.energy_abs / labelled_e,
            train_mae_energy_per_atom: sums.energy_abs_per_atom / labelled_e,
            train_mae_forces: (force_comps > 0 && self.model.has_force_head())
                .then(|| sums.force_abs / force_comps as f64),
            grad_norm,
            val: None,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Trains until `config.epochs` (or early stopping), resuming from
    /// `progress.epoch`. `on_epoch` sees the trainer after each epoch.
    pub fn fit(
        &mut self,
        data: &Dataset,
        train: &[usize],
        val: &[usize],
        mut on_epoch: impl FnMut(&Trainer, &EpochRecord) -> Result<()>,
    ) -> Result<Vec<EpochRecord>> {
        if self.progress.epoch == 0 && self.optimizer.step == 0 && self.config.fit_normalization {
            self.fit_normalization(data, train)?;
        }
        let mut records = Vec::new();
        while self.progress.epoch < self.config.epochs {
            let mut rec = self.train_epoch(data, train)?;
            if !val.is_empty() {
                let m = evaluate(&self.model, data, val, self.config.batch_size)?;
                let score = m.mae_energy_per_atom + m.mae_forces.unwrap_or(0.0);
                match self.progress.best_val {
                    Some(b) if score >= b => self.progress.stale_epochs += 1,
                    _ => {
                        self.progress.best_val = Some(score);
                        self.progress.stale_epochs = 0;
                    }
                }
                rec.val = Some(m);
            }
            on_epoch(self, &rec)?;
            records.push(rec);
            if self
                .config
                .early_stopping_patience
                .is_some_and(|p| !val.is_empty() && self.progress.stale_epochs >= p)
            {
                break;
            }
        }
        Ok(records)
    }
}
