//! Mini-batch Adam training with gradient clipping and early stopping.

use std::time::Instant;

use log::info;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TaggerModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    /// Notes per update.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without held-out improvement before stopping.
    pub patience: usize,
    /// Global L2 norm limit on the gradient.
    pub clip_norm: f64,
    /// Share of training notes held out for early stopping.
    pub dev_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 128,
            learning_rate: 1e-3,
            batch_size: 8,
            max_epochs: 30,
            patience: 5,
            clip_norm: 5.0,
            dev_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("hidden, batch_size and max_epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::Config("learning_rate and clip_norm must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dev_fraction) {
            return Err(Error::Config(format!("dev_fraction {} not in [0, 1)", self.dev_fraction)));
        }
        Ok(())
    }
}

/// Sentence vectors of one note (L × d) and their gold label ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedSequence {
    pub vectors: Array2<f64>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-note NLL seen during the epoch.
    pub train_nll: f64,
    pub dev_nll: Option<f64>,
    pub dev_accuracy: Option<f64>,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TaggerModel,
    pub history: Vec<EpochStats>,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(model: &TaggerModel, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = model.params().iter().map(|p| vec![0.0; p.len()]).collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            lr,
        }
    }

    fn step(&mut self, model: &mut TaggerModel, grad: &TaggerModel) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (((p, g), m), v) in model.params_mut().into_iter().zip(grad.params()).zip(&mut self.m).zip(&mut self.v) {
            for k in 0..p.len() {
                m[k] = Self::BETA1 * m[k] + (1.0 - Self::BETA1) * g[k];
                v[k] = Self::BETA2 * v[k] + (1.0 - Self::BETA2) * g[k] * g[k];
                let step = self.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + Self::EPS);
                // Forbidden transitions stay at −∞ (their gradient is 0).
                if p[k].is_finite() {
                    p[k] -= step;
                }
            }
        }
    }
}

fn scale_and_clip(grad: &mut TaggerModel, n: usize, clip: f64) {
    let inv = 1.0 / n as f64;
    let mut sq = 0.0;
    for p in grad.params_mut() {
        for g in p.iter_mut() {
            *g *= inv;
            sq += *g * *g;
        }
    }
    let norm = sq.sqrt();
    if norm > clip {
        let s = clip / norm;
        for p in grad.params_mut() {
            p.iter_mut().for_each(|g| *g *= s);
        }
    }
}

/// Mean NLL and sentence accuracy of a model over a set of notes.
fn evaluate(model: &TaggerModel, data: &[TaggedSequence]) -> Result<(f64, f64)> {
    let results: Vec<(f64, usize)> = data
        .par_iter()
        .map(|s| {
            let (nll, pred) = model.nll_and_predict(s.vectors.view(), &s.labels)?;
            Ok((nll, pred.iter().zip(&s.labels).filter(|(a, b)| a == b).count()))
        })
        .collect::<Result<_>>()?;
    let total: usize = data.iter().map(|s| s.labels.len()).sum();
    let nll = results.iter().map(|r| r.0).sum::<f64>() / data.len().max(1) as f64;
    let correct: usize = results.iter().map(|r| r.1).sum();
    Ok((nll, correct as f64 / total.max(1) as f64))
}

pub fn mean_nll(model: &TaggerModel, data: &[TaggedSequence]) -> Result<f64> {
    Ok(evaluate(model, data)?.0)
}

/// Holds out `cfg.dev_fraction` of the notes (at least one when the fraction
/// is positive and there are two or more notes) and trains on the rest.
pub fn train_tagger(data: &[TaggedSequence], labels: Vec<String>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xD5E7));
    let n_dev = if cfg.dev_fraction > 0.0 && data.len() >= 2 {
        ((data.len() as f64 * cfg.dev_fraction).round() as usize).clamp(1, data.len() - 1)
    } else {
        0
    };
    let (dev_idx, train_idx) = order.split_at(n_dev);
    let mut dev_idx = dev_idx.to_vec();
    let mut train_idx = train_idx.to_vec();
    dev_idx.sort_unstable();
    train_idx.sort_unstable();
    let train: Vec<TaggedSequence> = train_idx.iter().map(|&i| data[i].clone()).collect();
    let dev: Vec<TaggedSequence> = dev_idx.iter().map(|&i| data[i].clone()).collect();
    train_tagger_with_dev(&train, (!dev.is_empty()).then_some(dev.as_slice()), labels, cfg)
}

/// Trains on `train`. With a dev set, keeps the parameters of the epoch with
/// the lowest dev NLL and stops after `patience` epochs without improvement;
/// otherwise runs all epochs and keeps the last.
pub fn train_tagger_with_dev(
    train: &[TaggedSequence],
    dev: Option<&[TaggedSequence]>,
    labels: Vec<String>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let first = train.first().ok_or(Error::EmptyCorpus)?;
    let d = first.vectors.ncols();
    let y = labels.len();
    for s in train.iter().chain(dev.unwrap_or_default()) {
        if s.vectors.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: s.vectors.ncols(),
            });
        }
        if s.vectors.nrows() != s.labels.len() {
            return Err(Error::DimensionMismatch {
                expected: s.vectors.nrows(),
                found: s.labels.len(),
            });
        }
        if let Some(&bad) = s.labels.iter().find(|&&l| l >= y) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                num_labels: y,
            });
        }
    }

    let mut model = TaggerModel::new(d, cfg.hidden, labels, cfg.seed);
    let mut adam = Adam::new(&model, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, TaggerModel, usize)> = None;
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let parts: Vec<(f64, TaggerModel)> = batch
                .par_iter()
                .map(|&i| {
                    let mut g = model.zeros_like();
                    let loss = model.loss_and_grad(train[i].vectors.view(), &train[i].labels, &mut g)?;
                    Ok((loss, g))
                })
                .collect::<Result<_>>()?;
            // Summed in batch order so the result does not depend on threads.
            let mut grad = model.zeros_like();
            for (loss, g) in &parts {
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch: b });
                }
                loss_sum += loss;
                for (acc, x) in grad.params_mut().into_iter().zip(g.params()) {
                    acc.iter_mut().zip(x).for_each(|(a, x)| *a += x);
                }
            }
            scale_and_clip(&mut grad, batch.len(), cfg.clip_norm);
            adam.step(&mut model, &grad);
        }
        let train_nll = loss_sum / train.len() as f64;
        let (dev_nll, dev_accuracy) = match dev {
            Some(dev) => {
                let (nll, acc) = evaluate(&model, dev)?;
                (Some(nll), Some(acc))
            }
            None => (None, None),
        };
        let stats = EpochStats {
            epoch,
            train_nll,
            dev_nll,
            dev_accuracy,
            seconds: started.elapsed().as_secs_f64(),
        };
        info!(
            "tagger epoch {epoch}: train nll {train_nll:.4}, dev nll {}, dev acc {} ({:.1}s)",
            dev_nll.map_or("-".into(), |v| format!("{v:.4}")),
            dev_accuracy.map_or("-".into(), |v| format!("{v:.4}")),
            stats.seconds
        );
        history.push(stats);

        if let Some(nll) = dev_nll {
            if best.as_ref().is_none_or(|(b, _, _)| nll < *b) {
                best = Some((nll, model.clone(), epoch));
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
    }
    let (model, best_epoch) = match best {
        Some((_, m, e)) => (m, e),
        None => {
            let e = history.len();
            (model, e)
        }
    };
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}
