//! Skip-gram with negative sampling.

use log::info;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use serde::{Deserialize, Serialize};

use super::{EmbeddingMatrix, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipGramConfig {
    pub dim: usize,
    /// Maximum context distance; the effective window of each center word is
    /// drawn uniformly from `1..=window`.
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial learning rate, decayed linearly to 1e-4 of itself.
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 300,
            window: 16,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.epochs == 0 {
            return Err(Error::Config("skip-gram dim, window and epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("bad learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// ln σ(x), stable for large |x|.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// −ln σ(v·u_o) − Σ_k ln σ(−v·u_k)
pub fn sgns_loss(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> f64 {
    -log_sigmoid(dot(center, context)) - negatives.iter().map(|u| log_sigmoid(-dot(center, u))).sum::<f64>()
}

/// One SGD step of [`sgns_loss`] for a (center, context) pair. `output` holds
/// the context vectors row-major with row length `center.len()`. Every
/// gradient is taken at the parameters before the step. Returns the loss.
pub(crate) fn sgns_step(
    center: &mut [f64],
    output: &mut [f64],
    context: usize,
    negatives: &[usize],
    lr: f64,
    grad_center: &mut [f64],
) -> f64 {
    let d = center.len();
    grad_center.fill(0.0);
    let mut loss = 0.0;
    let targets = std::iter::once((context, 1.0)).chain(negatives.iter().map(|&k| (k, 0.0)));
    for (row, label) in targets {
        let u = &mut output[row * d..(row + 1) * d];
        let x = dot(center, u);
        // dL/dx = σ(x) − label
        let g = sigmoid(x) - label;
        loss -= if label > 0.0 { log_sigmoid(x) } else { log_sigmoid(-x) };
        for ((gc, ui), vi) in grad_center.iter_mut().zip(u.iter_mut()).zip(center.iter()) {
            *gc += g * *ui;
            *ui -= lr * g * vi;
        }
    }
    for (v, g) in center.iter_mut().zip(grad_center.iter()) {
        *v -= lr * g;
    }
    loss
}

/// Trains input vectors over id-encoded sentences. Context windows never
/// cross a sentence boundary. Returns the embeddings and the mean pair loss
/// of each epoch.
pub fn train_skipgram(
    sentences: &[Vec<usize>],
    vocab: &Vocabulary,
    cfg: &SkipGramConfig,
) -> Result<(EmbeddingMatrix, Vec<f64>)> {
    cfg.validate()?;
    let total_tokens: usize = sentences.iter().map(Vec::len).sum();
    if total_tokens == 0 {
        return Err(Error::EmptyCorpus);
    }
    if total_tokens < cfg.window {
        return Err(Error::CorpusTooSmall {
            tokens: total_tokens,
            window: cfg.window,
        });
    }
    if let Some(&bad) = sentences.iter().flatten().find(|&&id| id >= vocab.len()) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            num_labels: vocab.len(),
        });
    }

    let d = cfg.dim;
    let v = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut input: Vec<f64> = (0..v * d).map(|_| (rng.random::<f64>() - 0.5) / d as f64).collect();
    let mut output = vec![0.0; v * d];
    let noise = WeightedAliasIndex::new(vocab.counts().iter().map(|&c| (c as f64).powf(0.75)).collect())
        .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;

    let total_steps = (cfg.epochs * total_tokens) as f64;
    let mut processed = 0usize;
    let mut grad = vec![0.0; d];
    let mut negs = Vec::with_capacity(cfg.negatives);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut pairs = 0usize;
        for sent in sentences {
            for (i, &center) in sent.iter().enumerate() {
                let lr = cfg.learning_rate * (1.0 - processed as f64 / total_steps).max(1e-4);
                processed += 1;
                let b = rng.random_range(1..=cfg.window);
                let lo = i.saturating_sub(b);
                let hi = (i + b).min(sent.len() - 1);
                for (j, &ctx) in sent.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    negs.clear();
                    negs.extend((0..cfg.negatives).map(|_| noise.sample(&mut rng)).filter(|&k| k != ctx));
                    let row = &mut input[center * d..(center + 1) * d];
                    loss_sum += sgns_step(row, &mut output, ctx, &negs, lr, &mut grad);
                    pairs += 1;
                }
            }
        }
        let mean = if pairs > 0 { loss_sum / pairs as f64 } else { 0.0 };
        info!("skip-gram epoch {}: {pairs} pairs, mean loss {mean:.4}", epoch + 1);
        epoch_losses.push(mean);
    }
    let vectors = ndarray::Array2::from_shape_vec((v, d), input).expect("v*d values");
    Ok((EmbeddingMatrix::new(vectors, vocab.hash()), epoch_losses))
}
