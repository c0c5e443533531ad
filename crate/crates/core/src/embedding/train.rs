//! Mini-batch Adam training of a projection head.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{split_and_contrast_loss, Gradients, ProjectionHead, TrainBatch};
use crate::dsp::BaseFeature;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub tau: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            lr: 1e-4,
            batch_size: 64,
            tau: super::DEFAULT_TAU,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    /// 1-based.
    pub epoch: usize,
    /// 0-based within the epoch.
    pub batch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub head: ProjectionHead<T>,
    pub history: Vec<LossRecord>,
}

impl<T> TrainOutcome<T> {
    /// Mean batch loss of each epoch, in epoch order.
    pub fn epoch_means(&self) -> Vec<f64> {
        let epochs = self.history.iter().map(|r| r.epoch).max().unwrap_or(0);
        (1..=epochs)
            .map(|e| {
                let losses: Vec<f64> = self
                    .history
                    .iter()
                    .filter(|r| r.epoch == e)
                    .map(|r| r.loss)
                    .collect();
                losses.iter().sum::<f64>() / losses.len() as f64
            })
            .collect()
    }
}

/// Adam with bias-corrected moment estimates.
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    step: i32,
    m_w: Array2<T>,
    v_w: Array2<T>,
    m_b: Array1<T>,
    v_b: Array1<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(head: &ProjectionHead<T>, cfg: &TrainConfig) -> Self {
        Adam {
            lr: T::of(cfg.lr),
            beta1: T::of(cfg.beta1),
            beta2: T::of(cfg.beta2),
            eps: T::of(cfg.eps),
            step: 0,
            m_w: Array2::zeros(head.weight().raw_dim()),
            v_w: Array2::zeros(head.weight().raw_dim()),
            m_b: Array1::zeros(head.bias().len()),
            v_b: Array1::zeros(head.bias().len()),
        }
    }

    pub fn step(&mut self, head: &mut ProjectionHead<T>, grads: &Gradients<T>) {
        self.step += 1;
        let c1 = T::one() - self.beta1.powi(self.step);
        let c2 = T::one() - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let update = |p: &mut T, m: &mut T, v: &mut T, g: T| {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        let (w, b) = head.params_mut();
        ndarray::Zip::from(w)
            .and(&mut self.m_w)
            .and(&mut self.v_w)
            .and(&grads.weight)
            .for_each(|p, m, v, &g| update(p, m, v, g));
        ndarray::Zip::from(b)
            .and(&mut self.m_b)
            .and(&mut self.v_b)
            .and(&grads.bias)
            .for_each(|p, m, v, &g| update(p, m, v, g));
    }
}

/// Trains `head` on sequences of consecutive frames.
///
/// Each epoch shuffles the sequences, walks them in batches of
/// `batch_size` (the last batch may be smaller), draws one split index
/// uniformly from `1..n` per batch and takes one Adam step per batch.
pub fn train<T: Scalar>(
    head: ProjectionHead<T>,
    corpus: &[Vec<BaseFeature<T>>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    let seq_len = corpus.first().map_or(0, Vec::len);
    if corpus.is_empty() || seq_len < 2 {
        return Err(Error::DegenerateBatch(format!(
            "{} sequences of {seq_len} frames",
            corpus.len()
        )));
    }
    if corpus.iter().any(|s| s.len() != seq_len) {
        return Err(Error::DegenerateBatch("sequences differ in length".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let d_base = head.d_base();
    if let Some(f) = corpus.iter().flatten().find(|f| f.dim() != d_base) {
        return Err(Error::DimensionMismatch {
            expected: d_base,
            got: f.dim(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&head, cfg);
    let mut head = head;
    let tau = T::of(cfg.tau);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut history = Vec::new();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut frames = Array2::zeros((chunk.len() * seq_len, d_base));
            for (row, frame) in chunk.iter().flat_map(|&i| &corpus[i]).enumerate() {
                frames
                    .row_mut(row)
                    .assign(&ndarray::ArrayView1::from(&frame.values[..]));
            }
            let split = rng.gen_range(1..seq_len);
            let batch = TrainBatch::from_matrix(frames, chunk.len(), seq_len, split)?;
            let out = split_and_contrast_loss(&head, &batch, tau)?;
            history.push(LossRecord {
                epoch,
                batch: batch_no,
                loss: out.loss.f64(),
            });
            adam.step(&mut head, &out.gradients);
        }
    }
    Ok(TrainOutcome { head, history })
}

/// Writes the loss log as JSON lines `{epoch, batch, loss}`.
pub fn write_history(path: impl AsRef<Path>, history: &[LossRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for rec in history {
        out.push_str(&serde_json::to_string(rec).expect("record serializes"));
        out.push('\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::FeatureKind;

    fn corpus(n_seq: usize, n: usize, d: usize, seed: u64) -> Vec<Vec<BaseFeature<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_seq)
            .map(|_| {
                let base: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (0..n)
                    .map(|f| {
                        BaseFeature::new(
                            base.iter()
                                .map(|b| b + 0.1 * f as f64 + rng.gen_range(-0.05..0.05))
                                .collect(),
                            FeatureKind::MelFlat,
                        )
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_leaves_head_unchanged() {
        let head = ProjectionHead::<f64>::new_seeded(8, 4, 1).unwrap();
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 3,
            batch_size: 4,
            ..Default::default()
        };
        let out = train(head.clone(), &corpus(10, 5, 8, 2), &cfg).unwrap();
        assert_eq!(out.head, head);
        assert_eq!(out.history.len(), 9);
    }

    #[test]
    fn same_seed_same_head() {
        let head = ProjectionHead::<f64>::new_seeded(8, 4, 1).unwrap();
        let cfg = TrainConfig {
            lr: 1e-2,
            epochs: 3,
            batch_size: 4,
            seed: 7,
            ..Default::default()
        };
        let c = corpus(10, 5, 8, 2);
        let a = train(head.clone(), &c, &cfg).unwrap();
        let b = train(head, &c, &cfg).unwrap();
        assert_eq!(a.head, b.head);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn loss_goes_down_on_a_learnable_corpus() {
        let head = ProjectionHead::<f64>::new_seeded(16, 8, 1).unwrap();
        let cfg = TrainConfig {
            lr: 1e-2,
            epochs: 30,
            batch_size: 8,
            ..Default::default()
        };
        let out = train(head, &corpus(32, 6, 16, 3), &cfg).unwrap();
        let means = out.epoch_means();
        assert!(means[29] < means[0], "{means:?}");
    }

    #[test]
    fn rejects_short_sequences() {
        let head = ProjectionHead::<f64>::new_seeded(8, 4, 1).unwrap();
        let c = corpus(4, 1, 8, 2);
        assert!(matches!(
            train(head, &c, &TrainConfig::default()),
            Err(Error::DegenerateBatch(_))
        ));
    }
}
