//! Split-and-contrast loss with analytic gradients.
//!
//! Every sequence in a batch is cut at the same index into a left part of
//! `n_α` frames and a right part of `n_β` frames. With `z` the unit-norm
//! embeddings, the loss is
//!
//! ```text
//! L = -ln( Σ_k exp(z_{k,l}·z_{k,r} / τ) / Σ_i Σ_j exp(z_{α,i}·z_{β,j} / τ) )
//! ```
//!
//! where `z_{k,l}` is the last left frame and `z_{k,r}` the first right frame
//! of sequence `k`, and the denominator runs over all left frames of the
//! batch against all right frames, positives included. Both sums are
//! evaluated as log-sum-exp.

use ndarray::{s, Array1, Array2, Axis};

use super::{normalize_rows, ProjectionHead};
use crate::dsp::BaseFeature;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `N` sequences of `n` consecutive frames, split after `split_index` frames.
#[derive(Debug, Clone)]
pub struct TrainBatch<T> {
    /// Row `k * n + f` is frame `f` of sequence `k`.
    frames: Array2<T>,
    n_seq: usize,
    seq_len: usize,
    split: usize,
}

impl<T: Scalar> TrainBatch<T> {
    pub fn new(sequences: &[Vec<BaseFeature<T>>], split_index: usize) -> Result<Self> {
        let n_seq = sequences.len();
        let seq_len = sequences.first().map_or(0, Vec::len);
        if sequences.iter().any(|s| s.len() != seq_len) {
            return Err(Error::DegenerateBatch("sequences differ in length".into()));
        }
        let d_base = sequences
            .first()
            .and_then(|s| s.first())
            .map_or(0, BaseFeature::dim);
        let mut frames = Array2::zeros((n_seq * seq_len, d_base));
        for (row, frame) in sequences.iter().flatten().enumerate() {
            if frame.dim() != d_base {
                return Err(Error::DimensionMismatch {
                    expected: d_base,
                    got: frame.dim(),
                });
            }
            frames
                .row_mut(row)
                .assign(&ndarray::ArrayView1::from(&frame.values[..]));
        }
        Self::from_matrix(frames, n_seq, seq_len, split_index)
    }

    /// Wraps a row-per-frame matrix of `n_seq * seq_len` rows.
    pub fn from_matrix(frames: Array2<T>, n_seq: usize, seq_len: usize, split_index: usize) -> Result<Self> {
        if n_seq == 0 {
            return Err(Error::DegenerateBatch("empty batch".into()));
        }
        if seq_len < 2 {
            return Err(Error::DegenerateBatch(format!("{seq_len} frames per sequence")));
        }
        if split_index == 0 || split_index >= seq_len {
            return Err(Error::DegenerateBatch(format!(
                "split index {split_index} outside 1..{seq_len}"
            )));
        }
        if frames.nrows() != n_seq * seq_len {
            return Err(Error::ShapeMismatch(format!(
                "{} rows for {n_seq} sequences of {seq_len}",
                frames.nrows()
            )));
        }
        Ok(TrainBatch {
            frames,
            n_seq,
            seq_len,
            split: split_index,
        })
    }

    pub fn n_seq(&self) -> usize {
        self.n_seq
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    /// `n_α`, the number of frames left of the split.
    pub fn split_index(&self) -> usize {
        self.split
    }

    pub fn frames(&self) -> &Array2<T> {
        &self.frames
    }

    pub fn d_base(&self) -> usize {
        self.frames.ncols()
    }
}

/// Gradients with the shapes of a [`ProjectionHead`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Gradients<T> {
    pub fn norm(&self) -> f64 {
        self.weight
            .iter()
            .chain(self.bias.iter())
            .map(|g| g.f64() * g.f64())
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct LossOutput<T> {
    pub loss: T,
    pub gradients: Gradients<T>,
}

struct Forward<T> {
    z: Array2<T>,
    norms: Vec<T>,
    left: Array2<T>,
    right: Array2<T>,
    /// Left × right similarity logits, already divided by τ.
    logits: Array2<T>,
    lse_all: T,
    lse_pos: T,
}

fn log_sum_exp<T: Scalar>(values: impl Iterator<Item = T> + Clone) -> T {
    let max = values.clone().fold(T::neg_infinity(), T::max);
    max + values.map(|v| (v - max).exp()).sum::<T>().ln()
}

fn validate<T: Scalar>(head: &ProjectionHead<T>, batch: &TrainBatch<T>, tau: T) -> Result<()> {
    if tau.is_nan() || tau <= T::zero() {
        return Err(Error::InvalidArgument(format!("temperature {tau} must be positive")));
    }
    if batch.d_base() != head.d_base() {
        return Err(Error::DimensionMismatch {
            expected: head.d_base(),
            got: batch.d_base(),
        });
    }
    Ok(())
}

fn forward<T: Scalar>(head: &ProjectionHead<T>, batch: &TrainBatch<T>, tau: T) -> Forward<T> {
    let (n, n_a) = (batch.seq_len, batch.split);
    let n_b = n - n_a;
    let u = head.project(batch.frames.view());
    let (z, norms) = normalize_rows(&u);
    let d = z.ncols();
    let mut left = Array2::zeros((batch.n_seq * n_a, d));
    let mut right = Array2::zeros((batch.n_seq * n_b, d));
    for k in 0..batch.n_seq {
        left.slice_mut(s![k * n_a..(k + 1) * n_a, ..])
            .assign(&z.slice(s![k * n..k * n + n_a, ..]));
        right
            .slice_mut(s![k * n_b..(k + 1) * n_b, ..])
            .assign(&z.slice(s![k * n + n_a..(k + 1) * n, ..]));
    }
    let logits = left.dot(&right.t()) / tau;
    let lse_all = log_sum_exp(logits.iter().copied());
    let lse_pos = log_sum_exp((0..batch.n_seq).map(|k| logits[[k * n_a + n_a - 1, k * n_b]]));
    Forward {
        z,
        norms,
        left,
        right,
        logits,
        lse_all,
        lse_pos,
    }
}

/// Loss value only.
pub fn split_and_contrast_value<T: Scalar>(
    head: &ProjectionHead<T>,
    batch: &TrainBatch<T>,
    tau: T,
) -> Result<T> {
    validate(head, batch, tau)?;
    let f = forward(head, batch, tau);
    Ok((f.lse_all - f.lse_pos).max(T::zero()))
}

/// Loss and exact gradients with respect to the head's weight and bias.
pub fn split_and_contrast_loss<T: Scalar>(
    head: &ProjectionHead<T>,
    batch: &TrainBatch<T>,
    tau: T,
) -> Result<LossOutput<T>> {
    validate(head, batch, tau)?;
    let f = forward(head, batch, tau);
    let (n, n_a) = (batch.seq_len, batch.split);
    let n_b = n - n_a;

    // dL/dlogit = softmax over all pairs minus softmax over positives
    let mut g = f.logits.mapv(|v| (v - f.lse_all).exp());
    for k in 0..batch.n_seq {
        let (i, j) = (k * n_a + n_a - 1, k * n_b);
        g[[i, j]] -= (f.logits[[i, j]] - f.lse_pos).exp();
    }
    g /= tau;

    let d_left = g.dot(&f.right);
    let d_right = g.t().dot(&f.left);

    let mut dz = Array2::zeros(f.z.raw_dim());
    for k in 0..batch.n_seq {
        dz.slice_mut(s![k * n..k * n + n_a, ..])
            .assign(&d_left.slice(s![k * n_a..(k + 1) * n_a, ..]));
        dz.slice_mut(s![k * n + n_a..(k + 1) * n, ..])
            .assign(&d_right.slice(s![k * n_b..(k + 1) * n_b, ..]));
    }

    // back through z = u / |u|
    for ((mut row, z), &norm) in dz.rows_mut().into_iter().zip(f.z.rows()).zip(&f.norms) {
        if norm > T::zero() {
            let radial = row.dot(&z);
            row.zip_mut_with(&z, |g, &zv| *g = (*g - zv * radial) / norm);
        } else {
            row.fill(T::zero());
        }
    }

    let weight = batch.frames.t().dot(&dz);
    let bias = dz.sum_axis(Axis(0));
    Ok(LossOutput {
        loss: (f.lse_all - f.lse_pos).max(T::zero()),
        gradients: Gradients { weight, bias },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::FeatureKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(n_seq: usize, n: usize, split: usize, d_base: usize, seed: u64) -> TrainBatch<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seqs: Vec<Vec<BaseFeature<f64>>> = (0..n_seq)
            .map(|_| {
                (0..n)
                    .map(|_| {
                        BaseFeature::new(
                            (0..d_base).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                            FeatureKind::MelFlat,
                        )
                    })
                    .collect()
            })
            .collect();
        TrainBatch::new(&seqs, split).unwrap()
    }

    #[test]
    fn single_pair_has_zero_loss_and_gradient() {
        let head = ProjectionHead::<f64>::new_seeded(8, 4, 1).unwrap();
        let batch = random_batch(1, 2, 1, 8, 2);
        let out = split_and_contrast_loss(&head, &batch, 0.1).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.gradients.norm() < 1e-8);
    }

    #[test]
    fn loss_is_non_negative() {
        for seed in 0..20 {
            let head = ProjectionHead::<f64>::new_seeded(6, 3, seed).unwrap();
            let batch = random_batch(3, 5, 1 + seed as usize % 4, 6, seed + 100);
            assert!(split_and_contrast_value(&head, &batch, 0.1).unwrap() >= 0.0);
        }
    }

    #[test]
    fn value_and_loss_agree() {
        let head = ProjectionHead::<f64>::new_seeded(6, 3, 5).unwrap();
        let batch = random_batch(3, 4, 2, 6, 6);
        let a = split_and_contrast_value(&head, &batch, 0.1).unwrap();
        let b = split_and_contrast_loss(&head, &batch, 0.1).unwrap().loss;
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_batches_are_rejected() {
        let empty: Vec<Vec<BaseFeature<f64>>> = vec![];
        assert!(matches!(TrainBatch::new(&empty, 1), Err(Error::DegenerateBatch(_))));
        let one = vec![vec![BaseFeature::new(vec![1.0], FeatureKind::MelFlat)]];
        assert!(matches!(TrainBatch::new(&one, 1), Err(Error::DegenerateBatch(_))));
        let two = vec![vec![BaseFeature::new(vec![1.0], FeatureKind::MelFlat); 2]];
        assert!(matches!(TrainBatch::new(&two, 2), Err(Error::DegenerateBatch(_))));
        assert!(matches!(TrainBatch::new(&two, 0), Err(Error::DegenerateBatch(_))));
    }

    #[test]
    fn rejects_bad_temperature_and_dims() {
        let head = ProjectionHead::<f64>::new_seeded(6, 3, 5).unwrap();
        let batch = random_batch(2, 3, 1, 6, 6);
        assert!(split_and_contrast_value(&head, &batch, 0.0).is_err());
        let other = random_batch(2, 3, 1, 5, 6);
        assert!(matches!(
            split_and_contrast_value(&head, &other, 0.1),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
