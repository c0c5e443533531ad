//! Central finite-difference check of the split-and-contrast gradients.
//!
//! Meaningful only for `f64` heads: with `h = 1e-5` the truncation error is
//! around `h²` and the cancellation error around `ε_mach / h`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{split_and_contrast_loss, split_and_contrast_value, Gradients, ProjectionHead, TrainBatch};
use crate::error::Result;
use crate::scalar::Scalar;

/// Gradient magnitudes below this are compared absolutely rather than relatively.
const REL_FLOOR: f64 = 1e-6;

/// One scalar parameter of a head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamIndex {
    Weight(usize, usize),
    Bias(usize),
}

impl ParamIndex {
    fn read<T: Scalar>(self, g: &Gradients<T>) -> T {
        match self {
            ParamIndex::Weight(r, c) => g.weight[[r, c]],
            ParamIndex::Bias(c) => g.bias[c],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub h: f64,
    /// Parameters to probe; all of them when the head has fewer.
    pub samples: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            h: 1e-5,
            samples: 100,
            seed: 0,
        }
    }
}

/// Picks `count` distinct parameters uniformly at random (all of them if
/// the head has at most `count`).
pub fn sample_params<T: Scalar>(head: &ProjectionHead<T>, count: usize, seed: u64) -> Vec<ParamIndex> {
    let (rows, cols) = (head.d_base(), head.d());
    let total = rows * cols + cols;
    let to_index = |flat: usize| {
        if flat < rows * cols {
            ParamIndex::Weight(flat / cols, flat % cols)
        } else {
            ParamIndex::Bias(flat - rows * cols)
        }
    };
    if total <= count {
        return (0..total).map(to_index).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, total, count)
        .into_iter()
        .map(to_index)
        .collect()
}

fn perturbed<T: Scalar>(head: &ProjectionHead<T>, at: ParamIndex, delta: f64) -> ProjectionHead<T> {
    let mut h = head.clone();
    let (w, b) = h.params_mut();
    let slot = match at {
        ParamIndex::Weight(r, c) => &mut w[[r, c]],
        ParamIndex::Bias(c) => &mut b[c],
    };
    *slot = T::of(slot.f64() + delta);
    h
}

/// Maximum relative error between `analytic` and central differences of
/// the loss at each parameter in `params`.
pub fn compare_gradients<T: Scalar>(
    head: &ProjectionHead<T>,
    batch: &TrainBatch<T>,
    tau: T,
    analytic: &Gradients<T>,
    params: &[ParamIndex],
    h: f64,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for &p in params {
        let plus = split_and_contrast_value(&perturbed(head, p, h), batch, tau)?.f64();
        let minus = split_and_contrast_value(&perturbed(head, p, -h), batch, tau)?.f64();
        let numeric = (plus - minus) / (2.0 * h);
        let exact = p.read(analytic).f64();
        let scale = numeric.abs().max(exact.abs()).max(REL_FLOOR);
        worst = worst.max((numeric - exact).abs() / scale);
    }
    Ok(worst)
}

/// Finite-difference check with explicit options.
pub fn gradient_check_with<T: Scalar>(
    head: &ProjectionHead<T>,
    batch: &TrainBatch<T>,
    tau: T,
    opts: &GradCheckOptions,
) -> Result<f64> {
    let analytic = split_and_contrast_loss(head, batch, tau)?.gradients;
    let params = sample_params(head, opts.samples, opts.seed);
    compare_gradients(head, batch, tau, &analytic, &params, opts.h)
}

/// Checks 100 random parameters (or all, if fewer) with step `h`.
pub fn gradient_check<T: Scalar>(
    head: &ProjectionHead<T>,
    batch: &TrainBatch<T>,
    tau: T,
    h: f64,
) -> Result<f64> {
    gradient_check_with(
        head,
        batch,
        tau,
        &GradCheckOptions {
            h,
            ..Default::default()
        },
    )
}
