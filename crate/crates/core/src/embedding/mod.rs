//! Unit-norm embeddings of base features through a linear projection head,
//! and the split-and-contrast objective used to train that head.

mod gradcheck;
mod loss;
mod train;

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::BaseFeature;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use gradcheck::{
    compare_gradients, gradient_check, gradient_check_with, sample_params, GradCheckOptions,
    ParamIndex,
};
pub use loss::{
    split_and_contrast_loss, split_and_contrast_value, Gradients, LossOutput, TrainBatch,
};
pub use train::{train, write_history, Adam, LossRecord, TrainConfig, TrainOutcome};

/// Default output dimension of the projection head.
pub const DEFAULT_DIM: usize = 512;
/// Default softmax temperature.
pub const DEFAULT_TAU: f64 = 0.1;

/// L2-normalized embedding of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> FeatureVector<T> {
    /// Scales `values` to unit length. The zero vector maps to the first
    /// standard basis vector.
    pub fn normalize(mut values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, got: 0 });
        }
        let norm = values.iter().map(|v| v.f64() * v.f64()).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::InvalidArgument("non-finite feature".into()));
        }
        if norm == 0.0 {
            values.iter_mut().for_each(|v| *v = T::zero());
            values[0] = T::one();
        } else {
            let inv = 1.0 / norm;
            values.iter_mut().for_each(|v| *v = T::of(v.f64() * inv));
        }
        Ok(FeatureVector { values })
    }

    /// Wraps values already known to be unit length (checked to 1e-5).
    pub fn from_unit(values: Vec<T>) -> Result<Self> {
        let norm = values.iter().map(|v| v.f64() * v.f64()).sum::<f64>().sqrt();
        if values.is_empty() || (norm - 1.0).abs() > 1e-5 {
            return Err(Error::InvalidArgument(format!("vector norm {norm} is not 1")));
        }
        Ok(FeatureVector { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Inner product accumulated in `f64`.
    pub fn dot(&self, other: &FeatureVector<T>) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.f64() * b.f64())
            .sum()
    }

    pub fn cast<U: Scalar>(&self) -> FeatureVector<U> {
        FeatureVector {
            values: self.values.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

/// Linear projection `z = normalize(Wᵀx + b)` from `d_base` to `d` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead<T> {
    weight: Array2<T>,
    bias: Array1<T>,
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"SSCH";
const CHECKPOINT_VERSION: u32 = 1;

impl<T: Scalar> ProjectionHead<T> {
    /// Head with weight and bias drawn from `U(-1/√d_base, 1/√d_base)`.
    pub fn new_seeded(d_base: usize, d: usize, seed: u64) -> Result<Self> {
        if d_base == 0 || d == 0 {
            return Err(Error::InvalidArgument("head dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (d_base as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((d_base, d), || T::of(rng.gen_range(-bound..bound)));
        let bias = Array1::from_shape_simple_fn(d, || T::of(rng.gen_range(-bound..bound)));
        Ok(ProjectionHead { weight, bias })
    }

    /// Identity weight with zero bias (`d_base == d`).
    pub fn identity(d: usize) -> Self {
        ProjectionHead {
            weight: Array2::eye(d),
            bias: Array1::zeros(d),
        }
    }

    pub fn from_parts(weight: Array2<T>, bias: Array1<T>) -> Result<Self> {
        if weight.ncols() != bias.len() {
            return Err(Error::DimensionMismatch {
                expected: weight.ncols(),
                got: bias.len(),
            });
        }
        if weight.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite head parameter".into()));
        }
        Ok(ProjectionHead { weight, bias })
    }

    pub fn d_base(&self) -> usize {
        self.weight.nrows()
    }

    pub fn d(&self) -> usize {
        self.weight.ncols()
    }

    pub fn weight(&self) -> &Array2<T> {
        &self.weight
    }

    pub fn bias(&self) -> &Array1<T> {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut Array2<T>, &mut Array1<T>) {
        (&mut self.weight, &mut self.bias)
    }

    /// Pre-normalization outputs for a row-per-frame input matrix.
    pub(crate) fn project(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut u = x.dot(&self.weight);
        u += &self.bias.view().insert_axis(Axis(0));
        u
    }

    pub fn embed(&self, base: &BaseFeature<T>) -> Result<FeatureVector<T>> {
        if base.dim() != self.d_base() {
            return Err(Error::DimensionMismatch {
                expected: self.d_base(),
                got: base.dim(),
            });
        }
        let x = ArrayView2::from_shape((1, base.dim()), &base.values).expect("row view");
        let u = self.project(x);
        FeatureVector::normalize(u.into_raw_vec_and_offset().0)
    }

    pub fn cast<U: Scalar>(&self) -> ProjectionHead<U> {
        ProjectionHead {
            weight: self.weight.mapv(|v| U::of(v.f64())),
            bias: self.bias.mapv(|v| U::of(v.f64())),
        }
    }

    /// Serializes as `SSCH`, u32 version, u32 d_base, u32 d, row-major f32
    /// weight, f32 bias; all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * (self.weight.len() + self.bias.len()));
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.d_base() as u32).to_le_bytes());
        out.extend_from_slice(&(self.d() as u32).to_le_bytes());
        for v in self.weight.iter().chain(self.bias.iter()) {
            out.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a head checkpoint".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("checkpoint version {version}")));
        }
        let (d_base, d) = (word(8) as usize, word(12) as usize);
        let expected = 16 + 4 * (d_base * d + d);
        if d_base == 0 || d == 0 || bytes.len() != expected {
            return Err(Error::Format(format!(
                "checkpoint of {} bytes, header implies {expected}",
                bytes.len()
            )));
        }
        let mut floats = bytes[16..]
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64));
        let weight = Array2::from_shape_vec((d_base, d), floats.by_ref().take(d_base * d).collect())
            .expect("length checked");
        let bias = Array1::from_iter(floats);
        Self::from_parts(weight, bias)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&self.to_bytes()))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Unit-normalizes each row (zero rows become `e₁`) and returns the original norms.
pub(crate) fn normalize_rows<T: Scalar>(u: &Array2<T>) -> (Array2<T>, Vec<T>) {
    let mut z = u.clone();
    let mut norms = Vec::with_capacity(u.nrows());
    for mut row in z.rows_mut() {
        let norm = row.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
        if norm > T::zero() {
            row.mapv_inplace(|v| v / norm);
        } else {
            row.fill(T::zero());
            row[0] = T::one();
        }
        norms.push(norm);
    }
    (z, norms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::FeatureKind;

    #[test]
    fn identity_head_normalizes() {
        let head = ProjectionHead::<f64>::identity(4);
        let z = head
            .embed(&BaseFeature::new(vec![3.0, 4.0, 0.0, 0.0], FeatureKind::MelFlat))
            .unwrap();
        for (a, b) in z.values().iter().zip([0.6, 0.8, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_maps_to_first_basis_vector() {
        let z = FeatureVector::<f32>::normalize(vec![0.0; 3]).unwrap();
        assert_eq!(z.values(), &[1.0, 0.0, 0.0]);
        let head = ProjectionHead::<f64>::identity(3);
        let z = head.embed(&BaseFeature::new(vec![0.0; 3], FeatureKind::MelFlat)).unwrap();
        assert_eq!(z.values(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn embed_checks_dimension() {
        let head = ProjectionHead::<f64>::new_seeded(5, 3, 1).unwrap();
        assert!(matches!(
            head.embed(&BaseFeature::new(vec![1.0; 4], FeatureKind::MelFlat)),
            Err(Error::DimensionMismatch { expected: 5, got: 4 })
        ));
    }

    #[test]
    fn positive_scaling_is_invisible_without_bias() {
        let head = ProjectionHead::<f64>::new_seeded(6, 4, 3).unwrap();
        let head = ProjectionHead::from_parts(head.weight().clone(), Array1::zeros(4)).unwrap();
        let x = vec![0.3, -1.2, 2.0, 0.1, 0.0, 5.0];
        let a = head.embed(&BaseFeature::new(x.clone(), FeatureKind::MelFlat)).unwrap();
        let scaled = x.iter().map(|v| v * 7.5).collect();
        let b = head.embed(&BaseFeature::new(scaled, FeatureKind::MelFlat)).unwrap();
        for (p, q) in a.values().iter().zip(b.values()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_init_is_deterministic_and_bounded() {
        let a = ProjectionHead::<f64>::new_seeded(100, 8, 42).unwrap();
        let b = ProjectionHead::<f64>::new_seeded(100, 8, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.weight().iter().all(|w| w.abs() <= 0.1));
        assert_ne!(a, ProjectionHead::<f64>::new_seeded(100, 8, 43).unwrap());
    }

    #[test]
    fn checkpoint_round_trip() {
        let head = ProjectionHead::<f32>::new_seeded(7, 5, 9).unwrap();
        let back = ProjectionHead::<f32>::from_bytes(&head.to_bytes()).unwrap();
        assert_eq!(head, back);
        let bytes = head.to_bytes();
        assert_eq!(&bytes[..4], b"SSCH");
        assert_eq!(bytes.len(), 16 + 4 * (7 * 5 + 5));
        assert!(ProjectionHead::<f32>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(ProjectionHead::<f32>::from_bytes(&bad).is_err());
    }
}
