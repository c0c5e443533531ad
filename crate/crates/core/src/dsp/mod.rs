//! Spectral front end: STFT power spectra, Mel filterbank energies, MFCCs,
//! and the flattening that turns a spectrogram into a base feature vector.
//!
//! Analysis uses a periodic Hann window of [`WINDOW_SIZE`] samples advanced
//! by [`HOP_SIZE`], without center padding, so a clip of `n` samples yields
//! `1 + (n - WINDOW_SIZE) / HOP_SIZE` time steps (45 for one second at 48 kHz).

mod mel;
mod mfcc;

use serde::{Deserialize, Serialize};

use crate::audio_io::AudioClip;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use mel::{hz_to_mel, mel_to_hz, MelExtractor, MelFilterbank};
pub use mfcc::{dct_ii_matrix, MfccExtractor};

pub const WINDOW_SIZE: usize = 2048;
pub const HOP_SIZE: usize = 1024;
pub const DEFAULT_MEL_BINS: usize = 64;
pub const DEFAULT_N_MFCC: usize = 20;
/// Floor added before the logarithm so silence stays finite.
pub const LOG_EPS: f64 = 1e-10;

/// STFT framing used to produce a spectrogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameParams {
    pub window_size: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl Default for FrameParams {
    fn default() -> Self {
        FrameParams {
            window_size: WINDOW_SIZE,
            hop: HOP_SIZE,
            sample_rate: crate::audio_io::SAMPLE_RATE,
        }
    }
}

impl FrameParams {
    /// Number of analysis frames for `num_samples` input samples.
    pub fn time_steps(&self, num_samples: usize) -> Result<usize> {
        if num_samples < self.window_size {
            return Err(Error::TooShort {
                needed: self.window_size,
                got: num_samples,
            });
        }
        Ok(1 + (num_samples - self.window_size) / self.hop)
    }

    /// Sample index a time step maps to: the center of its analysis window.
    pub fn step_to_sample(&self, step: usize) -> usize {
        step * self.hop + self.window_size / 2
    }
}

/// What the rows of a [`Spectrogram`] hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectrumKind {
    /// Mel filterbank energies in the power domain.
    MelPower,
    /// `ln(energy + LOG_EPS)`.
    LogMel,
    /// Orthonormal DCT-II coefficients of the log-Mel spectrum.
    Mfcc,
}

/// Row-by-column matrix of spectral values: rows are frequency (Mel bins
/// or cepstral coefficients), columns are time steps. Stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram<T> {
    data: Vec<T>,
    rows: usize,
    time_steps: usize,
    params: FrameParams,
    kind: SpectrumKind,
}

impl<T: Scalar> Spectrogram<T> {
    /// Builds a spectrogram from column-major `data` of `rows * time_steps` values.
    pub fn from_column_major(
        data: Vec<T>,
        rows: usize,
        time_steps: usize,
        params: FrameParams,
        kind: SpectrumKind,
    ) -> Result<Self> {
        if rows == 0 || time_steps == 0 || data.len() != rows * time_steps {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{time_steps} spectrogram",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite spectrogram entry".into()));
        }
        if kind == SpectrumKind::MelPower && data.iter().any(|v| *v < T::zero()) {
            return Err(Error::InvalidArgument("negative power entry".into()));
        }
        Ok(Spectrogram {
            data,
            rows,
            time_steps,
            params,
            kind,
        })
    }

    /// Builds a power spectrogram from row vectors (one row per frequency bin).
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n_rows = rows.len();
        let t = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != t) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        let mut data = Vec::with_capacity(n_rows * t);
        for col in 0..t {
            data.extend(rows.iter().map(|r| r[col]));
        }
        Self::from_column_major(data, n_rows, t, FrameParams::default(), SpectrumKind::MelPower)
    }

    /// Inverse of [`flatten`]: reshapes a flat vector into `rows × (len / rows)`.
    pub fn reshape(values: &[T], rows: usize, kind: SpectrumKind) -> Result<Self> {
        if rows == 0 || !values.len().is_multiple_of(rows) {
            return Err(Error::ShapeMismatch(format!(
                "{} values do not split into rows of {rows}",
                values.len()
            )));
        }
        Self::from_column_major(
            values.to_vec(),
            rows,
            values.len() / rows,
            FrameParams::default(),
            kind,
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of Mel bins (alias of [`rows`](Self::rows) for Mel spectra).
    pub fn mel_bins(&self) -> usize {
        self.rows
    }

    pub fn time_steps(&self) -> usize {
        self.time_steps
    }

    pub fn params(&self) -> FrameParams {
        self.params
    }

    pub fn kind(&self) -> SpectrumKind {
        self.kind
    }

    pub fn get(&self, row: usize, step: usize) -> T {
        self.data[step * self.rows + row]
    }

    /// All rows at one time step.
    pub fn column(&self, step: usize) -> &[T] {
        &self.data[step * self.rows..(step + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.rows)
    }

    /// Column-major values.
    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Natural-log compression `ln(x + LOG_EPS)` of a power spectrogram.
    pub fn to_log(&self) -> Result<Self> {
        if self.kind != SpectrumKind::MelPower {
            return Err(Error::InvalidArgument(format!(
                "log compression of a {:?} spectrogram",
                self.kind
            )));
        }
        let eps = T::of(LOG_EPS);
        Ok(Spectrogram {
            data: self.data.iter().map(|&x| (x + eps).ln()).collect(),
            kind: SpectrumKind::LogMel,
            ..*self
        })
    }
}

/// Which flattened spectrum a base feature holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    #[serde(rename = "mel")]
    MelFlat,
    #[serde(rename = "mfcc")]
    MfccFlat,
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mel" => Ok(FeatureKind::MelFlat),
            "mfcc" => Ok(FeatureKind::MfccFlat),
            other => Err(Error::InvalidArgument(format!("unknown feature kind {other:?}"))),
        }
    }
}

/// Flattened spectrogram of one frame, before any projection.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseFeature<T> {
    pub values: Vec<T>,
    pub kind: FeatureKind,
}

impl<T: Scalar> BaseFeature<T> {
    pub fn new(values: Vec<T>, kind: FeatureKind) -> Self {
        BaseFeature { values, kind }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Concatenates the time-step columns of `spec` in time order.
pub fn flatten<T: Scalar>(spec: &Spectrogram<T>) -> BaseFeature<T> {
    let kind = match spec.kind() {
        SpectrumKind::Mfcc => FeatureKind::MfccFlat,
        _ => FeatureKind::MelFlat,
    };
    BaseFeature::new(spec.data().to_vec(), kind)
}

fn clip_as<T: Scalar>(clip: &AudioClip) -> Vec<T> {
    clip.samples().iter().map(|&s| T::of(s as f64)).collect()
}

/// Power-domain Mel spectrogram with the default framing.
pub fn mel_power<T: Scalar>(clip: &AudioClip, mel_bins: usize) -> Result<Spectrogram<T>> {
    MelExtractor::new(clip.sample_rate(), mel_bins)?.power(clip)
}

/// Log-compressed Mel spectrogram, `ln(energy + LOG_EPS)`.
pub fn mel_spectrogram<T: Scalar>(clip: &AudioClip, mel_bins: usize) -> Result<Spectrogram<T>> {
    mel_power(clip, mel_bins)?.to_log()
}

/// MFCCs: the first `n_mfcc` orthonormal DCT-II coefficients of the log-Mel spectrum.
pub fn mfcc<T: Scalar>(clip: &AudioClip, n_mfcc: usize, mel_bins: usize) -> Result<Spectrogram<T>> {
    MfccExtractor::new(clip.sample_rate(), n_mfcc, mel_bins)?.compute(clip)
}

/// Reusable clip → base feature pipeline with shared filterbank and DCT tables.
pub struct FeatureExtractor<T: Scalar> {
    kind: FeatureKind,
    mfcc: MfccExtractor<T>,
}

impl<T: Scalar> FeatureExtractor<T> {
    pub fn new(kind: FeatureKind, mel_bins: usize, n_mfcc: usize) -> Result<Self> {
        let n_mfcc = match kind {
            FeatureKind::MelFlat => n_mfcc.min(mel_bins),
            FeatureKind::MfccFlat => n_mfcc,
        };
        Ok(FeatureExtractor {
            kind,
            mfcc: MfccExtractor::new(crate::audio_io::SAMPLE_RATE, n_mfcc, mel_bins)?,
        })
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn mel(&self) -> &MelExtractor<T> {
        self.mfcc.mel()
    }

    /// Flattened feature dimension for a clip of `num_samples` samples.
    pub fn dim(&self, num_samples: usize) -> Result<usize> {
        let t = self.mel().params().time_steps(num_samples)?;
        Ok(t * match self.kind {
            FeatureKind::MelFlat => self.mel().mel_bins(),
            FeatureKind::MfccFlat => self.mfcc.n_mfcc(),
        })
    }

    pub fn base_feature(&self, clip: &AudioClip) -> Result<BaseFeature<T>> {
        let spec = match self.kind {
            FeatureKind::MelFlat => self.mel().power(clip)?.to_log()?,
            FeatureKind::MfccFlat => self.mfcc.compute(clip)?,
        };
        Ok(flatten(&spec))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_is_column_major() {
        let s = Spectrogram::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(flatten(&s).values, vec![1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn time_step_count() {
        let p = FrameParams::default();
        assert_eq!(p.time_steps(48000).unwrap(), 45);
        assert_eq!(p.time_steps(2048).unwrap(), 1);
        assert!(matches!(p.time_steps(2047), Err(Error::TooShort { .. })));
        assert_eq!(p.step_to_sample(0), 1024);
        assert_eq!(p.step_to_sample(3), 4096);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Spectrogram::<f64>::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(Spectrogram::<f64>::from_rows(&[vec![-1.0]]).is_err());
        assert!(Spectrogram::<f64>::reshape(&[1.0, 2.0, 3.0], 2, SpectrumKind::LogMel).is_err());
    }

    #[test]
    fn feature_kind_parses() {
        assert_eq!("mel".parse::<FeatureKind>().unwrap(), FeatureKind::MelFlat);
        assert_eq!("mfcc".parse::<FeatureKind>().unwrap(), FeatureKind::MfccFlat);
        assert!("clap".parse::<FeatureKind>().is_err());
    }
}
