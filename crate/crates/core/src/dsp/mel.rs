//! STFT power spectra projected onto a triangular Mel filterbank.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{FrameParams, Spectrogram, SpectrumKind, HOP_SIZE, WINDOW_SIZE};
use crate::audio_io::AudioClip;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// HTK Mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters with unit peak, equally spaced on the Mel scale from
/// 0 Hz to Nyquist. Stored sparsely: each filter keeps its first nonzero FFT
/// bin and the run of weights from there.
#[derive(Debug, Clone)]
pub struct MelFilterbank<T> {
    filters: Vec<(usize, Vec<T>)>,
    centers_hz: Vec<f64>,
    n_fft_bins: usize,
}

impl<T: Scalar> MelFilterbank<T> {
    pub fn new(sample_rate: u32, n_fft: usize, mel_bins: usize) -> Result<Self> {
        if mel_bins == 0 {
            return Err(Error::InvalidArgument("mel_bins must be positive".into()));
        }
        let nyquist = sample_rate as f64 / 2.0;
        let mel_max = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..mel_bins + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (mel_bins + 1) as f64))
            .collect();
        let n_fft_bins = n_fft / 2 + 1;
        let bin_hz = sample_rate as f64 / n_fft as f64;
        let mut filters = Vec::with_capacity(mel_bins);
        for m in 0..mel_bins {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut start = None;
            let mut weights = Vec::new();
            for b in 0..n_fft_bins {
                let f = b as f64 * bin_hz;
                let w = if f > lo && f <= center {
                    (f - lo) / (center - lo)
                } else if f > center && f < hi {
                    (hi - f) / (hi - center)
                } else {
                    0.0
                };
                if w > 0.0 {
                    start.get_or_insert(b);
                    weights.push(T::of(w));
                } else if start.is_some() {
                    break;
                }
            }
            filters.push((start.unwrap_or(0), weights));
        }
        Ok(MelFilterbank {
            filters,
            centers_hz: edges[1..=mel_bins].to_vec(),
            n_fft_bins,
        })
    }

    pub fn mel_bins(&self) -> usize {
        self.filters.len()
    }

    /// Peak frequency of each filter in Hz.
    pub fn center_frequencies(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Projects one power spectrum (`n_fft / 2 + 1` bins) onto the filters.
    pub fn apply(&self, power: &[T], out: &mut [T]) {
        debug_assert_eq!(power.len(), self.n_fft_bins);
        for (o, (start, weights)) in out.iter_mut().zip(&self.filters) {
            *o = weights
                .iter()
                .zip(&power[*start..])
                .fold(T::zero(), |acc, (&w, &p)| acc + w * p);
        }
    }
}

/// Mel spectrogram extractor with a planned FFT, a periodic Hann window and
/// a filterbank built once and shared read-only.
pub struct MelExtractor<T: Scalar> {
    params: FrameParams,
    fft: Arc<dyn Fft<T>>,
    window: Vec<T>,
    filterbank: MelFilterbank<T>,
}

impl<T: Scalar> MelExtractor<T> {
    pub fn new(sample_rate: u32, mel_bins: usize) -> Result<Self> {
        Self::with_params(
            FrameParams {
                window_size: WINDOW_SIZE,
                hop: HOP_SIZE,
                sample_rate,
            },
            mel_bins,
        )
    }

    pub fn with_params(params: FrameParams, mel_bins: usize) -> Result<Self> {
        if params.window_size == 0 || params.hop == 0 {
            return Err(Error::InvalidArgument("window and hop must be positive".into()));
        }
        let n = params.window_size;
        let window = (0..n)
            .map(|i| {
                T::of(0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
            })
            .collect();
        Ok(MelExtractor {
            params,
            fft: FftPlanner::new().plan_fft_forward(n),
            window,
            filterbank: MelFilterbank::new(params.sample_rate, n, mel_bins)?,
        })
    }

    pub fn params(&self) -> FrameParams {
        self.params
    }

    pub fn mel_bins(&self) -> usize {
        self.filterbank.mel_bins()
    }

    pub fn filterbank(&self) -> &MelFilterbank<T> {
        &self.filterbank
    }

    /// Power-domain Mel spectrogram of `clip`.
    pub fn power(&self, clip: &AudioClip) -> Result<Spectrogram<T>> {
        if clip.sample_rate() != self.params.sample_rate {
            return Err(Error::InvalidArgument(format!(
                "clip at {} Hz, extractor at {} Hz",
                clip.sample_rate(),
                self.params.sample_rate
            )));
        }
        let samples: Vec<T> = super::clip_as(clip);
        self.power_of(&samples)
    }

    /// Power-domain Mel spectrogram of raw samples at the extractor's rate.
    pub fn power_of(&self, samples: &[T]) -> Result<Spectrogram<T>> {
        let steps = self.params.time_steps(samples.len())?;
        let n = self.params.window_size;
        let bins = self.mel_bins();
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.fft.get_inplace_scratch_len()];
        let mut power = vec![T::zero(); n / 2 + 1];
        let mut data = vec![T::zero(); steps * bins];
        for step in 0..steps {
            let start = step * self.params.hop;
            for (c, (&x, &w)) in buf.iter_mut().zip(samples[start..start + n].iter().zip(&self.window)) {
                *c = Complex::new(x * w, T::zero());
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            self.filterbank
                .apply(&power, &mut data[step * bins..(step + 1) * bins]);
        }
        Spectrogram::from_column_major(data, bins, steps, self.params, SpectrumKind::MelPower)
    }
}
