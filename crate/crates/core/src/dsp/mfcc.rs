use super::{MelExtractor, Spectrogram, SpectrumKind};
use crate::audio_io::AudioClip;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Orthonormal DCT-II basis, `n_out × n_in`, row-major.
///
/// `X[k] = s_k Σ_n x[n] cos(π (n + ½) k / N)` with `s_0 = √(1/N)` and
/// `s_k = √(2/N)` otherwise.
pub fn dct_ii_matrix<T: Scalar>(n_out: usize, n_in: usize) -> Vec<T> {
    let n = n_in as f64;
    let mut m = Vec::with_capacity(n_out * n_in);
    for k in 0..n_out {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        for i in 0..n_in {
            let angle = std::f64::consts::PI * (i as f64 + 0.5) * k as f64 / n;
            m.push(T::of(scale * angle.cos()));
        }
    }
    m
}

pub struct MfccExtractor<T: Scalar> {
    mel: MelExtractor<T>,
    n_mfcc: usize,
    dct: Vec<T>,
}

impl<T: Scalar> MfccExtractor<T> {
    pub fn new(sample_rate: u32, n_mfcc: usize, mel_bins: usize) -> Result<Self> {
        if n_mfcc == 0 || n_mfcc > mel_bins {
            return Err(Error::InvalidArgument(format!(
                "n_mfcc must be in 1..={mel_bins}, got {n_mfcc}"
            )));
        }
        Ok(MfccExtractor {
            mel: MelExtractor::new(sample_rate, mel_bins)?,
            n_mfcc,
            dct: dct_ii_matrix(n_mfcc, mel_bins),
        })
    }

    pub fn mel(&self) -> &MelExtractor<T> {
        &self.mel
    }

    pub fn n_mfcc(&self) -> usize {
        self.n_mfcc
    }

    pub fn compute(&self, clip: &AudioClip) -> Result<Spectrogram<T>> {
        let log_mel = self.mel.power(clip)?.to_log()?;
        self.from_log_mel(&log_mel)
    }

    /// DCT-II of each column of a log-Mel spectrogram.
    pub fn from_log_mel(&self, log_mel: &Spectrogram<T>) -> Result<Spectrogram<T>> {
        let bins = self.mel.mel_bins();
        if log_mel.rows() != bins {
            return Err(Error::ShapeMismatch(format!(
                "{} mel rows, extractor expects {bins}",
                log_mel.rows()
            )));
        }
        let mut data = Vec::with_capacity(self.n_mfcc * log_mel.time_steps());
        for col in log_mel.columns() {
            for basis in self.dct.chunks_exact(bins) {
                data.push(basis.iter().zip(col).fold(T::zero(), |a, (&b, &x)| a + b * x));
            }
        }
        Spectrogram::from_column_major(
            data,
            self.n_mfcc,
            log_mel.time_steps(),
            log_mel.params(),
            SpectrumKind::Mfcc,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_io::SAMPLE_RATE;
    use crate::dsp::LOG_EPS;

    #[test]
    fn silence_has_only_dc_coefficient() {
        let clip = AudioClip::new(vec![0.0; 48000], SAMPLE_RATE, "z", 0.0).unwrap();
        let m = crate::dsp::mfcc::<f64>(&clip, 20, 64).unwrap();
        assert_eq!((m.rows(), m.time_steps()), (20, 45));
        let c0 = 64f64.sqrt() * LOG_EPS.ln();
        for col in m.columns() {
            assert!((col[0] - c0).abs() < 1e-9 * c0.abs());
            assert!(col[1..].iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn dct_rows_are_orthonormal() {
        let m = dct_ii_matrix::<f64>(16, 16);
        for a in 0..16 {
            for b in 0..16 {
                let dot: f64 = (0..16).map(|i| m[a * 16 + i] * m[b * 16 + i]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_too_many_coefficients() {
        assert!(MfccExtractor::<f64>::new(SAMPLE_RATE, 65, 64).is_err());
        assert!(MfccExtractor::<f64>::new(SAMPLE_RATE, 0, 64).is_err());
    }
}
