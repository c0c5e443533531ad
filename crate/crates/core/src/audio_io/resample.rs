//! Band-limited rational-ratio resampling with a Kaiser-windowed sinc kernel.
//!
//! The kernel spans `ZERO_CROSSINGS` zero crossings on each side of the
//! interpolation point, with a Kaiser window of shape `KAISER_BETA` (roughly
//! 85 dB sidelobe suppression). The cutoff sits at `ROLLOFF` of the lower of
//! the two Nyquist frequencies so the transition band ends before it.

const ZERO_CROSSINGS: usize = 48;
const KAISER_BETA: f64 = 8.6;
const ROLLOFF: f64 = 0.94;
/// Largest polyphase table (in coefficients) we are willing to precompute.
const MAX_TABLE: usize = 1 << 22;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Resampler for a fixed `from -> to` rate pair.
pub struct SincResampler {
    up: u64,
    down: u64,
    cutoff: f64,
    taps: usize,
    i0_beta: f64,
    table: Option<Vec<f64>>,
}

impl SincResampler {
    pub fn new(from: u32, to: u32) -> Self {
        assert!(from > 0 && to > 0, "sample rates must be positive");
        let g = gcd(from as u64, to as u64);
        let up = to as u64 / g;
        let down = from as u64 / g;
        let cutoff = ROLLOFF * (up as f64 / down as f64).min(1.0);
        let taps = (ZERO_CROSSINGS as f64 / cutoff).ceil() as usize;
        let mut rs = SincResampler {
            up,
            down,
            cutoff,
            taps,
            i0_beta: bessel_i0(KAISER_BETA),
            table: None,
        };
        let size = up as usize * 2 * taps;
        if size <= MAX_TABLE {
            let mut table = Vec::with_capacity(size);
            for phase in 0..up {
                let frac = phase as f64 / up as f64;
                for j in 0..2 * taps {
                    table.push(rs.kernel(j as f64 - taps as f64 + frac));
                }
            }
            rs.table = Some(table);
        }
        rs
    }

    /// Impulse response at `x` input samples from the interpolation point.
    fn kernel(&self, x: f64) -> f64 {
        let half_width = ZERO_CROSSINGS as f64 / self.cutoff;
        let r = x / half_width;
        if r.abs() >= 1.0 {
            return 0.0;
        }
        let arg = std::f64::consts::PI * self.cutoff * x;
        let sinc = if arg.abs() < 1e-12 { 1.0 } else { arg.sin() / arg };
        let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / self.i0_beta;
        self.cutoff * sinc * window
    }

    /// Number of output samples produced for `len` input samples.
    pub fn output_len(&self, len: usize) -> usize {
        ((len as u64 * self.up).div_ceil(self.down)) as usize
    }

    pub fn process(&self, input: &[f32]) -> Vec<f32> {
        if self.up == self.down {
            return input.to_vec();
        }
        let n_out = self.output_len(input.len());
        let taps = self.taps as i64;
        let mut out = Vec::with_capacity(n_out);
        for n in 0..n_out as u64 {
            let pos = n * self.down;
            let base = (pos / self.up) as i64;
            let phase = (pos % self.up) as usize;
            let mut acc = 0.0f64;
            // offset j = base - k runs over [-taps, taps)
            for jj in 0..2 * self.taps {
                let j = jj as i64 - taps;
                let k = base - j;
                if k < 0 || k >= input.len() as i64 {
                    continue;
                }
                let w = match &self.table {
                    Some(t) => t[phase * 2 * self.taps + jj],
                    None => self.kernel(j as f64 + phase as f64 / self.up as f64),
                };
                acc += w * input[k as usize] as f64;
            }
            out.push(acc as f32);
        }
        out
    }
}

/// Resamples `input` from `from` Hz to `to` Hz.
pub fn resample(input: &[f32], from: u32, to: u32) -> Vec<f32> {
    SincResampler::new(from, to).process(input)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, rate: u32, len: usize) -> Vec<f32> {
        (0..len)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin() as f32 * 0.5)
            .collect()
    }

    fn rms(x: &[f32]) -> f64 {
        (x.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn identity_when_rates_match() {
        let x = tone(440.0, 48000, 1000);
        assert_eq!(resample(&x, 48000, 48000), x);
    }

    #[test]
    fn output_length_is_rate_ratio() {
        let rs = SincResampler::new(44100, 48000);
        assert_eq!(rs.output_len(44100), 48000);
        assert_eq!(SincResampler::new(16000, 48000).output_len(16000), 48000);
    }

    #[test]
    fn upsampled_tone_matches_direct_synthesis() {
        let x = tone(1000.0, 44100, 44100);
        let y = resample(&x, 44100, 48000);
        let direct = tone(1000.0, 48000, 48000);
        // ignore the kernel's edge transient
        let err: f64 = y[2000..46000]
            .iter()
            .zip(&direct[2000..46000])
            .map(|(a, b)| ((a - b) as f64).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "max error {err}");
    }

    #[test]
    fn downsampling_rejects_content_above_new_nyquist() {
        // 15 kHz cannot be represented at 22.05 kHz and must be filtered, not aliased
        let x = tone(15000.0, 48000, 48000);
        let y = resample(&x, 48000, 22050);
        let level = rms(&y[2000..20000]) / rms(&x);
        assert!(20.0 * level.log10() < -60.0, "attenuation {} dB", 20.0 * level.log10());
    }

    #[test]
    fn downsampling_keeps_passband() {
        let x = tone(3000.0, 48000, 48000);
        let y = resample(&x, 48000, 22050);
        let ratio = rms(&y[2000..20000]) / rms(&x);
        assert!((ratio - 1.0).abs() < 1e-3, "ratio {ratio}");
    }
}
