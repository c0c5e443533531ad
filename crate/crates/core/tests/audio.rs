use amc_core::{load_audio, segment, write_audio, AudioClip, SAMPLE_RATE};
use proptest::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use std::f64::consts::TAU;
use std::path::Path;

fn write_float_wav(path: &Path, channels: &[Vec<f32>], sample_rate: u32) {
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for n in 0..channels[0].len() {
        for ch in channels {
            w.write_sample(ch[n]).unwrap();
        }
    }
    w.finalize().unwrap();
}

fn write_pcm16(path: &Path, samples: &[f32], sample_rate: u32) {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for &s in samples {
        w.write_sample((s * 32767.0).round() as i16).unwrap();
    }
    w.finalize().unwrap();
}

fn sine(freq: f64, sample_rate: u32, len: usize, amp: f64) -> Vec<f32> {
    (0..len)
        .map(|n| (amp * (TAU * freq * n as f64 / sample_rate as f64).sin()) as f32)
        .collect()
}

/// Frequency of the strongest bin of a Hann-windowed 2048-point FFT taken
/// from the middle of `samples`.
fn dominant_hz(samples: &[f32]) -> f64 {
    let n = 2048;
    let start = samples.len() / 2 - n / 2;
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|i| {
            let w = 0.5 - 0.5 * (TAU * i as f64 / n as f64).cos();
            Complex::new(samples[start + i] as f64 * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let k = (0..n / 2).max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm())).unwrap();
    k as f64 * SAMPLE_RATE as f64 / n as f64
}

#[test]
fn resampled_tone_keeps_its_pitch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a440.wav");
    write_pcm16(&path, &sine(440.0, 44_100, 44_100, 0.5), 44_100);
    let clip = load_audio(&path).unwrap();
    assert_eq!(clip.sample_rate(), SAMPLE_RATE);
    assert_eq!(clip.len(), 48_000);
    let bin_hz = SAMPLE_RATE as f64 / 2048.0;
    let direct = dominant_hz(&sine(440.0, SAMPLE_RATE, 48_000, 0.5));
    let got = dominant_hz(clip.samples());
    assert!((got - 440.0).abs() <= bin_hz, "{got} Hz");
    assert_eq!(got, direct);
}

#[test]
fn opposite_stereo_channels_cancel() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("st.wav");
    write_float_wav(&path, &[vec![0.5; 4800], vec![-0.5; 4800]], SAMPLE_RATE);
    let clip = load_audio(&path).unwrap();
    assert!(clip.samples().iter().all(|&s| s == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mixdown_is_the_mean_of_channel_loads(seed in any::<u64>(), channels in 2usize..5, len in 10usize..400) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<Vec<f32>> = (0..channels)
            .map(|_| (0..len).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let multi = dir.path().join("multi.wav");
        write_float_wav(&multi, &data, SAMPLE_RATE);
        let mixed = load_audio(&multi).unwrap();
        let mut mean = vec![0.0f64; len];
        for (c, ch) in data.iter().enumerate() {
            let p = dir.path().join(format!("ch{c}.wav"));
            write_float_wav(&p, std::slice::from_ref(ch), SAMPLE_RATE);
            for (m, s) in mean.iter_mut().zip(load_audio(&p).unwrap().samples()) {
                *m += *s as f64 / channels as f64;
            }
        }
        for (a, b) in mixed.samples().iter().zip(&mean) {
            prop_assert!((*a as f64 - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn write_load_round_trip_within_one_step(seed in any::<u64>(), len in 1usize..2000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<f32> = (0..len).map(|_| rng.gen_range(-1.0f32..=1.0)).collect();
        let clip = AudioClip::new(samples, SAMPLE_RATE, "x", 0.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("one.wav");
        write_audio(&clip, &p1).unwrap();
        let once = load_audio(&p1).unwrap();
        prop_assert_eq!(once.len(), len);
        for (a, b) in clip.samples().iter().zip(once.samples()) {
            prop_assert!((a - b).abs() <= 1.0 / 32768.0);
        }
        let p2 = dir.path().join("two.wav");
        write_audio(&once, &p2).unwrap();
        let twice = load_audio(&p2).unwrap();
        prop_assert_eq!(once.samples(), twice.samples());
    }

    #[test]
    fn segment_lengths_and_offsets(len in 48_000usize..300_000, start in 0.0f64..100.0) {
        let clip = AudioClip::new(vec![0.25; len], SAMPLE_RATE, "s", start).unwrap();
        let frames = segment(&clip, 1.0).unwrap();
        prop_assert_eq!(frames.len(), len / 48_000);
        prop_assert!(frames.iter().all(|f| f.len() == 48_000));
        prop_assert!(frames.iter().map(AudioClip::len).sum::<usize>() <= len);
        for pair in frames.windows(2) {
            prop_assert!((pair[1].offset_s() - pair[0].offset_s() - 1.0).abs() < 1e-9);
        }
        prop_assert_eq!(frames[0].offset_s(), start);
    }
}
