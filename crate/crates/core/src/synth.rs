//! Seeded synthetic audio: harmonic tones, chirps, noise bursts and impulse
//! trains, plus two ready-made corpora (a labeled tone-family retrieval set
//! and a set of slowly evolving sequences for training).

use std::f64::consts::TAU;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio_io::{frame_id, AudioClip, SAMPLE_RATE};
use crate::evaluation::LabelRow;

fn samples(duration_s: f64) -> usize {
    (duration_s * SAMPLE_RATE as f64).round() as usize
}

/// Adds a harmonic tone whose fundamental glides exponentially from `f0`
/// by `glide_st_per_s` semitones per second. `amps[h]` is the amplitude of
/// harmonic `h + 1`; partials above Nyquist are skipped.
pub fn add_tone(out: &mut [f32], f0: f64, glide_st_per_s: f64, amps: &[f64], phase: f64) {
    let sr = SAMPLE_RATE as f64;
    let mut theta = phase;
    for (n, s) in out.iter_mut().enumerate() {
        let f = f0 * (glide_st_per_s * n as f64 / sr / 12.0).exp2();
        let mut v = 0.0;
        for (h, a) in amps.iter().enumerate() {
            let k = (h + 1) as f64;
            if k * f < 0.45 * sr {
                v += a * (k * theta).sin();
            }
        }
        *s += v as f32;
        theta = (theta + TAU * f / sr) % (TAU * 64.0);
    }
}

/// Adds a linear sine sweep from `f_start` to `f_end` across `out`.
pub fn add_chirp(out: &mut [f32], f_start: f64, f_end: f64, amp: f64) {
    let sr = SAMPLE_RATE as f64;
    let len = out.len().max(1) as f64;
    let mut theta = 0.0f64;
    for (n, s) in out.iter_mut().enumerate() {
        let f = f_start + (f_end - f_start) * n as f64 / len;
        *s += (amp * theta.sin()) as f32;
        theta = (theta + TAU * f / sr) % TAU;
    }
}

/// Adds white noise passed through a one-pole low-pass at `cutoff_hz`,
/// with a short linear fade at both ends.
pub fn add_noise_burst<R: Rng>(rng: &mut R, out: &mut [f32], cutoff_hz: f64, amp: f64) {
    let a = (-TAU * cutoff_hz / SAMPLE_RATE as f64).exp();
    let fade = (out.len() / 20).max(1);
    let len = out.len();
    let mut y = 0.0f64;
    for (n, s) in out.iter_mut().enumerate() {
        let x: f64 = rng.gen_range(-1.0..1.0);
        y = (1.0 - a) * x + a * y;
        let env = (n.min(len - 1 - n) as f64 / fade as f64).min(1.0);
        *s += (amp * env * y / (1.0 - a).sqrt().max(1e-3)) as f32;
    }
}

/// Adds unit clicks of height `amp` every `1 / rate_hz` seconds.
pub fn add_impulse_train(out: &mut [f32], rate_hz: f64, amp: f64) {
    let period = (SAMPLE_RATE as f64 / rate_hz).max(1.0);
    let mut t = 0.0;
    while (t as usize) < out.len() {
        out[t as usize] += amp as f32;
        t += period;
    }
}

/// Cascade of `order` one-pole high-pass sections at `cutoff_hz`, in place.
pub fn high_pass(data: &mut [f32], cutoff_hz: f64, order: usize) {
    let a = (-TAU * cutoff_hz / SAMPLE_RATE as f64).exp();
    for _ in 0..order {
        let (mut x_prev, mut y) = (0.0f64, 0.0f64);
        for s in data.iter_mut() {
            let x = *s as f64;
            y = a * (y + x - x_prev);
            x_prev = x;
            *s = y as f32;
        }
    }
}

/// Adds a faint noise floor so log spectra never hit the epsilon.
pub fn add_floor<R: Rng>(rng: &mut R, out: &mut [f32], amp: f64) {
    for s in out.iter_mut() {
        *s += (amp * rng.gen_range(-1.0..1.0)) as f32;
    }
}

fn random_timbre<R: Rng>(rng: &mut R) -> Vec<f64> {
    let count = rng.gen_range(3..=8);
    let decay = rng.gen_range(0.5..2.0);
    (1..=count)
        .map(|h| rng.gen_range(0.3..1.0) / (h as f64).powf(decay))
        .collect()
}

/// Richer, less varied timbre: 8 to 12 partials with mild roll-off.
fn family_timbre<R: Rng>(rng: &mut R) -> Vec<f64> {
    let count = rng.gen_range(8..=12);
    let decay = rng.gen_range(0.5..1.5);
    (1..=count)
        .map(|h| rng.gen_range(0.5..1.0) / (h as f64).powf(decay))
        .collect()
}

fn clip_from(mut data: Vec<f32>, source: String) -> AudioClip {
    for s in &mut data {
        *s = s.clamp(-1.0, 1.0);
    }
    AudioClip::new(data, SAMPLE_RATE, source, 0.0).expect("synthetic audio is finite")
}

/// A labeled retrieval set built from tone families.
#[derive(Debug, Clone)]
pub struct RetrievalSet {
    pub clips: Vec<AudioClip>,
    /// Query / gallery relevance rows over 1-second frame ids.
    pub labels: Vec<LabelRow>,
}

/// Parameters of [`retrieval_set`].
#[derive(Debug, Clone, Copy)]
pub struct RetrievalSetConfig {
    pub families: usize,
    pub sources_per_family: usize,
    pub seconds: usize,
    /// Spacing between family fundamentals.
    pub semitones: f64,
    pub base_f0: f64,
    /// Amplitude of the uniform noise floor under every source.
    pub floor: f64,
}

impl Default for RetrievalSetConfig {
    fn default() -> Self {
        RetrievalSetConfig {
            families: 6,
            sources_per_family: 4,
            seconds: 3,
            semitones: 4.0,
            base_f0: 131.0,
            floor: 0.02,
        }
    }
}

/// Tone families: every source in a family shares one steady fundamental
/// but has its own random timbre. The first source of each family provides
/// the queries (one per second); every frame of every other source is
/// labeled for each query, relevant iff it belongs to the same family.
pub fn retrieval_set(seed: u64, cfg: &RetrievalSetConfig) -> RetrievalSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clips = Vec::new();
    let mut family_of = Vec::new();
    for fam in 0..cfg.families {
        let f0 = cfg.base_f0 * (cfg.semitones * fam as f64 / 12.0).exp2();
        for src in 0..cfg.sources_per_family {
            let mut data = vec![0.0f32; samples(cfg.seconds as f64)];
            let amps: Vec<f64> = family_timbre(&mut rng).iter().map(|a| a * 0.2).collect();
            add_tone(&mut data, f0, 0.0, &amps, rng.gen_range(0.0..TAU));
            add_floor(&mut rng, &mut data, cfg.floor);
            clips.push(clip_from(data, format!("fam{fam:02}_src{src:02}")));
            family_of.push(fam);
        }
    }
    let mut labels = Vec::new();
    for (qi, qclip) in clips.iter().enumerate() {
        if qi % cfg.sources_per_family != 0 {
            continue;
        }
        for qs in 0..cfg.seconds {
            let query_id = frame_id(qclip.source_id(), qs as f64);
            for (gi, gclip) in clips.iter().enumerate() {
                if gi == qi {
                    continue;
                }
                for gs in 0..cfg.seconds {
                    labels.push(LabelRow {
                        query_id: query_id.clone(),
                        gallery_id: frame_id(gclip.source_id(), gs as f64),
                        relevance: u8::from(family_of[gi] == family_of[qi]),
                    });
                }
            }
        }
    }
    RetrievalSet { clips, labels }
}

/// Cutoff separating the slow tonal layer of [`sequence`] from its
/// distractors.
pub const DISTRACTOR_CUTOFF_HZ: f64 = 4000.0;

/// One training sequence: a quiet low harmonic tone whose pitch drifts
/// slowly across the clip, overlaid with a loud, independently drawn
/// high-band distractor each second (noise burst, impulse train or chirp,
/// high-passed at [`DISTRACTOR_CUTOFF_HZ`]). Adjacent seconds share the
/// tonal layer but rarely the distractor.
pub fn sequence<R: Rng>(rng: &mut R, frames: usize, source_id: String) -> AudioClip {
    let frame_len = samples(1.0);
    let mut data = vec![0.0f32; frames * frame_len];
    let f0 = 110.0 * rng.gen_range(0.0f64..1.6).exp2();
    let glide = rng.gen_range(-0.5..0.5);
    let amps: Vec<f64> = random_timbre(rng).iter().map(|a| a * 0.1).collect();
    add_tone(&mut data, f0, glide, &amps, rng.gen_range(0.0..TAU));
    let mut noise = vec![0.0f32; data.len()];
    for chunk in noise.chunks_exact_mut(frame_len) {
        let amp = rng.gen_range(0.1..0.4);
        match rng.gen_range(0..3) {
            0 => {
                let cutoff = DISTRACTOR_CUTOFF_HZ * rng.gen_range(0.0f64..2.0).exp2();
                add_noise_burst(rng, chunk, cutoff, amp);
            }
            1 => add_impulse_train(chunk, rng.gen_range(4.0..80.0), amp),
            _ => {
                let a = DISTRACTOR_CUTOFF_HZ * rng.gen_range(0.0f64..2.5).exp2();
                let b = DISTRACTOR_CUTOFF_HZ * rng.gen_range(0.0f64..2.5).exp2();
                add_chirp(chunk, a, b, amp);
            }
        }
    }
    high_pass(&mut noise, DISTRACTOR_CUTOFF_HZ, 8);
    for (s, n) in data.iter_mut().zip(&noise) {
        *s += n;
    }
    add_floor(rng, &mut data, 1e-3);
    clip_from(data, source_id)
}

/// `count` seeded sequences of `frames` seconds, named `seq0000`, ...
pub fn training_sequences(seed: u64, count: usize, frames: usize) -> Vec<AudioClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| sequence(&mut rng, frames, format!("seq{i:04}")))
        .collect()
}
