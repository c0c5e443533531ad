//! Transition planning and rendering between a query frame and its match.
//!
//! The cut point is the pair of spectrogram time steps with the largest
//! inner product between their Mel columns (computed on power-domain
//! energies, so loud events win). The crossfade length is the inverse of
//! the population variance of the column cosine similarities scaled by
//! `φ`, clamped to `[l_min, l_max]` and to the audio available around both
//! cut points.

mod render;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio_io::AudioClip;
use crate::dsp::{MelExtractor, Spectrogram, DEFAULT_MEL_BINS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use render::{equal_power_weights, render};

/// Raw and cosine column-similarity matrices between two spectrograms.
/// Row `i` is a query time step, column `j` a match time step.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix<T> {
    raw: Vec<T>,
    cosine: Vec<T>,
    t: usize,
}

impl<T: Scalar> SimilarityMatrix<T> {
    /// Builds a matrix from row-major `t × t` raw and cosine values.
    pub fn from_parts(raw: Vec<T>, cosine: Vec<T>, t: usize) -> Result<Self> {
        if t == 0 || raw.len() != t * t || cosine.len() != t * t {
            return Err(Error::ShapeMismatch(format!(
                "{} raw and {} cosine values for t = {t}",
                raw.len(),
                cosine.len()
            )));
        }
        if cosine.iter().any(|c| c.is_nan() || c.abs() > T::one() + T::of(1e-9)) {
            return Err(Error::InvalidArgument("cosine entry outside [-1, 1]".into()));
        }
        Ok(SimilarityMatrix { raw, cosine, t })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn raw(&self, i: usize, j: usize) -> T {
        self.raw[i * self.t + j]
    }

    pub fn cosine(&self, i: usize, j: usize) -> T {
        self.cosine[i * self.t + j]
    }

    pub fn raw_values(&self) -> &[T] {
        &self.raw
    }

    pub fn cosine_values(&self) -> &[T] {
        &self.cosine
    }
}

/// Dot products and cosine similarities between every query column and
/// every match column. Zero-norm columns have cosine 0.
pub fn similarity_matrix<T: Scalar>(
    query: &Spectrogram<T>,
    matched: &Spectrogram<T>,
) -> Result<SimilarityMatrix<T>> {
    if query.rows() != matched.rows() || query.time_steps() != matched.time_steps() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            query.rows(),
            query.time_steps(),
            matched.rows(),
            matched.time_steps()
        )));
    }
    let t = query.time_steps();
    let dot = |a: &[T], b: &[T]| a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
    let q_norms: Vec<T> = query.columns().map(|c| dot(c, c).sqrt()).collect();
    let m_norms: Vec<T> = matched.columns().map(|c| dot(c, c).sqrt()).collect();
    let mut raw = Vec::with_capacity(t * t);
    let mut cosine = Vec::with_capacity(t * t);
    for (qc, &qn) in query.columns().zip(&q_norms) {
        for (mc, &mn) in matched.columns().zip(&m_norms) {
            let r = dot(qc, mc);
            raw.push(r);
            let denom = qn * mn;
            cosine.push(if denom > T::zero() {
                (r / denom).max(-T::one()).min(T::one())
            } else {
                T::zero()
            });
        }
    }
    Ok(SimilarityMatrix { raw, cosine, t })
}

/// Position of the largest raw similarity; ties go to the smallest `i`, then `j`.
pub fn max_ss<T: Scalar>(sim: &SimilarityMatrix<T>) -> (usize, usize) {
    let mut best = 0;
    for (k, &v) in sim.raw.iter().enumerate() {
        if v > sim.raw[best] {
            best = k;
        }
    }
    (best / sim.t, best % sim.t)
}

/// Population variance of all cosine entries.
pub fn similarity_variance<T: Scalar>(sim: &SimilarityMatrix<T>) -> f64 {
    let n = sim.cosine.len() as f64;
    let mean = sim.cosine.iter().map(|c| c.f64()).sum::<f64>() / n;
    sim.cosine
        .iter()
        .map(|c| (c.f64() - mean).powi(2))
        .sum::<f64>()
        / n
}

/// `1 / (variance · φ)` clamped to `[l_min, l_max]`; zero variance gives `l_max`.
pub fn crossfade_from_variance(variance: f64, phi: f64, l_min: f64, l_max: f64) -> f64 {
    (1.0 / (variance * phi)).clamp(l_min, l_max)
}

/// Adaptive crossfade length in seconds.
pub fn adaptive_crossfade_length<T: Scalar>(
    sim: &SimilarityMatrix<T>,
    phi: f64,
    l_min: f64,
    l_max: f64,
) -> f64 {
    crossfade_from_variance(similarity_variance(sim), phi, l_min, l_max)
}

/// How the query is joined to the match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Butt splice at the frame boundary.
    #[serde(rename = "concat")]
    Concat,
    /// Fixed-length crossfade at the frame boundary.
    #[serde(rename = "crossfade")]
    FixedCrossfade,
    /// Splice at the best-matching time steps, no fade.
    #[serde(rename = "max-ss")]
    MaxSS,
    /// Splice at the best-matching time steps with a variance-adaptive fade.
    #[serde(rename = "max-ss-adaptive")]
    MaxSSAdaptive,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Concat,
        Strategy::FixedCrossfade,
        Strategy::MaxSS,
        Strategy::MaxSSAdaptive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Concat => "concat",
            Strategy::FixedCrossfade => "crossfade",
            Strategy::MaxSS => "max-ss",
            Strategy::MaxSSAdaptive => "max-ss-adaptive",
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy {s:?}")))
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub phi: f64,
    /// Fade length of [`Strategy::FixedCrossfade`].
    pub fixed_s: f64,
    pub l_min: f64,
    pub l_max: f64,
    pub mel_bins: usize,
    /// Compare log-Mel columns instead of power-domain ones.
    pub log_similarity: bool,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            phi: 8.0,
            fixed_s: 0.25,
            l_min: 0.05,
            l_max: 1.0,
            mel_bins: DEFAULT_MEL_BINS,
            log_similarity: false,
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.phi > 0.0
            && self.fixed_s >= 0.0
            && self.l_min >= 0.0
            && self.l_max >= self.l_min
            && self.mel_bins > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid plan config {self:?}")))
        }
    }
}

/// A frame of `len` samples at `start` inside a longer source clip. Audio
/// outside the frame is only used to extend crossfades past its edges.
#[derive(Debug, Clone, Copy)]
pub struct ContextFrame<'a> {
    source: &'a AudioClip,
    start: usize,
    len: usize,
}

impl<'a> ContextFrame<'a> {
    pub fn new(source: &'a AudioClip, start: usize, len: usize) -> Result<Self> {
        if start + len > source.len() || len == 0 {
            return Err(Error::InvalidArgument(format!(
                "frame {start}..{} outside a clip of {} samples",
                start + len,
                source.len()
            )));
        }
        Ok(ContextFrame { source, start, len })
    }

    /// The whole clip as a frame without context.
    pub fn whole(clip: &'a AudioClip) -> Self {
        ContextFrame {
            source: clip,
            start: 0,
            len: clip.len(),
        }
    }

    pub fn source(&self) -> &'a AudioClip {
        self.source
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn samples(&self) -> &'a [f32] {
        &self.source.samples()[self.start..self.start + self.len]
    }
}

/// Where and how to cut from the query into the match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionPlan {
    pub strategy: Strategy,
    pub cut_i: usize,
    pub cut_j: usize,
    /// Cut position in query frame samples.
    pub query_cut: usize,
    /// Cut position in match frame samples.
    pub match_cut: usize,
    pub crossfade_s: f64,
    /// Fade length the strategy asked for before capping to the audio
    /// available around the cut.
    pub requested_s: f64,
    /// Cosine-similarity variance, when it was computed.
    pub variance: Option<f64>,
    pub phi: f64,
    pub sample_rate: u32,
}

/// JSON form of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDump {
    pub strategy: Strategy,
    pub cut_i: usize,
    pub cut_j: usize,
    pub cut_query_s: f64,
    pub cut_match_s: f64,
    pub crossfade_s: f64,
    pub requested_s: f64,
    pub var: Option<f64>,
    pub phi: f64,
}

impl TransitionPlan {
    pub fn dump(&self) -> PlanDump {
        let sr = self.sample_rate as f64;
        PlanDump {
            strategy: self.strategy,
            cut_i: self.cut_i,
            cut_j: self.cut_j,
            cut_query_s: self.query_cut as f64 / sr,
            cut_match_s: self.match_cut as f64 / sr,
            crossfade_s: self.crossfade_s,
            requested_s: self.requested_s,
            var: self.variance,
            phi: self.phi,
        }
    }
}

/// Seconds of crossfade that fit symmetrically around both cut points:
/// query audio on both sides of its cut (before it within the frame, after
/// it within the source), match audio likewise mirrored.
fn available_crossfade_s(query: &ContextFrame, matched: &ContextFrame, query_cut: usize, match_cut: usize) -> f64 {
    let q_abs = query.start + query_cut;
    let m_abs = matched.start + match_cut;
    let room = [
        query_cut,
        query.source.len() - q_abs,
        m_abs,
        matched.len - match_cut,
    ]
    .into_iter()
    .min()
    .unwrap_or(0);
    2.0 * room as f64 / query.source.sample_rate() as f64
}

fn spectrogram_for<T: Scalar>(frame: &ContextFrame, mel: &MelExtractor<T>, log: bool) -> Result<Spectrogram<T>> {
    let samples: Vec<T> = frame.samples().iter().map(|&s| T::of(s as f64)).collect();
    let spec = mel.power_of(&samples)?;
    if log {
        spec.to_log()
    } else {
        Ok(spec)
    }
}

/// Column similarities of the two frames' Mel spectrograms.
pub fn frame_similarity<T: Scalar>(
    query: &ContextFrame,
    matched: &ContextFrame,
    cfg: &PlanConfig,
) -> Result<SimilarityMatrix<T>> {
    let sr = query.source.sample_rate();
    if matched.source.sample_rate() != sr {
        return Err(Error::InvalidArgument("query and match sample rates differ".into()));
    }
    let mel = MelExtractor::new(sr, cfg.mel_bins)?;
    let q = spectrogram_for(query, &mel, cfg.log_similarity)?;
    let m = spectrogram_for(matched, &mel, cfg.log_similarity)?;
    similarity_matrix(&q, &m)
}

/// Plans a transition with a precomputed similarity matrix (only consulted
/// by the Max-SS strategies).
pub fn plan_with_similarity<T: Scalar>(
    query: &ContextFrame,
    matched: &ContextFrame,
    sim: &SimilarityMatrix<T>,
    strategy: Strategy,
    cfg: &PlanConfig,
) -> Result<TransitionPlan> {
    cfg.validate()?;
    let sr = query.source.sample_rate();
    let params = crate::dsp::FrameParams {
        sample_rate: sr,
        ..Default::default()
    };
    let t = sim.t();
    let (cut_i, cut_j, query_cut, match_cut) = match strategy {
        Strategy::Concat | Strategy::FixedCrossfade => (t - 1, 0, query.len, 0),
        Strategy::MaxSS | Strategy::MaxSSAdaptive => {
            let (i, j) = max_ss(sim);
            (i, j, params.step_to_sample(i), params.step_to_sample(j))
        }
    };
    if query_cut > query.len {
        return Err(Error::CutOutOfRange {
            cut: query_cut,
            len: query.len,
        });
    }
    if match_cut >= matched.len {
        return Err(Error::CutOutOfRange {
            cut: match_cut,
            len: matched.len,
        });
    }
    let room = available_crossfade_s(query, matched, query_cut, match_cut);
    let (wanted, variance) = match strategy {
        Strategy::Concat | Strategy::MaxSS => (0.0, None),
        Strategy::FixedCrossfade => (cfg.fixed_s, None),
        Strategy::MaxSSAdaptive => {
            let var = similarity_variance(sim);
            (crossfade_from_variance(var, cfg.phi, cfg.l_min, cfg.l_max), Some(var))
        }
    };
    Ok(TransitionPlan {
        strategy,
        cut_i,
        cut_j,
        query_cut,
        match_cut,
        crossfade_s: wanted.min(room),
        requested_s: wanted,
        variance,
        phi: cfg.phi,
        sample_rate: sr,
    })
}

/// Plans the transition from `query` into `matched` with `strategy`.
pub fn make_plan(
    query: &ContextFrame,
    matched: &ContextFrame,
    strategy: Strategy,
    cfg: &PlanConfig,
) -> Result<TransitionPlan> {
    let sim = frame_similarity::<f64>(query, matched, cfg)?;
    plan_with_similarity(query, matched, &sim, strategy, cfg)
}
