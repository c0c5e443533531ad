//! Audio ingest and output.
//!
//! Every clip that leaves this module through [`load_audio`] is mono,
//! 48 kHz and bounded to `[-1, 1]`. Multi-channel input is averaged,
//! other rates go through the windowed-sinc [`resample`] path.

mod resample;

use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

pub use resample::{resample, SincResampler};

/// Canonical sample rate of every ingested clip.
pub const SAMPLE_RATE: u32 = 48_000;

/// Immutable mono sample buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
    source_id: String,
    offset_s: f64,
}

impl AudioClip {
    pub fn new(
        samples: Vec<f32>,
        sample_rate: u32,
        source_id: impl Into<String>,
        offset_s: f64,
    ) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite sample at index {i}")));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
            source_id: source_id.into(),
            offset_s,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    /// Seconds from the start of the source.
    pub fn offset_s(&self) -> f64 {
        self.offset_s
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Stable identifier of a frame: `<source_id>@<offset in seconds>`.
    pub fn frame_id(&self) -> String {
        frame_id(&self.source_id, self.offset_s)
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }
}

/// Formats the id used for a frame of `source_id` starting at `offset_s`.
pub fn frame_id(source_id: &str, offset_s: f64) -> String {
    format!("{source_id}@{offset_s:.3}")
}

fn check_riff_header(path: &Path) -> Result<()> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = [0u8; 12];
    let mut filled = 0;
    while filled < header.len() {
        match file.read(&mut header[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) => return Err(Error::io(path, e)),
        }
    }
    if filled >= 4 && &header[..4] != b"RIFF" {
        return Err(Error::UnsupportedFormat(format!(
            "{}: not a RIFF container",
            path.display()
        )));
    }
    if filled < header.len() {
        return Err(Error::CorruptFile(format!("{}: truncated header", path.display())));
    }
    if &header[8..12] != b"WAVE" {
        return Err(Error::UnsupportedFormat(format!(
            "{}: RIFF file is not WAVE",
            path.display()
        )));
    }
    Ok(())
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::Unsupported => {
            Error::UnsupportedFormat(format!("{}: unsupported WAV encoding", path.display()))
        }
        other => Error::CorruptFile(format!("{}: {other}", path.display())),
    }
}

/// Reads a PCM WAV file (16/24-bit integer or 32-bit float, 1 to 8 channels),
/// mixes it down to mono and resamples it to [`SAMPLE_RATE`].
///
/// The clip's `source_id` is the file stem and its offset is zero.
pub fn load_audio(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    check_riff_header(path)?;
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if !(1..=8).contains(&channels) {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {channels} channels",
            path.display()
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) | (hound::SampleFormat::Int, 24) => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| map_hound(path, e))?
        }
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: {bits}-bit {fmt:?} samples",
                path.display()
            )))
        }
    };
    if interleaved.iter().any(|v| !v.is_finite()) {
        return Err(Error::CorruptFile(format!("{}: non-finite samples", path.display())));
    }
    let mono: Vec<f32> = interleaved
        .chunks_exact(channels)
        .map(|frame| (frame.iter().sum::<f64>() / channels as f64) as f32)
        .collect();
    let mut samples = if spec.sample_rate == SAMPLE_RATE {
        mono
    } else {
        resample(&mono, spec.sample_rate, SAMPLE_RATE)
    };
    for s in &mut samples {
        *s = s.clamp(-1.0, 1.0);
    }
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    AudioClip::new(samples, SAMPLE_RATE, source_id, 0.0)
}

#[inline]
fn quantize_i16(x: f32) -> i16 {
    (x as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Writes `clip` as 16-bit PCM mono WAV at [`SAMPLE_RATE`], resampling first
/// if the clip is at another rate.
pub fn write_audio(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let resampled;
    let samples = if clip.sample_rate == SAMPLE_RATE {
        clip.samples()
    } else {
        resampled = resample(clip.samples(), clip.sample_rate, SAMPLE_RATE);
        &resampled
    };
    let to_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Format(other.to_string()),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_err)?;
    {
        let mut w16 = writer.get_i16_writer(samples.len() as u32);
        for &s in samples {
            w16.write_sample(quantize_i16(s));
        }
        w16.flush().map_err(to_err)?;
    }
    writer.finalize().map_err(to_err)
}

/// Splits `clip` into consecutive non-overlapping frames of `frame_s` seconds.
/// A trailing partial frame is dropped.
pub fn segment(clip: &AudioClip, frame_s: f64) -> Result<Vec<AudioClip>> {
    if frame_s.is_nan() || frame_s <= 0.0 {
        return Err(Error::InvalidArgument(format!("frame length {frame_s} s")));
    }
    let frame_len = (frame_s * clip.sample_rate as f64).round() as usize;
    if frame_len == 0 {
        return Err(Error::InvalidArgument(format!("frame length {frame_s} s")));
    }
    if clip.len() < frame_len {
        return Err(Error::TooShort {
            needed: frame_len,
            got: clip.len(),
        });
    }
    clip.samples
        .chunks_exact(frame_len)
        .enumerate()
        .map(|(k, chunk)| {
            AudioClip::new(
                chunk.to_vec(),
                clip.sample_rate,
                clip.source_id.clone(),
                clip.offset_s + k as f64 * frame_s,
            )
        })
        .collect()
}
