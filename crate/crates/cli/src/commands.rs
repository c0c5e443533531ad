//! Subcommand implementations.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use amc_core::dsp::{BaseFeature, FeatureExtractor};
use amc_core::embedding::{self, FeatureVector, TrainConfig};
use amc_core::evaluation::{self, LabeledSet};
use amc_core::retrieval::{read_manifest, write_manifest, ManifestRow};
use amc_core::retrieval::{build_index, featurize_clip, GalleryIndex, IndexEntry};
use amc_core::synth::{self, RetrievalSetConfig};
use amc_core::transition::{make_plan, render as render_transition, ContextFrame};
use amc_core::{load_audio, segment as segment_clip, write_audio, AudioClip, ProjectionHeadF32};

use crate::{
    CorpusKind, EvalArgs, FeatureArgs, FeaturizeArgs, QueryArgs, RenderArgs, SegmentArgs,
    SynthArgs, TrainArgs,
};

const FRAME_S: f64 = 1.0;

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    create_dir(&args.out)?;
    match args.kind {
        CorpusKind::Retrieval => {
            let set = synth::retrieval_set(args.seed, &RetrievalSetConfig::default());
            let audio = args.out.join("audio");
            create_dir(&audio)?;
            for clip in &set.clips {
                write_audio(clip, audio.join(format!("{}.wav", clip.source_id())))?;
            }
            evaluation::write_labels(args.out.join("labels.jsonl"), &set.labels)?;
            eprintln!("wrote {} clips and {} labels", set.clips.len(), set.labels.len());
        }
        CorpusKind::Training => {
            let clips = synth::training_sequences(args.seed, args.count, args.frames);
            for clip in &clips {
                write_audio(clip, args.out.join(format!("{}.wav", clip.source_id())))?;
            }
            eprintln!("wrote {} sequences", clips.len());
        }
    }
    Ok(())
}

fn is_wav(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

/// Expands directories (non-recursively) into their WAV files, sorted.
fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)
                .with_context(|| format!("reading {}", input.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            found.retain(|p| p.is_file() && is_wav(p));
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    ensure!(!files.is_empty(), "no WAV files found in the inputs");
    Ok(files)
}

pub fn segment(args: &SegmentArgs) -> Result<()> {
    let files = collect_inputs(&args.inputs)?;
    let frames_dir = args.out.join("frames");
    create_dir(&frames_dir)?;
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for file in &files {
        let clip = load_audio(file)?;
        ensure!(
            seen.insert(clip.source_id().to_string()),
            "two inputs share the source id {:?}",
            clip.source_id()
        );
        let frames = segment_clip(&clip, FRAME_S).with_context(|| format!("segmenting {}", file.display()))?;
        for frame in frames {
            let id = frame.frame_id();
            let rel = format!("frames/{id}.wav");
            write_audio(&frame, args.out.join(&rel))?;
            rows.push(ManifestRow {
                id,
                path: rel,
                source_id: frame.source_id().to_string(),
                offset_s: frame.offset_s(),
            });
        }
    }
    let manifest = args.out.join("manifest.jsonl");
    write_manifest(&manifest, &rows)?;
    eprintln!("{} frames from {} files -> {}", rows.len(), files.len(), manifest.display());
    Ok(())
}

/// Manifest rows with paths resolved against the manifest's directory.
fn load_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rows = read_manifest(path)?;
    ensure!(!rows.is_empty(), "manifest {} is empty", path.display());
    for row in &mut rows {
        if Path::new(&row.path).is_relative() {
            row.path = base.join(&row.path).to_string_lossy().into_owned();
        }
    }
    Ok(rows)
}

/// Loads a manifest frame, labelled with the manifest's source and offset.
fn load_frame(row: &ManifestRow) -> Result<AudioClip> {
    let clip = load_audio(&row.path).with_context(|| format!("frame {}", row.id))?;
    let sr = clip.sample_rate();
    Ok(AudioClip::new(clip.into_samples(), sr, row.source_id.clone(), row.offset_s)?)
}

fn load_head(path: Option<&Path>) -> Result<Option<ProjectionHeadF32>> {
    path.map(|p| ProjectionHeadF32::load(p).with_context(|| format!("loading head {}", p.display())))
        .transpose()
}

fn extractor(cfg: &FeatureArgs) -> Result<FeatureExtractor<f32>> {
    Ok(FeatureExtractor::new(cfg.kind, cfg.mel_bins, cfg.n_mfcc)?)
}

fn build_gallery(rows: &[ManifestRow], cfg: &FeatureArgs) -> Result<GalleryIndex> {
    let head = load_head(cfg.head.as_deref())?;
    let ex = extractor(cfg)?;
    let entries = rows
        .par_iter()
        .map(|row| {
            let clip = load_frame(row)?;
            let vector = featurize_clip(&ex, head.as_ref(), &clip)
                .with_context(|| format!("featurizing {}", row.id))?;
            Ok(IndexEntry {
                id: row.id.clone(),
                source_id: row.source_id.clone(),
                offset_s: row.offset_s,
                vector,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(build_index(entries)?)
}

pub fn featurize(args: &FeaturizeArgs) -> Result<()> {
    let built = load_manifest(&args.manifest).and_then(|rows| build_gallery(&rows, &args.features));
    let saved = built.and_then(|index| {
        index.save(&args.out)?;
        Ok(index)
    });
    match saved {
        Ok(index) => {
            eprintln!("{} vectors of dim {} -> {}", index.len(), index.dim(), args.out.display());
            Ok(())
        }
        Err(e) => {
            // Never leave a stale or half-written feature file behind.
            let _ = fs::remove_file(&args.out);
            Err(e)
        }
    }
}

/// A frame plus the neighbouring frames of the same source that exist in
/// the manifest, so transitions can borrow audio across frame edges.
struct FrameContext {
    clip: AudioClip,
    start: usize,
    len: usize,
}

impl FrameContext {
    fn whole(clip: AudioClip) -> Self {
        let len = clip.len();
        FrameContext { clip, start: 0, len }
    }

    fn from_manifest(rows: &[ManifestRow], id: &str) -> Result<Self> {
        let row = rows
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| anyhow!("{id} is not in the manifest"))?;
        let neighbour = |delta: f64| {
            rows.iter().find(|r| {
                r.source_id == row.source_id && (r.offset_s - (row.offset_s + delta)).abs() < 1e-6
            })
        };
        let centre = load_frame(row)?;
        let sr = centre.sample_rate();
        let mut samples = Vec::new();
        let mut start = 0;
        let mut offset = row.offset_s;
        if let Some(prev) = neighbour(-FRAME_S) {
            let prev = load_frame(prev)?;
            if prev.sample_rate() == sr {
                start = prev.len();
                offset = prev.offset_s();
                samples.extend_from_slice(prev.samples());
            }
        }
        let len = centre.len();
        samples.extend_from_slice(centre.samples());
        if let Some(next) = neighbour(FRAME_S) {
            let next = load_frame(next)?;
            if next.sample_rate() == sr {
                samples.extend_from_slice(next.samples());
            }
        }
        let clip = AudioClip::new(samples, sr, row.source_id.clone(), offset)?;
        Ok(FrameContext { clip, start, len })
    }

    fn view(&self) -> Result<ContextFrame<'_>> {
        Ok(ContextFrame::new(&self.clip, self.start, self.len)?)
    }
}

#[derive(Serialize)]
struct RenderedCandidate<'a> {
    rank: usize,
    gallery_id: &'a str,
    score: f64,
    wav: String,
    plan: amc_core::transition::PlanDump,
}

pub fn query(args: &QueryArgs) -> Result<()> {
    let index = GalleryIndex::load(&args.features)
        .with_context(|| format!("loading {}", args.features.display()))?;
    let (query_id, source, z, wav_clip) = match (&args.query_id, &args.query_wav) {
        (Some(id), _) => {
            let pos = index
                .position(id)
                .ok_or_else(|| anyhow!("query id {id} is not in the gallery"))?;
            let z: FeatureVector<f32> = index.get(id).expect("position checked");
            (id.clone(), index.source_id(pos).to_string(), z, None)
        }
        (None, Some(path)) => {
            let clip = load_audio(path)?;
            let first = segment_clip(&clip, FRAME_S)?.swap_remove(0);
            let head = load_head(args.features_cfg.head.as_deref())?;
            let z = featurize_clip(&extractor(&args.features_cfg)?, head.as_ref(), &first)?;
            (first.frame_id(), first.source_id().to_string(), z, Some(clip))
        }
        (None, None) => bail!("either --query-id or --query-wav is required"),
    };
    let exclude = (!args.include_same_source).then_some(source.as_str());
    let ranked = index.query(&query_id, &z, args.k, exclude)?;
    write_json(args.out.as_deref(), &ranked)?;

    let Some(dir) = &args.render_dir else {
        return Ok(());
    };
    let manifest = args.manifest.as_deref().expect("clap requires --manifest");
    let rows = load_manifest(manifest)?;
    create_dir(dir)?;
    let query_ctx = match wav_clip {
        Some(clip) => {
            let len = clip.len().min(clip.sample_rate() as usize);
            FrameContext { len, ..FrameContext::whole(clip) }
        }
        None => FrameContext::from_manifest(&rows, &query_id)?,
    };
    let cfg = args.plan.config(args.features_cfg.mel_bins);
    let mut listing = Vec::new();
    for cand in &ranked {
        let match_ctx = FrameContext::from_manifest(&rows, &cand.gallery_id)?;
        let (q, m) = (query_ctx.view()?, match_ctx.view()?);
        let plan = make_plan(&q, &m, args.plan.strategy, &cfg)?;
        let out = render_transition(&q, &m, &plan)?;
        let stem = format!("rank{:02}_score{:.4}", cand.rank, cand.score);
        let wav = dir.join(format!("{stem}.wav"));
        write_audio(&out, &wav)?;
        write_json(Some(&dir.join(format!("{stem}.plan.json"))), &plan.dump())?;
        listing.push(RenderedCandidate {
            rank: cand.rank,
            gallery_id: &cand.gallery_id,
            score: cand.score,
            wav: wav.to_string_lossy().into_owned(),
            plan: plan.dump(),
        });
    }
    write_json(Some(&dir.join("candidates.json")), &listing)?;
    eprintln!("rendered {} candidates into {}", listing.len(), dir.display());
    Ok(())
}

fn frame_at(clip: AudioClip, offset_s: f64) -> Result<FrameContext> {
    ensure!(offset_s >= 0.0, "negative frame offset {offset_s}");
    let sr = clip.sample_rate() as usize;
    let start = (offset_s * sr as f64).round() as usize;
    ensure!(
        start + sr <= clip.len(),
        "a 1 s frame at {offset_s} s does not fit in {:.3} s of audio",
        clip.duration_s()
    );
    Ok(FrameContext { clip, start, len: sr })
}

pub fn render(args: &RenderArgs) -> Result<()> {
    let query = frame_at(load_audio(&args.query)?, args.query_offset)?;
    let matched = frame_at(load_audio(&args.matched)?, args.match_offset)?;
    let (q, m) = (query.view()?, matched.view()?);
    let plan = make_plan(&q, &m, args.plan.strategy, &args.plan.config(args.mel_bins))?;
    let out = render_transition(&q, &m, &plan)?;
    write_audio(&out, &args.out)?;
    let plan_path = args
        .plan_out
        .clone()
        .unwrap_or_else(|| args.out.with_extension("plan.json"));
    write_json(Some(&plan_path), &plan.dump())?;
    eprintln!(
        "{}: cut ({}, {}), crossfade {:.3} s -> {}",
        plan.strategy,
        plan.cut_i,
        plan.cut_j,
        plan.crossfade_s,
        args.out.display()
    );
    Ok(())
}

/// Splits each source's frames into runs of consecutive seconds and cuts
/// every run into non-overlapping sequences of `seq_len` frames.
fn training_sequences(rows: &[ManifestRow], seq_len: usize) -> Vec<Vec<&ManifestRow>> {
    let mut by_source: BTreeMap<&str, Vec<&ManifestRow>> = BTreeMap::new();
    for row in rows {
        by_source.entry(&row.source_id).or_default().push(row);
    }
    let mut sequences = Vec::new();
    for frames in by_source.values_mut() {
        frames.sort_by(|a, b| a.offset_s.total_cmp(&b.offset_s));
        let mut run: Vec<&ManifestRow> = Vec::new();
        for &row in frames.iter() {
            let contiguous = run
                .last()
                .is_some_and(|prev| (row.offset_s - prev.offset_s - FRAME_S).abs() < 1e-6);
            if !contiguous {
                run.clear();
            }
            run.push(row);
            if run.len() == seq_len {
                sequences.push(std::mem::take(&mut run));
            }
        }
    }
    sequences
}

pub fn train(args: &TrainArgs) -> Result<()> {
    ensure!(args.seq_len >= 2, "sequences need at least 2 frames");
    let rows = load_manifest(&args.manifest)?;
    let sequences = training_sequences(&rows, args.seq_len);
    ensure!(
        !sequences.is_empty(),
        "no source has {} consecutive frames",
        args.seq_len
    );
    let ex = FeatureExtractor::<f32>::new(args.kind, args.mel_bins, args.n_mfcc)?;
    let corpus = sequences
        .par_iter()
        .map(|seq| {
            seq.iter()
                .map(|row| Ok(ex.base_feature(&load_frame(row)?)?))
                .collect::<Result<Vec<BaseFeature<f32>>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let d_base = corpus[0][0].dim();
    let head = ProjectionHeadF32::new_seeded(d_base, args.dim, args.seed)?;
    let cfg = TrainConfig {
        epochs: args.epochs,
        lr: args.lr,
        batch_size: args.batch_size,
        tau: args.tau,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let outcome = embedding::train(head, &corpus, &cfg)?;
    outcome.head.save(&args.out)?;
    let log = args
        .log
        .clone()
        .unwrap_or_else(|| args.out.with_extension("loss.jsonl"));
    embedding::write_history(&log, &outcome.history)?;
    let means = outcome.epoch_means();
    eprintln!(
        "{} sequences, d_base {d_base} -> d {}; epoch loss {:.4} -> {:.4}",
        corpus.len(),
        args.dim,
        means.first().copied().unwrap_or(f64::NAN),
        means.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let labeled = LabeledSet::load(&args.labels)?;
    let report = if args.random {
        evaluation::evaluate_random(&labeled, &args.ks, args.seed)?
    } else {
        let index = GalleryIndex::load(&args.features)
            .with_context(|| format!("loading {}", args.features.display()))?;
        evaluation::evaluate(&index, &labeled, &args.ks)?
    };
    write_json(args.out.as_deref(), &report)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(source: &str, offset_s: f64) -> ManifestRow {
        ManifestRow {
            id: amc_core::audio_io::frame_id(source, offset_s),
            path: String::new(),
            source_id: source.into(),
            offset_s,
        }
    }

    #[test]
    fn sequences_follow_contiguous_runs() {
        let mut rows: Vec<ManifestRow> = (0..7).map(|s| row("a", s as f64)).collect();
        rows.extend([0.0, 1.0, 3.0, 4.0, 5.0].map(|s| row("b", s)));
        rows.reverse();
        let seqs = training_sequences(&rows, 3);
        let ids: Vec<Vec<&str>> = seqs
            .iter()
            .map(|s| s.iter().map(|r| r.id.as_str()).collect())
            .collect();
        assert_eq!(
            ids,
            vec![
                vec!["a@0.000", "a@1.000", "a@2.000"],
                vec!["a@3.000", "a@4.000", "a@5.000"],
                vec!["b@3.000", "b@4.000", "b@5.000"],
            ]
        );
    }
}
