//! Exact maximum inner product search over a gallery of frame embeddings.
//!
//! Vectors are stored as `f32`, scores accumulate in `f64`. Results are the
//! true top-k by inner product, ties broken by ascending id.

mod format;

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::audio_io::AudioClip;
use crate::dsp::{FeatureExtractor, FeatureKind};
use crate::embedding::{FeatureVector, ProjectionHead};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use format::{read_manifest, write_manifest, ManifestRow, FEATURE_MAGIC, FEATURE_VERSION};

/// One frame to be indexed.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry<T> {
    pub id: String,
    pub source_id: String,
    pub offset_s: f64,
    pub vector: FeatureVector<T>,
}

/// A ranked retrieval result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchCandidate {
    pub query_id: String,
    pub gallery_id: String,
    pub source_id: String,
    pub offset_s: f64,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Immutable gallery, iterated in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct GalleryIndex {
    d: usize,
    ids: Vec<String>,
    sources: Vec<String>,
    offsets: Vec<f32>,
    data: Vec<f32>,
    lookup: HashMap<String, usize>,
}

/// Builds an index from embedded frames.
pub fn build_index<T: Scalar>(entries: Vec<IndexEntry<T>>) -> Result<GalleryIndex> {
    let d = entries.first().ok_or(Error::EmptyIndex)?.vector.dim();
    let mut index = GalleryIndex::with_dim(d, entries.len());
    for e in entries {
        index.push(e.id, e.source_id, e.offset_s as f32, e.vector.values().iter().map(|v| v.f64() as f32))?;
    }
    Ok(index)
}

/// Sort order of results: higher score first, then smaller id.
fn rank_order(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

impl GalleryIndex {
    fn with_dim(d: usize, capacity: usize) -> Self {
        GalleryIndex {
            d,
            ids: Vec::with_capacity(capacity),
            sources: Vec::with_capacity(capacity),
            offsets: Vec::with_capacity(capacity),
            data: Vec::with_capacity(capacity * d),
            lookup: HashMap::with_capacity(capacity),
        }
    }

    fn push(
        &mut self,
        id: String,
        source_id: String,
        offset_s: f32,
        vector: impl ExactSizeIterator<Item = f32>,
    ) -> Result<()> {
        if vector.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: vector.len(),
            });
        }
        if self.lookup.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.lookup.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.sources.push(source_id);
        self.offsets.push(offset_s);
        self.data.extend(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn source_id(&self, i: usize) -> &str {
        &self.sources[i]
    }

    pub fn offset_s(&self, i: usize) -> f32 {
        self.offsets[i]
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    /// Stored vector for `id`.
    pub fn get(&self, id: &str) -> Option<FeatureVector<f32>> {
        self.position(id)
            .map(|i| FeatureVector::from_unit(self.vector(i).to_vec()).expect("stored unit vector"))
    }

    fn check_query<T: Scalar>(&self, z_q: &FeatureVector<T>) -> Result<Vec<f64>> {
        if z_q.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: z_q.dim(),
            });
        }
        Ok(z_q.values().iter().map(|v| v.f64()).collect())
    }

    fn score_at(&self, q: &[f64], i: usize) -> f64 {
        self.vector(i).iter().zip(q).map(|(&g, &q)| g as f64 * q).sum()
    }

    /// Inner product of `z_q` with entry `i`.
    pub fn score<T: Scalar>(&self, z_q: &FeatureVector<T>, i: usize) -> Result<f64> {
        let q = self.check_query(z_q)?;
        Ok(self.score_at(&q, i))
    }

    /// Exact top-`k` entries by inner product with `z_q`, skipping entries
    /// whose source is `exclude_source`. Returns fewer than `k` results when
    /// fewer entries are eligible.
    pub fn query<T: Scalar>(
        &self,
        query_id: &str,
        z_q: &FeatureVector<T>,
        k: usize,
        exclude_source: Option<&str>,
    ) -> Result<Vec<MatchCandidate>> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let q = self.check_query(z_q)?;
        let mut scored: Vec<(f64, usize)> = (0..self.len())
            .filter(|&i| exclude_source != Some(self.sources[i].as_str()))
            .map(|i| (self.score_at(&q, i), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| {
            rank_order((a.0, &self.ids[a.1]), (b.0, &self.ids[b.1]))
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_unstable_by(cmp);
        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(r, (score, i))| MatchCandidate {
                query_id: query_id.to_string(),
                gallery_id: self.ids[i].clone(),
                source_id: self.sources[i].clone(),
                offset_s: self.offsets[i] as f64,
                score,
                rank: r + 1,
            })
            .collect())
    }

    /// Ranks the given subset of ids against `z_q` (same order as [`query`](Self::query)).
    pub fn rank_subset<T: Scalar>(&self, z_q: &FeatureVector<T>, ids: &[&str]) -> Result<Vec<(String, f64)>> {
        let q = self.check_query(z_q)?;
        let mut scored = ids
            .iter()
            .map(|id| {
                let i = self.position(id).ok_or_else(|| Error::MissingId(id.to_string()))?;
                Ok((self.score_at(&q, i), id.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        scored.sort_by(|a, b| rank_order((a.0, &a.1), (b.0, &b.1)));
        Ok(scored.into_iter().map(|(s, id)| (id, s)).collect())
    }
}

/// Turns one-second frames into unit-norm retrieval vectors.
///
/// Frames go through the log-Mel or MFCC front end and are flattened; with a
/// head they are projected and normalized, without one the flattened feature
/// is normalized directly. Ids are [`AudioClip::frame_id`].
pub fn batch_featurize<T: Scalar>(
    clips: &[AudioClip],
    head: Option<&ProjectionHead<T>>,
    kind: FeatureKind,
    mel_bins: usize,
    n_mfcc: usize,
) -> Result<Vec<(String, FeatureVector<T>)>> {
    let extractor = FeatureExtractor::new(kind, mel_bins, n_mfcc)?;
    clips
        .iter()
        .map(|clip| Ok((clip.frame_id(), featurize_clip(&extractor, head, clip)?)))
        .collect()
}

/// Single-clip form of [`batch_featurize`] with a caller-owned extractor.
pub fn featurize_clip<T: Scalar>(
    extractor: &FeatureExtractor<T>,
    head: Option<&ProjectionHead<T>>,
    clip: &AudioClip,
) -> Result<FeatureVector<T>> {
    let base = extractor.base_feature(clip)?;
    match head {
        Some(h) => h.embed(&base),
        None => FeatureVector::normalize(base.values),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, source: &str, v: Vec<f64>) -> IndexEntry<f64> {
        IndexEntry {
            id: id.into(),
            source_id: source.into(),
            offset_s: 0.0,
            vector: FeatureVector::normalize(v).unwrap(),
        }
    }

    #[test]
    fn single_entry_and_duplicates() {
        let idx = build_index(vec![entry("a", "s", vec![1.0, 0.0])]).unwrap();
        assert_eq!(idx.len(), 1);
        let dup = build_index(vec![entry("a", "s", vec![1.0, 0.0]), entry("a", "t", vec![0.0, 1.0])]);
        assert!(matches!(dup, Err(Error::DuplicateId(id)) if id == "a"));
        assert!(matches!(build_index::<f64>(vec![]), Err(Error::EmptyIndex)));
        let mixed = build_index(vec![entry("a", "s", vec![1.0, 0.0]), entry("b", "s", vec![1.0, 0.0, 0.0])]);
        assert!(matches!(mixed, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn orthogonal_gallery_ranks_by_id_on_ties() {
        let idx = build_index(vec![
            entry("e3", "s3", vec![0.0, 0.0, 1.0]),
            entry("e1", "s1", vec![1.0, 0.0, 0.0]),
            entry("e2", "s2", vec![0.0, 1.0, 0.0]),
        ])
        .unwrap();
        let q = FeatureVector::normalize(vec![0.0, 1.0, 0.0]).unwrap();
        let res = idx.query("q", &q, 3, None).unwrap();
        let ids: Vec<_> = res.iter().map(|m| m.gallery_id.as_str()).collect();
        assert_eq!(ids, ["e2", "e1", "e3"]);
        assert_eq!(res[0].score, 1.0);
        assert_eq!(res[1].score, 0.0);
        assert_eq!(res.iter().map(|m| m.rank).collect::<Vec<_>>(), [1, 2, 3]);
    }

    #[test]
    fn exclusion_and_short_results() {
        let idx = build_index(vec![
            entry("a", "x", vec![1.0, 0.0]),
            entry("b", "y", vec![0.9, 0.1]),
            entry("c", "x", vec![0.0, 1.0]),
        ])
        .unwrap();
        let q = FeatureVector::normalize(vec![1.0, 0.0]).unwrap();
        let res = idx.query("q", &q, 10, Some("x")).unwrap();
        assert_eq!(res.len(), 1);
        assert_eq!(res[0].gallery_id, "b");
        assert!(idx.query("q", &q, 0, None).is_err());
        let bad = FeatureVector::normalize(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(idx.query("q", &bad, 1, None), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn rank_subset_orders_and_reports_missing() {
        let idx = build_index(vec![
            entry("a", "x", vec![1.0, 0.0]),
            entry("b", "y", vec![0.0, 1.0]),
        ])
        .unwrap();
        let q = FeatureVector::normalize(vec![0.2, 1.0]).unwrap();
        let r = idx.rank_subset(&q, &["a", "b"]).unwrap();
        assert_eq!(r[0].0, "b");
        assert!(matches!(idx.rank_subset(&q, &["zz"]), Err(Error::MissingId(_))));
    }
}
