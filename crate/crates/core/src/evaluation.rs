//! Retrieval metrics: average precision, hit rate at K and precision at K,
//! averaged over queries with per-query labeled galleries.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::Hash;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::GalleryIndex;

/// Non-interpolated average precision: the mean, over all positives, of
/// the precision at the rank where each positive appears. Positives that
/// never appear in `ranked` contribute zero.
pub fn average_precision<I: Eq + Hash>(ranked: &[I], positives: &HashSet<I>) -> Result<f64> {
    if positives.is_empty() {
        return Err(Error::NoPositives);
    }
    if ranked.is_empty() {
        return Err(Error::InvalidArgument("empty ranking".into()));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, id) in ranked.iter().enumerate() {
        if positives.contains(id) {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    Ok(sum / positives.len() as f64)
}

/// 1 if any positive is among the first `k`, else 0.
pub fn hit_rate_at_k<I: Eq + Hash>(ranked: &[I], positives: &HashSet<I>, k: usize) -> f64 {
    if ranked.iter().take(k).any(|id| positives.contains(id)) {
        1.0
    } else {
        0.0
    }
}

/// Fraction of the first `k` slots holding a positive.
pub fn precision_at_k<I: Eq + Hash>(ranked: &[I], positives: &HashSet<I>, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    ranked.iter().take(k).filter(|id| positives.contains(*id)).count() as f64 / k as f64
}

/// One line of a labels manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRow {
    pub query_id: String,
    pub gallery_id: String,
    pub relevance: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledQuery {
    pub query_id: String,
    /// Labeled gallery ids with binary relevance, in manifest order.
    pub items: Vec<(String, bool)>,
}

impl LabeledQuery {
    pub fn positives(&self) -> HashSet<&str> {
        self.items
            .iter()
            .filter(|(_, rel)| *rel)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

/// Queries with their labeled galleries, in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub queries: Vec<LabeledQuery>,
}

impl LabeledSet {
    pub fn from_rows(rows: &[LabelRow]) -> Result<Self> {
        let mut order: Vec<String> = Vec::new();
        let mut grouped: HashMap<&str, Vec<(String, bool)>> = HashMap::new();
        for row in rows {
            if row.relevance > 1 {
                return Err(Error::InvalidArgument(format!(
                    "relevance {} for {} / {}",
                    row.relevance, row.query_id, row.gallery_id
                )));
            }
            let items = grouped.entry(&row.query_id).or_insert_with(|| {
                order.push(row.query_id.clone());
                Vec::new()
            });
            if items.iter().any(|(id, _)| id == &row.gallery_id) {
                return Err(Error::DuplicateId(format!("{} / {}", row.query_id, row.gallery_id)));
            }
            items.push((row.gallery_id.clone(), row.relevance == 1));
        }
        let queries: Vec<LabeledQuery> = order
            .into_iter()
            .map(|q| {
                let items = grouped.remove(q.as_str()).unwrap_or_default();
                LabeledQuery { query_id: q, items }
            })
            .collect();
        if queries.is_empty() {
            return Err(Error::InvalidArgument("no labeled queries".into()));
        }
        if let Some(q) = queries.iter().find(|q| q.positives().is_empty()) {
            return Err(Error::InvalidArgument(format!("query {} has no positives", q.query_id)));
        }
        Ok(LabeledSet { queries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rows = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                serde_json::from_str(l)
                    .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), n + 1)))
            })
            .collect::<Result<Vec<LabelRow>>>()?;
        Self::from_rows(&rows)
    }
}

pub fn write_labels(path: impl AsRef<Path>, rows: &[LabelRow]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row).expect("label row serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryReport {
    pub query_id: String,
    pub ap: f64,
    pub hr: BTreeMap<usize, f64>,
    pub p: BTreeMap<usize, f64>,
    pub n_labeled: usize,
    pub n_positive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub r_map: f64,
    pub hr: BTreeMap<usize, f64>,
    pub p: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_query: Vec<QueryReport>,
    pub aggregate: Aggregate,
}

/// Scores every query with rankings from `rank`, which receives the query
/// and must return its labeled gallery ids in ranked order.
pub fn evaluate_rankings<F>(labeled: &LabeledSet, ks: &[usize], mut rank: F) -> Result<EvalReport>
where
    F: FnMut(&LabeledQuery) -> Result<Vec<String>>,
{
    if ks.contains(&0) {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut per_query = Vec::with_capacity(labeled.queries.len());
    for q in &labeled.queries {
        let ranked = rank(q)?;
        let ranked: Vec<&str> = ranked.iter().map(String::as_str).collect();
        let positives = q.positives();
        per_query.push(QueryReport {
            query_id: q.query_id.clone(),
            ap: average_precision(&ranked, &positives)?,
            hr: ks.iter().map(|&k| (k, hit_rate_at_k(&ranked, &positives, k))).collect(),
            p: ks.iter().map(|&k| (k, precision_at_k(&ranked, &positives, k))).collect(),
            n_labeled: q.items.len(),
            n_positive: positives.len(),
        });
    }
    let n = per_query.len() as f64;
    let mean_at = |k: usize, pick: fn(&QueryReport) -> &BTreeMap<usize, f64>| {
        per_query.iter().map(|r| pick(r)[&k]).sum::<f64>() / n
    };
    let aggregate = Aggregate {
        r_map: per_query.iter().map(|r| r.ap).sum::<f64>() / n,
        hr: ks.iter().map(|&k| (k, mean_at(k, |r| &r.hr))).collect(),
        p: ks.iter().map(|&k| (k, mean_at(k, |r| &r.p))).collect(),
    };
    Ok(EvalReport { per_query, aggregate })
}

/// Ranks each query's labeled gallery by inner product with the query's
/// own vector in `index` (ties by id) and scores the rankings.
pub fn evaluate(index: &GalleryIndex, labeled: &LabeledSet, ks: &[usize]) -> Result<EvalReport> {
    evaluate_rankings(labeled, ks, |q| {
        let z = index
            .get(&q.query_id)
            .ok_or_else(|| Error::MissingId(q.query_id.clone()))?;
        let ids: Vec<&str> = q.items.iter().map(|(id, _)| id.as_str()).collect();
        Ok(index.rank_subset(&z, &ids)?.into_iter().map(|(id, _)| id).collect())
    })
}

/// Random baseline: each query's labeled gallery in a seeded random order.
pub fn evaluate_random(labeled: &LabeledSet, ks: &[usize], seed: u64) -> Result<EvalReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    evaluate_rankings(labeled, ks, |q| {
        let mut ids: Vec<String> = q.items.iter().map(|(id, _)| id.clone()).collect();
        ids.shuffle(&mut rng);
        Ok(ids)
    })
}
