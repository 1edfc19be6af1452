//! Recall@K for cross-modal retrieval over externally computed embeddings.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;

pub const EMBEDDINGS_MAGIC: &str = "bookpair-embeddings";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetrievalError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding {0:?} has zero (or non-finite) norm")]
    ZeroNormVector(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("query and gallery id sets differ (e.g. {0:?})")]
    IdMismatch(String),
    #[error("K must be positive")]
    InvalidK,
    #[error("cannot sample {requested} of {available} rows")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("embedding file line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Row-major `N x D` embedding matrix with one id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingSet {
    pub fn new(ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, RetrievalError> {
        if ids.len() != rows.len() {
            return Err(RetrievalError::DimensionMismatch {
                expected: ids.len(),
                got: rows.len(),
            });
        }
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        let mut seen = HashSet::new();
        for (id, row) in ids.iter().zip(&rows) {
            if row.len() != dim {
                return Err(RetrievalError::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(RetrievalError::ZeroNormVector(id.clone()));
            }
            if !seen.insert(id.as_str()) {
                return Err(RetrievalError::DuplicateId(id.clone()));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { ids, dim, data })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn take(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Self {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            dim: self.dim,
            data,
        }
    }

    /// The rows with the given ids, in the given order.
    pub fn select(&self, ids: &[String]) -> Result<Self, RetrievalError> {
        let index: HashMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let rows = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| RetrievalError::IdMismatch(id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.take(&rows))
    }

    /// Parses the text embedding format: a `bookpair-embeddings v1 N D`
    /// header, then `N` lines of `id v1 .. vD`.
    pub fn parse(text: &str) -> Result<Self, RetrievalError> {
        let err = |line: usize, message: String| RetrievalError::Parse { line, message };
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| err(1, "missing header".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (n, d) = match fields.as_slice() {
            [magic, "v1", n, d] if *magic == EMBEDDINGS_MAGIC => {
                let n: usize = n
                    .parse()
                    .map_err(|_| err(1, format!("bad row count {n:?}")))?;
                let d: usize = d
                    .parse()
                    .map_err(|_| err(1, format!("bad dimension {d:?}")))?;
                (n, d)
            }
            _ => return Err(err(1, format!("bad header {header:?}"))),
        };
        let mut ids = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n);
        for (i, line) in lines {
            let mut parts = line.split_whitespace();
            let id = parts.next().unwrap_or_default().to_string();
            let row = parts
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| err(i + 1, format!("bad number {v:?}")))
                })
                .collect::<Result<Vec<f64>, _>>()?;
            if row.len() != d {
                return Err(err(
                    i + 1,
                    format!("expected {d} values, got {}", row.len()),
                ));
            }
            ids.push(id);
            rows.push(row);
        }
        if ids.len() != n {
            return Err(err(
                1,
                format!("header declares {n} rows, found {}", ids.len()),
            ));
        }
        let mut set = Self::new(ids, rows)?;
        set.dim = d;
        Ok(set)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{EMBEDDINGS_MAGIC} v1 {} {}\n", self.len(), self.dim);
        for i in 0..self.len() {
            out.push_str(&self.ids[i]);
            for v in self.row(i) {
                write!(out, " {v}").expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub recall_at: BTreeMap<usize, f64>,
    pub n_queries: usize,
}

/// Zero-based rank of each query's true gallery row under cosine
/// similarity, ties broken by ascending gallery index.
pub fn true_match_ranks(
    queries: &EmbeddingSet,
    gallery: &EmbeddingSet,
) -> Result<Vec<usize>, RetrievalError> {
    if !queries.is_empty() && !gallery.is_empty() && queries.dim != gallery.dim {
        return Err(RetrievalError::DimensionMismatch {
            expected: gallery.dim,
            got: queries.dim,
        });
    }
    let gallery_index: HashMap<&str, usize> = gallery
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    if gallery.len() != queries.len() {
        let missing = gallery
            .ids
            .iter()
            .find(|id| !queries.ids.contains(id))
            .or_else(|| queries.ids.first())
            .cloned()
            .unwrap_or_default();
        return Err(RetrievalError::IdMismatch(missing));
    }
    let gallery_norms: Vec<f64> = (0..gallery.len()).map(|j| norm(gallery.row(j))).collect();

    let mut ranks = Vec::with_capacity(queries.len());
    for (qi, qid) in queries.ids.iter().enumerate() {
        let target = *gallery_index
            .get(qid.as_str())
            .ok_or_else(|| RetrievalError::IdMismatch(qid.clone()))?;
        let q = queries.row(qi);
        let qn = norm(q);
        let sim = |j: usize| dot(q, gallery.row(j)) / (qn * gallery_norms[j]);
        let target_sim = sim(target);
        let rank = (0..gallery.len())
            .filter(|&j| {
                let s = sim(j);
                s > target_sim || (s == target_sim && j < target)
            })
            .count();
        ranks.push(rank);
    }
    Ok(ranks)
}

/// Fraction of queries whose matching gallery item (same id) is among the
/// top `K` by cosine similarity, for each `K` in `ks`.
pub fn recall_at_k(
    queries: &EmbeddingSet,
    gallery: &EmbeddingSet,
    ks: &[usize],
) -> Result<RetrievalResult, RetrievalError> {
    if ks.contains(&0) {
        return Err(RetrievalError::InvalidK);
    }
    let ranks = true_match_ranks(queries, gallery)?;
    let n = ranks.len();
    let recall_at = ks
        .iter()
        .map(|&k| {
            let hits = ranks.iter().filter(|&&r| r < k).count();
            let v = if n == 0 { 1.0 } else { hits as f64 / n as f64 };
            (k, v)
        })
        .collect();
    Ok(RetrievalResult {
        recall_at,
        n_queries: n,
    })
}

/// Seeded sample of `n` rows without replacement, returned sorted by id.
///
/// The draw is made over the rows in id order, so the result depends only
/// on the set's contents, not on its row order.
pub fn sample_eval_subset(
    set: &EmbeddingSet,
    n: usize,
    seed: u64,
) -> Result<EmbeddingSet, RetrievalError> {
    if n > set.len() {
        return Err(RetrievalError::SampleTooLarge {
            requested: n,
            available: set.len(),
        });
    }
    let mut by_id: Vec<usize> = (0..set.len()).collect();
    by_id.sort_by(|&a, &b| set.ids[a].cmp(&set.ids[b]));
    let mut picked: Vec<usize> = SplitMix64::new(seed)
        .sample_indices(set.len(), n)
        .into_iter()
        .map(|i| by_id[i])
        .collect();
    picked.sort_by(|&a, &b| set.ids[a].cmp(&set.ids[b]));
    Ok(set.take(&picked))
}

/// Mean Recall@K over `repeats` seeded subsamples of `n` matched
/// query/gallery rows. Repeat `r` draws with a seed derived from
/// `(seed, r)`.
pub fn mean_recall_over_subsamples(
    queries: &EmbeddingSet,
    gallery: &EmbeddingSet,
    ks: &[usize],
    n: usize,
    seed: u64,
    repeats: usize,
) -> Result<RetrievalResult, RetrievalError> {
    let mut sums: BTreeMap<usize, f64> = ks.iter().map(|&k| (k, 0.0)).collect();
    for r in 0..repeats {
        let sub_seed = SplitMix64::substream(seed, r as u64).next_u64();
        let q = sample_eval_subset(queries, n, sub_seed)?;
        let g = gallery.select(q.ids())?;
        let res = recall_at_k(&q, &g, ks)?;
        for (k, v) in res.recall_at {
            *sums.entry(k).or_default() += v;
        }
    }
    let denom = repeats.max(1) as f64;
    Ok(RetrievalResult {
        recall_at: sums.into_iter().map(|(k, v)| (k, v / denom)).collect(),
        n_queries: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[&[f64]]) -> EmbeddingSet {
        let ids = (0..rows.len()).map(|i| format!("q{i}")).collect();
        EmbeddingSet::new(ids, rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn orthonormal_self_retrieval() {
        let s = set(&[&[1., 0., 0.], &[0., 1., 0.], &[0., 0., 1.]]);
        let r = recall_at_k(&s, &s, &[1]).unwrap();
        assert_eq!(r.recall_at[&1], 1.0);
    }

    #[test]
    fn hand_case() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let q = set(&[&[1., 0.], &[0., 1.], &[h, h]]);
        let g = set(&[&[1., 0.], &[0., 1.], &[-1., 0.]]);
        // Query 2 sees similarities (0.707, 0.707, -0.707): its row ranks last.
        assert_eq!(true_match_ranks(&q, &g).unwrap(), vec![0, 0, 2]);
        let r = recall_at_k(&q, &g, &[1, 3]).unwrap();
        assert_eq!(r.recall_at[&1], 2.0 / 3.0);
        assert_eq!(r.recall_at[&3], 1.0);
    }

    #[test]
    fn errors() {
        let a = set(&[&[1., 0.]]);
        let b = set(&[&[1., 0., 0.]]);
        assert!(matches!(
            recall_at_k(&a, &b, &[1]),
            Err(RetrievalError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            recall_at_k(&a, &a, &[0]),
            Err(RetrievalError::InvalidK)
        ));
        assert!(matches!(
            EmbeddingSet::new(vec!["z".into()], vec![vec![0.0, 0.0]]),
            Err(RetrievalError::ZeroNormVector(_))
        ));
        assert!(matches!(
            EmbeddingSet::new(vec!["z".into(), "z".into()], vec![vec![1.0], vec![2.0]]),
            Err(RetrievalError::DuplicateId(_))
        ));
        let other = EmbeddingSet::new(vec!["x".into()], vec![vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            recall_at_k(&a, &other, &[1]),
            Err(RetrievalError::IdMismatch(_))
        ));
    }

    #[test]
    fn sampling() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![1.0, i as f64]).collect();
        let ids: Vec<String> = (0..100).map(|i| format!("id{i:03}")).collect();
        let s = EmbeddingSet::new(ids, rows).unwrap();
        assert_eq!(sample_eval_subset(&s, 100, 9).unwrap(), s);
        assert_eq!(
            sample_eval_subset(&s, 10, 1).unwrap(),
            sample_eval_subset(&s, 10, 1).unwrap()
        );
        assert_ne!(
            sample_eval_subset(&s, 10, 1).unwrap(),
            sample_eval_subset(&s, 10, 2).unwrap()
        );
        assert!(matches!(
            sample_eval_subset(&s, 101, 1),
            Err(RetrievalError::SampleTooLarge { .. })
        ));
        let sub = sample_eval_subset(&s, 10, 5).unwrap();
        for (i, id) in sub.ids().iter().enumerate() {
            let orig: usize = id[2..].parse().unwrap();
            assert_eq!(sub.row(i), &[1.0, orig as f64]);
        }
    }

    #[test]
    fn text_format_round_trip() {
        let s = set(&[&[0.1, -2.5e-7], &[3.0, 1.0 / 3.0]]);
        let text = s.to_text();
        assert!(text.starts_with("bookpair-embeddings v1 2 2\n"));
        assert_eq!(EmbeddingSet::parse(&text).unwrap(), s);
        assert!(matches!(
            EmbeddingSet::parse("bookpair-embeddings v1 1 2\nq0 1.0\n"),
            Err(RetrievalError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            EmbeddingSet::parse("embeddings v1 1 2\n"),
            Err(RetrievalError::Parse { line: 1, .. })
        ));
    }
}
