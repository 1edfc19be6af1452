use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{iou, BBox, ImageTextPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextMatch {
    Exact,
    /// Case-folded, whitespace-collapsed comparison.
    #[default]
    Normalized,
}

impl TextMatch {
    pub fn matches(&self, a: &str, b: &str) -> bool {
        match self {
            TextMatch::Exact => a == b,
            TextMatch::Normalized => normalize_caption(a) == normalize_caption(b),
        }
    }
}

pub fn normalize_caption(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEvalResult {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Empty for pooled detection scoring.
    pub per_page: BTreeMap<String, MatchCounts>,
}

impl PairEvalResult {
    pub fn from_counts(c: MatchCounts, per_page: BTreeMap<String, MatchCounts>) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                1.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(c.true_positives, c.true_positives + c.false_positives);
        let recall = ratio(c.true_positives, c.true_positives + c.false_negatives);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            true_positives: c.true_positives,
            false_positives: c.false_positives,
            false_negatives: c.false_negatives,
            precision,
            recall,
            f1,
            per_page,
        }
    }
}

/// Greedy one-to-one matching by descending IoU. `eligible(p, t)` returns
/// the IoU of a candidate match, or `None` when the two cannot match.
/// Ties in IoU go to the lower predicted index, then the lower truth index.
/// Returns the matched `(predicted, truth)` index pairs.
fn greedy_match(
    n_pred: usize,
    n_truth: usize,
    eligible: impl Fn(usize, usize) -> Option<f64>,
) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for p in 0..n_pred {
        for t in 0..n_truth {
            if let Some(v) = eligible(p, t) {
                candidates.push((v, p, t));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; n_pred];
    let mut truth_used = vec![false; n_truth];
    let mut out = Vec::new();
    for (_, p, t) in candidates {
        if !pred_used[p] && !truth_used[t] {
            pred_used[p] = true;
            truth_used[t] = true;
            out.push((p, t));
        }
    }
    out
}

/// Scores predicted pairs against ground truth. A prediction is a true
/// positive when it is matched to an unconsumed truth pair on the same page
/// whose illustration IoU reaches `iou_threshold` and whose caption matches.
pub fn eval_pairs(
    predicted: &[ImageTextPair],
    truth: &[ImageTextPair],
    iou_threshold: f64,
    text_match: TextMatch,
) -> PairEvalResult {
    let matched = greedy_match(predicted.len(), truth.len(), |p, t| {
        let (p, t) = (&predicted[p], &truth[t]);
        if p.page_id != t.page_id || !text_match.matches(&p.caption_text, &t.caption_text) {
            return None;
        }
        let v = iou(&p.illustration_bbox, &t.illustration_bbox);
        (v >= iou_threshold).then_some(v)
    });

    let mut per_page: BTreeMap<String, MatchCounts> = BTreeMap::new();
    let mut pred_hit = vec![false; predicted.len()];
    let mut truth_hit = vec![false; truth.len()];
    for &(p, t) in &matched {
        pred_hit[p] = true;
        truth_hit[t] = true;
        per_page
            .entry(predicted[p].page_id.clone())
            .or_default()
            .true_positives += 1;
    }
    for (p, hit) in predicted.iter().zip(&pred_hit) {
        if !hit {
            per_page
                .entry(p.page_id.clone())
                .or_default()
                .false_positives += 1;
        }
    }
    for (t, hit) in truth.iter().zip(&truth_hit) {
        if !hit {
            per_page
                .entry(t.page_id.clone())
                .or_default()
                .false_negatives += 1;
        }
    }
    let total = MatchCounts {
        true_positives: matched.len(),
        false_positives: predicted.len() - matched.len(),
        false_negatives: truth.len() - matched.len(),
    };
    PairEvalResult::from_counts(total, per_page)
}

/// Threshold-fixed precision/recall/F1 for detection boxes.
pub fn eval_detections(predicted: &[BBox], truth: &[BBox], iou_threshold: f64) -> PairEvalResult {
    let matched = greedy_match(predicted.len(), truth.len(), |p, t| {
        let v = iou(&predicted[p], &truth[t]);
        (v >= iou_threshold).then_some(v)
    });
    let total = MatchCounts {
        true_positives: matched.len(),
        false_positives: predicted.len() - matched.len(),
        false_negatives: truth.len() - matched.len(),
    };
    PairEvalResult::from_counts(total, BTreeMap::new())
}
