//! Pairing, detection and retrieval metrics.

mod pairs;
mod retrieval;

pub use pairs::{
    eval_detections, eval_pairs, normalize_caption, MatchCounts, PairEvalResult, TextMatch,
};
pub use retrieval::{
    mean_recall_over_subsamples, recall_at_k, sample_eval_subset, true_match_ranks, EmbeddingSet,
    RetrievalError, RetrievalResult, EMBEDDINGS_MAGIC,
};
