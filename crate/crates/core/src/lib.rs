//! Extraction of labeled image-text pairs from digitized book pages.
//!
//! The crate consumes per-page layout/OCR detections ([`model::PageAnnotation`])
//! and book metadata, links captions to illustrations ([`pairing`]), and
//! writes a line-delimited dataset manifest ([`emit`]). [`synthgen`] builds
//! seeded synthetic corpora with exact ground truth, and [`eval`] scores
//! pairings, detections and cross-modal retrieval.

pub mod emit;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod pairing;
pub mod rng;
pub mod synthgen;

pub use model::{
    iou, rect_distance, BBox, BookMetadata, DistanceMetric, IllustrationRegion, ImageTextPair,
    LayoutClass, PageAnnotation, PipelineConfig, ReadingOrder, TextRegion,
};
