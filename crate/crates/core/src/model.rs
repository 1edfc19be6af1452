//! Domain types shared by every stage of the pipeline, plus the rectangle
//! primitives used for matching.
//!
//! Coordinates are pixels with the origin at the top-left corner of the page
//! and `y` increasing downward.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Label map attached to a book and propagated onto every pair it yields.
pub type Labels = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("bbox has non-finite coordinate: [{0}, {1}, {2}, {3}]")]
    NonFinite(f64, f64, f64, f64),
    #[error("bbox has non-positive extent: w={w}, h={h}")]
    NonPositiveExtent { w: f64, h: f64 },
    #[error("bbox has negative origin: x={x}, y={y}")]
    NegativeOrigin { x: f64, y: f64 },
    #[error("{what} bbox {bbox} exceeds page bounds {width}x{height}")]
    OutOfPage {
        what: &'static str,
        bbox: BBox,
        width: f64,
        height: f64,
    },
    #[error("page has non-positive size {width}x{height}")]
    BadPageSize { width: f64, height: f64 },
}

/// Axis-aligned rectangle `[x, y, w, h]`.
///
/// Degenerate or negative-origin boxes cannot be constructed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(GeometryError::NonFinite(x, y, w, h));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(GeometryError::NonPositiveExtent { w, h });
        }
        if x < 0.0 || y < 0.0 {
            return Err(GeometryError::NegativeOrigin { x, y });
        }
        Ok(Self { x, y, w, h })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Closed-interval point containment.
    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        px >= self.x && px <= self.right() && py >= self.y && py <= self.bottom()
    }

    pub fn fits_within(&self, width: f64, height: f64) -> bool {
        self.right() <= width && self.bottom() <= height
    }

    /// Same extent moved to a new origin.
    pub fn with_origin(&self, x: f64, y: f64) -> Result<Self, GeometryError> {
        Self::new(x, y, self.w, self.h)
    }

    /// Length of the overlap of the two vertical spans (0 when disjoint).
    pub fn vertical_overlap(&self, other: &BBox) -> f64 {
        (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0.0)
    }

    /// Length of the overlap of the two horizontal spans (0 when disjoint).
    pub fn horizontal_overlap(&self, other: &BBox) -> f64 {
        (self.right().min(other.right()) - self.x.max(other.x)).max(0.0)
    }

    /// Total order by top edge, then left edge, then size.
    pub fn spatial_cmp(&self, other: &BBox) -> Ordering {
        self.y
            .total_cmp(&other.y)
            .then(self.x.total_cmp(&other.x))
            .then(self.h.total_cmp(&other.h))
            .then(self.w.total_cmp(&other.w))
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = GeometryError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x, self.y, self.w, self.h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    EdgeToEdge,
    CenterToCenter,
}

/// Distance between two rectangles.
///
/// `EdgeToEdge` is the length of the shortest gap between the boxes and is
/// zero iff they intersect or touch. `CenterToCenter` is the Euclidean
/// distance between centers.
pub fn rect_distance(a: &BBox, b: &BBox, metric: DistanceMetric) -> f64 {
    match metric {
        DistanceMetric::EdgeToEdge => {
            let dx = 0f64.max(a.x - b.right()).max(b.x - a.right());
            let dy = 0f64.max(a.y - b.bottom()).max(b.y - a.bottom());
            dx.hypot(dy)
        }
        DistanceMetric::CenterToCenter => {
            let (ax, ay) = a.center();
            let (bx, by) = b.center();
            (ax - bx).hypot(ay - by)
        }
    }
}

/// Intersection over union; 0 for disjoint boxes, 1 for identical ones.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    // (y + h) - y need not round back to h
    if a == b {
        return 1.0;
    }
    let iw = a.horizontal_overlap(b);
    let ih = a.vertical_overlap(b);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Structural role of a text region as assigned by a layout analyzer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutClass {
    Caption,
    Headline,
    BodyText,
    PageNumber,
    InFigureText,
    Note,
    Header,
    Background,
}

impl LayoutClass {
    pub const ALL: [LayoutClass; 8] = [
        LayoutClass::Caption,
        LayoutClass::Headline,
        LayoutClass::BodyText,
        LayoutClass::PageNumber,
        LayoutClass::InFigureText,
        LayoutClass::Note,
        LayoutClass::Header,
        LayoutClass::Background,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LayoutClass::Caption => "caption",
            LayoutClass::Headline => "headline",
            LayoutClass::BodyText => "body_text",
            LayoutClass::PageNumber => "page_number",
            LayoutClass::InFigureText => "in_figure_text",
            LayoutClass::Note => "note",
            LayoutClass::Header => "header",
            LayoutClass::Background => "background",
        }
    }

    /// Exact-match parse of the wire name; `None` for anything else.
    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for LayoutClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRegion {
    pub bbox: BBox,
    pub text: String,
    pub layout_class: LayoutClass,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IllustrationRegion {
    pub bbox: BBox,
    pub confidence: f64,
}

/// Detector and OCR output for one scanned page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageAnnotation {
    pub page_id: String,
    pub book_id: String,
    pub width_px: f64,
    pub height_px: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    pub text_regions: Vec<TextRegion>,
    pub illustration_regions: Vec<IllustrationRegion>,
}

impl PageAnnotation {
    /// Checks that the page has a positive size and that every region lies
    /// inside it.
    pub fn check_geometry(&self) -> Result<(), GeometryError> {
        let (width, height) = (self.width_px, self.height_px);
        if !(width.is_finite() && height.is_finite()) || width <= 0.0 || height <= 0.0 {
            return Err(GeometryError::BadPageSize { width, height });
        }
        let out = |what, bbox: BBox| GeometryError::OutOfPage {
            what,
            bbox,
            width,
            height,
        };
        for r in &self.text_regions {
            if !r.bbox.fits_within(width, height) {
                return Err(out("text region", r.bbox));
            }
        }
        for r in &self.illustration_regions {
            if !r.bbox.fits_within(width, height) {
                return Err(out("illustration", r.bbox));
            }
        }
        Ok(())
    }

    /// Sorts both region lists into spatial page order (top-to-bottom, then
    /// left-to-right, remaining fields as tie-breakers). After this the
    /// region order carries no information from the input file, so any
    /// permutation of the input yields the same page.
    pub fn canonicalize(&mut self) {
        self.text_regions.sort_by(|a, b| {
            a.bbox
                .spatial_cmp(&b.bbox)
                .then(a.layout_class.cmp(&b.layout_class))
                .then_with(|| a.text.cmp(&b.text))
                .then(a.confidence.total_cmp(&b.confidence))
        });
        self.illustration_regions.sort_by(|a, b| {
            a.bbox
                .spatial_cmp(&b.bbox)
                .then(a.confidence.total_cmp(&b.confidence))
        });
    }

    pub fn canonicalized(mut self) -> Self {
        self.canonicalize();
        self
    }
}

/// Per-book metadata; its labels become the supervised labels of every pair
/// extracted from the book.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookMetadata {
    pub book_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default)]
    pub labels: Labels,
}

impl BookMetadata {
    pub fn unlabeled(book_id: impl Into<String>) -> Self {
        Self {
            book_id: book_id.into(),
            title: None,
            labels: Labels::new(),
        }
    }
}

/// One illustration linked to its merged caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTextPair {
    pub pair_id: String,
    pub page_id: String,
    pub book_id: String,
    pub illustration_bbox: BBox,
    pub caption_text: String,
    pub fragment_bboxes: Vec<BBox>,
    pub labels: Labels,
}

/// Number of characters in a caption, not counting whitespace.
pub fn caption_char_count(text: &str) -> usize {
    text.chars().filter(|c| !c.is_whitespace()).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadingOrder {
    /// Rows top to bottom, left to right within a row.
    HorizontalLtr,
    /// Columns right to left, top to bottom within a column.
    VerticalRtl,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid pipeline config: {0}")]
pub struct ConfigError(pub String);

/// Every threshold and ordering rule the extraction uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// An illustration whose interior text exceeds this many characters is
    /// treated as a graph or table and dropped.
    pub text_density_max_chars: usize,
    /// Pairs whose merged caption is shorter than this are discarded.
    pub min_caption_chars: usize,
    pub join_delimiter: String,
    /// Fraction of the smaller fragment height two fragments must share
    /// vertically to sit on the same row (same column for vertical text).
    pub row_overlap_fraction: f64,
    pub distance_metric: DistanceMetric,
    pub reading_order: ReadingOrder,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            text_density_max_chars: 30,
            min_caption_chars: 4,
            join_delimiter: " ".to_string(),
            row_overlap_fraction: 0.5,
            distance_metric: DistanceMetric::EdgeToEdge,
            reading_order: ReadingOrder::HorizontalLtr,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.min_caption_chars == 0 {
            return Err(ConfigError("min_caption_chars must be positive".into()));
        }
        if !(self.row_overlap_fraction > 0.0 && self.row_overlap_fraction <= 1.0) {
            return Err(ConfigError(format!(
                "row_overlap_fraction must be in (0, 1], got {}",
                self.row_overlap_fraction
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn edge_distance_examples() {
        let m = DistanceMetric::EdgeToEdge;
        assert_eq!(
            rect_distance(&bb(0., 0., 10., 10.), &bb(0., 0., 10., 10.), m),
            0.0
        );
        assert_eq!(
            rect_distance(&bb(0., 0., 50., 90.), &bb(0., 100., 50., 10.), m),
            10.0
        );
        assert_eq!(
            rect_distance(&bb(0., 0., 10., 10.), &bb(13., 14., 10., 10.), m),
            5.0
        );
    }

    #[test]
    fn center_distance() {
        let d = rect_distance(
            &bb(0., 0., 10., 10.),
            &bb(30., 40., 10., 10.),
            DistanceMetric::CenterToCenter,
        );
        assert_eq!(d, 50.0);
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&bb(0., 0., 10., 10.), &bb(0., 0., 10., 10.)), 1.0);
        assert_eq!(iou(&bb(0., 0., 10., 10.), &bb(100., 100., 5., 5.)), 0.0);
        let v = iou(&bb(0., 0., 10., 10.), &bb(5., 0., 10., 10.));
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_boxes_rejected() {
        assert!(matches!(
            BBox::new(0., 0., 0., 5.),
            Err(GeometryError::NonPositiveExtent { .. })
        ));
        assert!(matches!(
            BBox::new(0., 0., 5., -1.),
            Err(GeometryError::NonPositiveExtent { .. })
        ));
        assert!(matches!(
            BBox::new(-1., 0., 5., 5.),
            Err(GeometryError::NegativeOrigin { .. })
        ));
        assert!(BBox::new(f64::NAN, 0., 5., 5.).is_err());
        assert!(serde_json::from_str::<BBox>("[0, 0, 0, 1]").is_err());
        assert!(serde_json::from_str::<BBox>("[0, 0, 1]").is_err());
    }

    #[test]
    fn layout_class_names_are_exact() {
        for c in LayoutClass::ALL {
            assert_eq!(LayoutClass::parse(c.as_str()), Some(c));
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.as_str()));
        }
        assert_eq!(LayoutClass::parse("Caption"), None);
        assert_eq!(LayoutClass::parse("figure_note"), None);
    }

    #[test]
    fn config_defaults_and_partial_json() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.text_density_max_chars, 30);
        assert_eq!(cfg.min_caption_chars, 4);
        assert_eq!(cfg.join_delimiter, " ");
        assert_eq!(cfg.row_overlap_fraction, 0.5);
        assert_eq!(cfg.distance_metric, DistanceMetric::EdgeToEdge);
        assert_eq!(cfg.reading_order, ReadingOrder::HorizontalLtr);
        let partial: PipelineConfig = serde_json::from_str(
            r#"{"min_caption_chars": 9, "distance_metric": "center_to_center"}"#,
        )
        .unwrap();
        assert_eq!(partial.min_caption_chars, 9);
        assert_eq!(partial.distance_metric, DistanceMetric::CenterToCenter);
        assert_eq!(partial.text_density_max_chars, 30);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.row_overlap_fraction = 0.0;
        assert!(cfg.validate().is_err());
        cfg.row_overlap_fraction = 1.0;
        cfg.min_caption_chars = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn caption_count_ignores_whitespace() {
        assert_eq!(caption_char_count("No.7"), 4);
        assert_eq!(caption_char_count("MOUNT FUJI  VIEW"), 13);
        assert_eq!(caption_char_count("浅草寺 雷門"), 5);
    }

    prop_compose! {
        fn arb_box()(x in 0.0..500.0f64, y in 0.0..500.0f64, w in 0.5..200.0f64, h in 0.5..200.0f64) -> BBox {
            bb(x, y, w, h)
        }
    }

    // Integer-valued boxes keep translation exact in floating point.
    prop_compose! {
        fn arb_int_box()(x in 0u32..500, y in 0u32..500, w in 1u32..200, h in 1u32..200) -> BBox {
            bb(x as f64, y as f64, w as f64, h as f64)
        }
    }

    proptest! {
        #[test]
        fn distance_is_symmetric(a in arb_box(), b in arb_box()) {
            for m in [DistanceMetric::EdgeToEdge, DistanceMetric::CenterToCenter] {
                prop_assert_eq!(rect_distance(&a, &b, m), rect_distance(&b, &a, m));
            }
        }

        #[test]
        fn edge_distance_zero_iff_touching(a in arb_int_box(), b in arb_int_box()) {
            let touching = a.x() <= b.right() && b.x() <= a.right()
                && a.y() <= b.bottom() && b.y() <= a.bottom();
            prop_assert_eq!(rect_distance(&a, &b, DistanceMetric::EdgeToEdge) == 0.0, touching);
        }

        #[test]
        fn iou_bounds_and_symmetry(a in arb_box(), b in arb_box()) {
            let v = iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, iou(&b, &a));
            prop_assert_eq!(iou(&a, &a), 1.0);
        }

        #[test]
        fn translation_invariance(a in arb_int_box(), b in arb_int_box(), dx in 0u32..300, dy in 0u32..300) {
            let (dx, dy) = (dx as f64, dy as f64);
            let ta = a.with_origin(a.x() + dx, a.y() + dy).unwrap();
            let tb = b.with_origin(b.x() + dx, b.y() + dy).unwrap();
            for m in [DistanceMetric::EdgeToEdge, DistanceMetric::CenterToCenter] {
                prop_assert_eq!(rect_distance(&a, &b, m), rect_distance(&ta, &tb, m));
            }
            prop_assert_eq!(iou(&a, &b), iou(&ta, &tb));
        }
    }
}
