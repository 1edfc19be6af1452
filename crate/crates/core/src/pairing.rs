//! Turns one annotated page into image-text pairs.
//!
//! The stages are, in order: keep caption-class text, drop illustrations
//! that hold too much text (graphs and tables), link every caption fragment
//! to its nearest surviving illustration, merge the fragments of each
//! illustration in reading order, and discard captions that are too short.
//!
//! "Page order" below means the spatial order produced by
//! [`PageAnnotation::canonicalize`]; [`extract_page`] canonicalizes its input
//! first, so every index it reports refers to that order.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    caption_char_count, rect_distance, BBox, BookMetadata, IllustrationRegion, ImageTextPair,
    LayoutClass, PageAnnotation, PipelineConfig, ReadingOrder,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PairingError {
    #[error("cannot merge an empty fragment list")]
    EmptyInput,
    #[error("metadata is for book {meta:?} but page {page_id:?} belongs to {page:?}")]
    BookMismatch {
        page_id: String,
        page: String,
        meta: String,
    },
}

/// One caption-class OCR region; a printed caption may be split into several.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionFragment {
    pub bbox: BBox,
    pub text: String,
    /// Index into the page's `text_regions`.
    pub source_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IllustrationExclusion {
    /// Interior text load above the density threshold.
    TextDense,
    /// No caption fragment was linked to it.
    NoCaption,
    /// Its merged caption was below the minimum length.
    TooShort,
}

impl IllustrationExclusion {
    pub const ALL: [Self; 3] = [Self::TextDense, Self::NoCaption, Self::TooShort];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::TextDense => "text_dense",
            Self::NoCaption => "no_caption",
            Self::TooShort => "too_short",
        }
    }
}

impl fmt::Display for IllustrationExclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FragmentDiscard {
    TooShort,
    /// The page had no surviving illustration to link to.
    NoIllustration,
}

impl FragmentDiscard {
    pub const ALL: [Self; 2] = [Self::TooShort, Self::NoIllustration];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::TooShort => "too_short",
            Self::NoIllustration => "no_illustration",
        }
    }
}

impl fmt::Display for FragmentDiscard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcludedIllustration {
    /// Index into the page's `illustration_regions`.
    pub index: usize,
    pub region: IllustrationRegion,
    pub reason: IllustrationExclusion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscardedFragment {
    pub fragment: CaptionFragment,
    pub reason: FragmentDiscard,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PageExtraction {
    pub pairs: Vec<ImageTextPair>,
    /// Sorted by `index`.
    pub excluded_illustrations: Vec<ExcludedIllustration>,
    /// Sorted by `fragment.source_index`.
    pub discarded_fragments: Vec<DiscardedFragment>,
}

/// Caption-class regions with non-blank text, in page order.
pub fn filter_captions(page: &PageAnnotation) -> Vec<CaptionFragment> {
    page.text_regions
        .iter()
        .enumerate()
        .filter(|(_, r)| r.layout_class == LayoutClass::Caption && !r.text.trim().is_empty())
        .map(|(i, r)| CaptionFragment {
            bbox: r.bbox,
            text: r.text.clone(),
            source_index: i,
        })
        .collect()
}

/// Total characters of non-background text whose region center lies inside
/// `bbox`.
pub fn interior_text_load(page: &PageAnnotation, bbox: &BBox) -> usize {
    page.text_regions
        .iter()
        .filter(|r| r.layout_class != LayoutClass::Background)
        .filter(|r| {
            let (cx, cy) = r.bbox.center();
            bbox.contains_point(cx, cy)
        })
        .map(|r| r.text.chars().count())
        .sum()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IllustrationFilter {
    /// Surviving illustrations with their page index, in page order.
    pub kept: Vec<(usize, IllustrationRegion)>,
    pub excluded: Vec<ExcludedIllustration>,
}

/// Drops illustrations whose interior text load exceeds
/// `cfg.text_density_max_chars`.
pub fn filter_illustrations(page: &PageAnnotation, cfg: &PipelineConfig) -> IllustrationFilter {
    let mut out = IllustrationFilter::default();
    for (i, ill) in page.illustration_regions.iter().enumerate() {
        if interior_text_load(page, &ill.bbox) > cfg.text_density_max_chars {
            out.excluded.push(ExcludedIllustration {
                index: i,
                region: ill.clone(),
                reason: IllustrationExclusion::TextDense,
            });
        } else {
            out.kept.push((i, ill.clone()));
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    /// Keyed by index into the `illustrations` slice; fragments keep input order.
    pub by_illustration: BTreeMap<usize, Vec<CaptionFragment>>,
    pub unassigned: Vec<CaptionFragment>,
}

/// Index of the illustration nearest to `bbox`; ties go to the lower index.
pub fn nearest_illustration(
    bbox: &BBox,
    illustrations: &[IllustrationRegion],
    cfg: &PipelineConfig,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, ill) in illustrations.iter().enumerate() {
        let d = rect_distance(bbox, &ill.bbox, cfg.distance_metric);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// Links every fragment to its nearest illustration.
pub fn assign_fragments(
    fragments: &[CaptionFragment],
    illustrations: &[IllustrationRegion],
    cfg: &PipelineConfig,
) -> Assignment {
    let mut out = Assignment::default();
    for frag in fragments {
        match nearest_illustration(&frag.bbox, illustrations, cfg) {
            Some(i) => out.by_illustration.entry(i).or_default().push(frag.clone()),
            None => out.unassigned.push(frag.clone()),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergedCaption {
    pub text: String,
    /// Fragment boxes in the order their texts were joined.
    pub bboxes: Vec<BBox>,
}

/// Connected components of the "same line" relation, members in input order.
fn line_groups(
    items: &[&CaptionFragment],
    same_line: impl Fn(&BBox, &BBox) -> bool,
) -> Vec<Vec<usize>> {
    let n = items.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if same_line(&items[i].bbox, &items[j].bbox) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Joins fragments of one caption in reading order.
///
/// Horizontal text is grouped into rows (rows top to bottom, left to right
/// within a row); vertical text into columns (columns right to left, top to
/// bottom within a column). The result does not depend on the order of
/// `fragments`.
pub fn merge_fragments(
    fragments: &[CaptionFragment],
    cfg: &PipelineConfig,
) -> Result<MergedCaption, PairingError> {
    if fragments.is_empty() {
        return Err(PairingError::EmptyInput);
    }
    let mut items: Vec<&CaptionFragment> = fragments.iter().collect();
    items.sort_by(|a, b| {
        a.bbox
            .spatial_cmp(&b.bbox)
            .then(a.source_index.cmp(&b.source_index))
            .then_with(|| a.text.cmp(&b.text))
    });
    let frac = cfg.row_overlap_fraction;
    let horizontal = cfg.reading_order == ReadingOrder::HorizontalLtr;

    let groups = if horizontal {
        line_groups(&items, |a, b| {
            a.vertical_overlap(b) >= frac * a.h().min(b.h())
        })
    } else {
        line_groups(&items, |a, b| {
            a.horizontal_overlap(b) >= frac * a.w().min(b.w())
        })
    };

    struct Line {
        key: f64,
        first: usize,
        members: Vec<usize>,
    }
    let mut lines: Vec<Line> = groups
        .into_iter()
        .map(|members| {
            let sum: f64 = members
                .iter()
                .map(|&i| {
                    if horizontal {
                        items[i].bbox.y()
                    } else {
                        items[i].bbox.x()
                    }
                })
                .sum();
            let key = sum / members.len() as f64;
            let first = members
                .iter()
                .map(|&i| items[i].source_index)
                .min()
                .unwrap_or(0);
            Line {
                key,
                first,
                members,
            }
        })
        .collect();
    lines.sort_by(|a, b| {
        let by_key = if horizontal {
            a.key.total_cmp(&b.key)
        } else {
            b.key.total_cmp(&a.key)
        };
        by_key.then(a.first.cmp(&b.first))
    });

    let mut texts = Vec::with_capacity(items.len());
    let mut bboxes = Vec::with_capacity(items.len());
    for mut line in lines {
        line.members.sort_by(|&i, &j| {
            let (a, b) = (&items[i], &items[j]);
            let primary = if horizontal {
                a.bbox
                    .x()
                    .total_cmp(&b.bbox.x())
                    .then(a.bbox.y().total_cmp(&b.bbox.y()))
            } else {
                a.bbox
                    .y()
                    .total_cmp(&b.bbox.y())
                    .then(b.bbox.x().total_cmp(&a.bbox.x()))
            };
            primary
                .then(a.source_index.cmp(&b.source_index))
                .then(i.cmp(&j))
        });
        for i in line.members {
            texts.push(items[i].text.trim());
            bboxes.push(items[i].bbox);
        }
    }
    Ok(MergedCaption {
        text: texts.join(&cfg.join_delimiter),
        bboxes,
    })
}

/// Runs the full extraction on one page.
pub fn extract_page(
    page: &PageAnnotation,
    meta: &BookMetadata,
    cfg: &PipelineConfig,
) -> Result<PageExtraction, PairingError> {
    if meta.book_id != page.book_id {
        return Err(PairingError::BookMismatch {
            page_id: page.page_id.clone(),
            page: page.book_id.clone(),
            meta: meta.book_id.clone(),
        });
    }
    let page = page.clone().canonicalized();

    let fragments = filter_captions(&page);
    let IllustrationFilter { kept, excluded } = filter_illustrations(&page, cfg);
    let kept_regions: Vec<IllustrationRegion> = kept.iter().map(|(_, r)| r.clone()).collect();
    let Assignment {
        mut by_illustration,
        unassigned,
    } = assign_fragments(&fragments, &kept_regions, cfg);

    let mut out = PageExtraction {
        excluded_illustrations: excluded,
        ..Default::default()
    };
    for (ordinal, (index, region)) in kept.into_iter().enumerate() {
        let Some(frags) = by_illustration.remove(&ordinal) else {
            out.excluded_illustrations.push(ExcludedIllustration {
                index,
                region,
                reason: IllustrationExclusion::NoCaption,
            });
            continue;
        };
        let merged = merge_fragments(&frags, cfg)?;
        if caption_char_count(&merged.text) < cfg.min_caption_chars {
            out.discarded_fragments
                .extend(frags.into_iter().map(|fragment| DiscardedFragment {
                    fragment,
                    reason: FragmentDiscard::TooShort,
                }));
            out.excluded_illustrations.push(ExcludedIllustration {
                index,
                region,
                reason: IllustrationExclusion::TooShort,
            });
            continue;
        }
        out.pairs.push(ImageTextPair {
            pair_id: format!("{}#{}", page.page_id, ordinal),
            page_id: page.page_id.clone(),
            book_id: page.book_id.clone(),
            illustration_bbox: region.bbox,
            caption_text: merged.text,
            fragment_bboxes: merged.bboxes,
            labels: meta.labels.clone(),
        });
    }
    out.discarded_fragments
        .extend(unassigned.into_iter().map(|fragment| DiscardedFragment {
            fragment,
            reason: FragmentDiscard::NoIllustration,
        }));
    out.excluded_illustrations.sort_by_key(|e| e.index);
    out.discarded_fragments
        .sort_by_key(|d| d.fragment.source_index);
    Ok(out)
}
