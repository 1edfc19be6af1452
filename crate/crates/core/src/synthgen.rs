//! Seeded synthetic book-page corpora with exact ground truth.
//!
//! Each page is a single column of bands. A band is either a captioned
//! photo (illustration, then its caption fragments `caption_gap_px` below)
//! or a table-like illustration packed with body text. Bands are spaced so
//! that every caption fragment is more than `separation_margin` times
//! closer to its own illustration than to any other, which makes
//! nearest-neighbor linking exact on a clean corpus. Header, headline,
//! page-number and body-text distractors sit outside every illustration.
//!
//! All randomness comes from [`SplitMix64`]; page `i` draws from the
//! substream `(seed, i)`, so pages are independent of one another.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emit::{build_manifest, DatasetManifest, ExclusionKind, ExclusionRecord};
use crate::model::{
    rect_distance, BBox, BookMetadata, DistanceMetric, IllustrationRegion, ImageTextPair, Labels,
    LayoutClass, PageAnnotation, PipelineConfig, TextRegion,
};
use crate::pairing::{ExcludedIllustration, IllustrationExclusion, PageExtraction};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("generator config error: {0}")]
pub struct SynthError(pub String);

/// Landmark-style captions. Every entry fits on one row under the narrowest
/// illustration and has at least 4 non-space characters.
pub const PHRASE_BANK: &[&str] = &[
    "Nara",
    "Kobe Port",
    "Osaka Castle",
    "Beppu Hot Springs",
    "Kameido Tenmangu",
    "Nikko Toshogu",
    "Mount Fuji from Hakone",
    "Kinkakuji Temple Kyoto",
    "Sapporo Clock Tower",
    "Matsushima Bay at Dawn",
    "Kenrokuen Garden",
    "Himeji Castle Keep",
    "Dotonbori Canal Osaka",
    "Ginza Street at Night",
    "Kamakura Great Buddha",
    "Nagasaki Harbor View",
    "Itsukushima Shrine Gate",
    "Lake Biwa Steamer Pier",
    "浅草寺雷門",
    "日光東照宮陽明門",
];

const PREFECTURES: &[&str] = &[
    "Hokkaido",
    "Miyagi",
    "Tokyo",
    "Kanagawa",
    "Ishikawa",
    "Shizuoka",
    "Kyoto",
    "Osaka",
    "Hyogo",
    "Nara",
    "Hiroshima",
    "Nagasaki",
    "Oita",
    "Okinawa",
];

const IN_FIGURE_LABELS: &[&str] = &["Fig. 1", "Fig. 2", "Fig. 7", "N", "1:5000", "Plate III"];

const TABLE_CELLS: &[&str] = &[
    "1928 | 12,450 | 3.2%",
    "1929 | 13,020 | 4.6%",
    "1930 | 11,870 | -8.8%",
    "Station | Passengers",
    "Tokyo | 1,204,311",
    "Yokohama | 640,022",
    "Osaka | 998,100",
    "Total area 2,187 km2",
];

const BODY_SNIPPETS: &[&str] = &[
    "The approach to the shrine is lined with stone lanterns donated by merchants.",
    "Visitors arriving by the evening train may lodge near the station.",
    "A second bridge was completed in the spring of that year.",
    "The garden is famous for its plum blossoms in early March.",
    "Ferries depart from the eastern pier twice daily.",
];

const TEXT_HEIGHT: f64 = 24.0;
const LINE_SPACING: f64 = 6.0;
const FRAGMENT_GAP: f64 = 16.0;
const SIDE_MARGIN: f64 = 60.0;
const CONTENT_TOP: f64 = 80.0;
const CONTENT_BOTTOM_MARGIN: f64 = 70.0;
const MIN_ILL_WIDTH: f64 = 400.0;
const MAX_ILL_WIDTH: f64 = 800.0;
const RIGHT_COLUMN_RESERVE: f64 = 250.0;
const MIN_ILL_HEIGHT: f64 = 150.0;
const MAX_ILL_HEIGHT: f64 = 420.0;
const TABLE_ROW_PITCH: f64 = 26.0;
const TABLE_INSET: f64 = 12.0;
const MAX_TABLE_ROWS: usize = 7;
/// Extra clearance beyond the separation requirement, so small geometric
/// noise cannot change the nearest illustration.
const SEPARATION_SLACK: f64 = 16.0;

fn text_width(s: &str) -> f64 {
    s.chars()
        .map(|c| if c.is_ascii() { 14.0 } else { 24.0 })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub seed: u64,
    pub n_pages: usize,
    /// `[width_px, height_px]`.
    pub page_size: [f64; 2],
    /// Inclusive range of captioned illustrations per page.
    pub illustrations_per_page: [usize; 2],
    /// Inclusive range of OCR fragments each caption is split into.
    pub fragments_per_caption: [usize; 2],
    /// Inclusive range of header/headline/page-number/body-text regions.
    pub distractor_regions_per_page: [usize; 2],
    pub caption_gap_px: f64,
    pub separation_margin: f64,
    /// Probability that a page also carries one table-like illustration.
    pub table_like_prob: f64,
    /// Size of the synthetic metadata pool used by [`synthetic_books`].
    pub n_books: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_pages: 200,
            page_size: [1200.0, 1800.0],
            illustrations_per_page: [1, 3],
            fragments_per_caption: [1, 3],
            distractor_regions_per_page: [0, 6],
            caption_gap_px: 12.0,
            separation_margin: 2.0,
            table_like_prob: 0.25,
            n_books: 8,
        }
    }
}

/// Vertical clearance required below a caption block whose farthest row sits
/// `own_max` from its illustration.
fn required_spacing(own_max: f64, margin: f64) -> f64 {
    (margin * own_max).floor() + 1.0 + SEPARATION_SLACK
}

fn block_height(rows: usize) -> f64 {
    rows as f64 * TEXT_HEIGHT + rows.saturating_sub(1) as f64 * LINE_SPACING
}

impl GenConfig {
    fn content_height(&self) -> f64 {
        self.page_size[1] - CONTENT_TOP - CONTENT_BOTTOM_MARGIN
    }

    fn max_ill_width(&self) -> f64 {
        MAX_ILL_WIDTH.min(self.page_size[0] - 2.0 * SIDE_MARGIN - 40.0 - RIGHT_COLUMN_RESERVE)
    }

    /// Rejects configs that are malformed or whose worst-case page cannot be
    /// packed.
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError(m));
        let [w, h] = self.page_size;
        if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
            return bad(format!("page_size must be positive, got {w}x{h}"));
        }
        for (name, [lo, hi]) in [
            ("illustrations_per_page", self.illustrations_per_page),
            ("fragments_per_caption", self.fragments_per_caption),
            (
                "distractor_regions_per_page",
                self.distractor_regions_per_page,
            ),
        ] {
            if lo > hi {
                return bad(format!("{name}: empty range [{lo}, {hi}]"));
            }
        }
        if self.fragments_per_caption[0] == 0 {
            return bad("fragments_per_caption must start at 1 or more".into());
        }
        if !(self.caption_gap_px.is_finite() && self.caption_gap_px > 0.0) {
            return bad(format!(
                "caption_gap_px must be positive, got {}",
                self.caption_gap_px
            ));
        }
        if !(self.separation_margin.is_finite() && self.separation_margin > 1.0) {
            return bad(format!(
                "separation_margin must exceed 1, got {}",
                self.separation_margin
            ));
        }
        if !(0.0..=1.0).contains(&self.table_like_prob) {
            return bad(format!(
                "table_like_prob must be in [0, 1], got {}",
                self.table_like_prob
            ));
        }
        if self.max_ill_width() < MIN_ILL_WIDTH {
            return bad(format!("page width {w} leaves no room for illustrations"));
        }
        // Worst case: most illustrations, every fragment on its own row, a
        // table band, all at the minimum height.
        let captioned = self.illustrations_per_page[1];
        let table = usize::from(self.table_like_prob > 0.0);
        let items = captioned + table;
        if items > 0 {
            let rows = self.fragments_per_caption[1];
            let own_max = self.caption_gap_px + (rows - 1) as f64 * (TEXT_HEIGHT + LINE_SPACING);
            let fixed = captioned as f64 * (self.caption_gap_px + block_height(rows))
                + (items - 1) as f64 * required_spacing(own_max, self.separation_margin);
            let heights = captioned as f64 * MIN_ILL_HEIGHT + table as f64 * table_min_height();
            if fixed + heights > self.content_height() {
                return bad(format!(
                    "cannot pack {items} bands into a {w}x{h} page (needs {} px, have {})",
                    fixed + heights,
                    self.content_height()
                ));
            }
        }
        Ok(())
    }
}

fn table_min_height() -> f64 {
    MAX_TABLE_ROWS as f64 * TABLE_ROW_PITCH + 2.0 * TABLE_INSET
}

/// Deterministic metadata pool: `n` books labeled with prefecture, year and
/// category.
pub fn synthetic_books(n: usize, seed: u64) -> Vec<BookMetadata> {
    let mut rng = SplitMix64::substream(seed, u64::MAX);
    (0..n)
        .map(|i| {
            let mut labels = Labels::new();
            labels.insert("prefecture".into(), rng.choose(PREFECTURES).to_string());
            labels.insert("year".into(), rng.range_inclusive(1900, 1960).to_string());
            labels.insert("category".into(), "photo_book".into());
            BookMetadata {
                book_id: format!("book-{:03}", i + 1),
                title: Some(format!("Illustrated Guide Vol. {}", i + 1)),
                labels,
            }
        })
        .collect()
}

/// Caption planted under one illustration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCaption {
    /// Index into the page's `illustration_regions`.
    pub illustration_index: usize,
    /// Indices into the page's `text_regions`, in reading order.
    pub fragment_indices: Vec<usize>,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PagePlan {
    pub captions: Vec<PlantedCaption>,
    /// Indices of table-like illustrations the density filter must drop.
    pub dense_illustrations: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    /// Ordered by page id, then pair ordinal.
    pub pairs: Vec<ImageTextPair>,
    pub pages: BTreeMap<String, PagePlan>,
}

impl GroundTruth {
    /// Ground truth as a dataset manifest (default pipeline config echoed),
    /// with planted table-like illustrations counted as text-dense
    /// exclusions.
    pub fn manifest(&self, pages: &[PageAnnotation]) -> DatasetManifest {
        let extractions = self.as_extractions(pages);
        build_manifest(&extractions, &PipelineConfig::default())
            .expect("generated pair ids are unique")
    }

    fn as_extractions(&self, pages: &[PageAnnotation]) -> Vec<(String, PageExtraction)> {
        let mut by_page: BTreeMap<&str, Vec<ImageTextPair>> = BTreeMap::new();
        for p in &self.pairs {
            by_page
                .entry(p.page_id.as_str())
                .or_default()
                .push(p.clone());
        }
        pages
            .iter()
            .map(|page| {
                let plan = self.pages.get(&page.page_id).cloned().unwrap_or_default();
                let excluded = plan
                    .dense_illustrations
                    .iter()
                    .map(|&index| ExcludedIllustration {
                        index,
                        region: page.illustration_regions[index].clone(),
                        reason: IllustrationExclusion::TextDense,
                    })
                    .collect();
                let ex = PageExtraction {
                    pairs: by_page.remove(page.page_id.as_str()).unwrap_or_default(),
                    excluded_illustrations: excluded,
                    discarded_fragments: Vec::new(),
                };
                (page.page_id.clone(), ex)
            })
            .collect()
    }

    /// Exclusion sidecar records for the planted table-like illustrations.
    pub fn exclusion_records(&self, pages: &[PageAnnotation]) -> Vec<ExclusionRecord> {
        let mut out = Vec::new();
        for page in pages {
            if let Some(plan) = self.pages.get(&page.page_id) {
                for &index in &plan.dense_illustrations {
                    out.push(ExclusionRecord {
                        page_id: page.page_id.clone(),
                        kind: ExclusionKind::Illustration,
                        index,
                        bbox: page.illustration_regions[index].bbox,
                        reason: IllustrationExclusion::TextDense.as_str().to_string(),
                    });
                }
            }
        }
        out
    }
}

fn bbox(x: f64, y: f64, w: f64, h: f64) -> BBox {
    BBox::new(x, y, w, h).expect("generator produces valid boxes")
}

fn int_in(rng: &mut SplitMix64, lo: f64, hi: f64) -> f64 {
    let (lo, hi) = (lo.ceil() as u64, hi.floor().max(lo.ceil()) as u64);
    rng.range_inclusive(lo, hi) as f64
}

/// Splits `phrase` at word boundaries into `n` contiguous pieces (fewer if
/// it has fewer words).
fn split_phrase(phrase: &str, n: usize, rng: &mut SplitMix64) -> Vec<String> {
    let words: Vec<&str> = phrase.split_whitespace().collect();
    let n = n.clamp(1, words.len());
    let mut cuts: Vec<usize> = rng
        .sample_indices(words.len() - 1, n - 1)
        .into_iter()
        .map(|c| c + 1)
        .collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    for end in cuts.into_iter().chain(std::iter::once(words.len())) {
        out.push(words[start..end].join(" "));
        start = end;
    }
    out
}

/// Caption fragment offsets relative to the illustration's bottom-left
/// corner: `(text, dx, dy, width)`. Rows wrap at the illustration's width or
/// at random.
fn layout_caption(
    pieces: Vec<String>,
    ill_w: f64,
    gap: f64,
    rng: &mut SplitMix64,
) -> (Vec<(String, f64, f64, f64)>, usize) {
    let start = int_in(rng, 0.0, 20.0);
    let mut cursor = start;
    let mut row = 0usize;
    let mut out = Vec::with_capacity(pieces.len());
    for (i, text) in pieces.into_iter().enumerate() {
        let w = text_width(&text);
        let overflow = cursor + w > ill_w;
        if i > 0 && (overflow || rng.chance(0.3)) {
            row += 1;
            cursor = start;
        }
        let dy = gap + row as f64 * (TEXT_HEIGHT + LINE_SPACING);
        out.push((text, cursor, dy, w));
        cursor += w + FRAGMENT_GAP;
    }
    (out, row + 1)
}

enum Band {
    Photo {
        w: f64,
        fragments: Vec<(String, f64, f64, f64)>,
        rows: usize,
        phrase: String,
        in_figure: Option<&'static str>,
    },
    Table {
        w: f64,
        rows: usize,
    },
}

impl Band {
    fn min_height(&self) -> f64 {
        match self {
            Band::Photo { .. } => MIN_ILL_HEIGHT,
            Band::Table { .. } => table_min_height(),
        }
    }

    fn below_height(&self, gap: f64) -> f64 {
        match self {
            Band::Photo { rows, .. } => gap + block_height(*rows),
            Band::Table { .. } => 0.0,
        }
    }

    fn spacing_after(&self, gap: f64, margin: f64) -> f64 {
        match self {
            Band::Photo { rows, .. } => {
                let own_max = gap + (*rows - 1) as f64 * (TEXT_HEIGHT + LINE_SPACING);
                required_spacing(own_max, margin)
            }
            Band::Table { .. } => 40.0,
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Tag {
    Fragment { band: usize, order: usize },
    Other,
}

struct PageBuild {
    page: PageAnnotation,
    plan: PagePlan,
    pairs: Vec<ImageTextPair>,
}

fn generate_page(cfg: &GenConfig, index: usize, book: &BookMetadata) -> PageBuild {
    let mut rng = SplitMix64::substream(cfg.seed, index as u64);
    let [page_w, page_h] = cfg.page_size;
    let gap = cfg.caption_gap_px;
    let page_id = format!("page-{index:05}");

    let n_photos = rng.range_inclusive(
        cfg.illustrations_per_page[0] as u64,
        cfg.illustrations_per_page[1] as u64,
    ) as usize;
    let has_table = rng.chance(cfg.table_like_prob);
    let max_w = cfg.max_ill_width();

    let mut bands: Vec<Band> = Vec::new();
    for _ in 0..n_photos {
        let w = int_in(&mut rng, MIN_ILL_WIDTH, max_w);
        let phrase = rng.choose(PHRASE_BANK).to_string();
        let n_frag = rng.range_inclusive(
            cfg.fragments_per_caption[0] as u64,
            cfg.fragments_per_caption[1] as u64,
        ) as usize;
        let pieces = split_phrase(&phrase, n_frag, &mut rng);
        let (fragments, rows) = layout_caption(pieces, w, gap, &mut rng);
        let in_figure = rng.chance(0.3).then(|| *rng.choose(IN_FIGURE_LABELS));
        bands.push(Band::Photo {
            w,
            fragments,
            rows,
            phrase,
            in_figure,
        });
    }
    if has_table {
        let w = int_in(&mut rng, MIN_ILL_WIDTH, max_w);
        let rows = rng.range_inclusive(5, MAX_TABLE_ROWS as u64) as usize;
        let at = rng.below(bands.len() as u64 + 1) as usize;
        bands.insert(at, Band::Table { w, rows });
    }

    // Vertical packing.
    let n = bands.len();
    let fixed: f64 = bands.iter().map(|b| b.below_height(gap)).sum::<f64>()
        + bands
            .iter()
            .take(n.saturating_sub(1))
            .map(|b| b.spacing_after(gap, cfg.separation_margin))
            .sum::<f64>();
    let height_budget = cfg.content_height() - fixed;
    let mut remaining = height_budget;
    let mut heights = Vec::with_capacity(n);
    for (i, b) in bands.iter().enumerate() {
        let mins_after: f64 = bands[i + 1..].iter().map(Band::min_height).sum();
        let share = (remaining / (n - i) as f64).floor().max(b.min_height());
        let hi = share.min(MAX_ILL_HEIGHT).min(remaining - mins_after);
        let h = int_in(&mut rng, b.min_height(), hi);
        remaining -= h;
        heights.push(h);
    }
    let mut slack = remaining.max(0.0);
    let mut y = CONTENT_TOP;

    let mut texts: Vec<(TextRegion, Tag)> = Vec::new();
    let mut ills: Vec<(IllustrationRegion, Option<usize>)> = Vec::new();
    let mut max_right: f64 = 0.0;
    for (bi, band) in bands.iter().enumerate() {
        let extra = int_in(&mut rng, 0.0, (slack / (n - bi + 1) as f64).floor());
        slack -= extra;
        y += extra;
        let x = int_in(&mut rng, SIDE_MARGIN, SIDE_MARGIN + 40.0);
        let h = heights[bi];
        match band {
            Band::Photo {
                w,
                fragments,
                in_figure,
                ..
            } => {
                let ib = bbox(x, y, *w, h);
                max_right = max_right.max(ib.right());
                ills.push((
                    IllustrationRegion {
                        bbox: ib,
                        confidence: 0.9,
                    },
                    Some(bi),
                ));
                for (order, (text, dx, dy, fw)) in fragments.iter().enumerate() {
                    texts.push((
                        TextRegion {
                            bbox: bbox(x + dx, ib.bottom() + dy, *fw, TEXT_HEIGHT),
                            text: text.clone(),
                            layout_class: LayoutClass::Caption,
                            confidence: 0.85,
                        },
                        Tag::Fragment { band: bi, order },
                    ));
                }
                if let Some(label) = in_figure {
                    let lw = text_width(label);
                    texts.push((
                        TextRegion {
                            bbox: bbox(x + TABLE_INSET, y + TABLE_INSET, lw, TEXT_HEIGHT),
                            text: label.to_string(),
                            layout_class: LayoutClass::InFigureText,
                            confidence: 0.6,
                        },
                        Tag::Other,
                    ));
                }
            }
            Band::Table { w, rows } => {
                let ib = bbox(x, y, *w, h);
                max_right = max_right.max(ib.right());
                ills.push((
                    IllustrationRegion {
                        bbox: ib,
                        confidence: 0.7,
                    },
                    None,
                ));
                for r in 0..*rows {
                    let cell = *rng.choose(TABLE_CELLS);
                    let cw = text_width(cell).min(w - 2.0 * TABLE_INSET);
                    texts.push((
                        TextRegion {
                            bbox: bbox(
                                x + TABLE_INSET,
                                y + TABLE_INSET + r as f64 * TABLE_ROW_PITCH,
                                cw,
                                20.0,
                            ),
                            text: cell.to_string(),
                            layout_class: LayoutClass::BodyText,
                            confidence: 0.8,
                        },
                        Tag::Other,
                    ));
                }
            }
        }
        y += h + band.below_height(gap);
        if bi + 1 < n {
            y += band.spacing_after(gap, cfg.separation_margin);
        }
    }

    add_distractors(cfg, &mut rng, max_right, &mut texts);

    // Canonical order, then resolve planted indices against it.
    let mut page = PageAnnotation {
        page_id: page_id.clone(),
        book_id: book.book_id.clone(),
        width_px: page_w,
        height_px: page_h,
        image_path: Some(format!("images/{page_id}.png")),
        text_regions: texts.iter().map(|(t, _)| t.clone()).collect(),
        illustration_regions: ills.iter().map(|(r, _)| r.clone()).collect(),
    };
    page.canonicalize();
    let text_index = |r: &TextRegion| {
        page.text_regions
            .iter()
            .position(|c| c == r)
            .expect("region present after canonicalization")
    };
    let ill_index = |r: &IllustrationRegion| {
        page.illustration_regions
            .iter()
            .position(|c| c == r)
            .expect("illustration present after canonicalization")
    };

    let mut plan = PagePlan::default();
    let mut band_to_ill: BTreeMap<usize, usize> = BTreeMap::new();
    for (region, band) in &ills {
        match band {
            Some(b) => {
                band_to_ill.insert(*b, ill_index(region));
            }
            None => plan.dense_illustrations.push(ill_index(region)),
        }
    }
    plan.dense_illustrations.sort_unstable();

    for (bi, band) in bands.iter().enumerate() {
        if let Band::Photo { phrase, .. } = band {
            let mut frags: Vec<(usize, usize)> = texts
                .iter()
                .filter_map(|(r, tag)| match tag {
                    Tag::Fragment { band, order } if *band == bi => Some((*order, text_index(r))),
                    _ => None,
                })
                .collect();
            frags.sort_unstable();
            plan.captions.push(PlantedCaption {
                illustration_index: band_to_ill[&bi],
                fragment_indices: frags.into_iter().map(|(_, i)| i).collect(),
                text: phrase.clone(),
            });
        }
    }
    plan.captions.sort_by_key(|c| c.illustration_index);

    // Pair ordinals count surviving (non-table) illustrations in page order.
    let mut pairs = Vec::new();
    for cap in &plan.captions {
        let ordinal = (0..cap.illustration_index)
            .filter(|i| !plan.dense_illustrations.contains(i))
            .count();
        pairs.push(ImageTextPair {
            pair_id: format!("{page_id}#{ordinal}"),
            page_id: page_id.clone(),
            book_id: book.book_id.clone(),
            illustration_bbox: page.illustration_regions[cap.illustration_index].bbox,
            caption_text: cap.text.clone(),
            fragment_bboxes: cap
                .fragment_indices
                .iter()
                .map(|&i| page.text_regions[i].bbox)
                .collect(),
            labels: book.labels.clone(),
        });
    }

    debug_assert!(separation_holds(&page, &plan, cfg.separation_margin));
    PageBuild { page, plan, pairs }
}

fn add_distractors(
    cfg: &GenConfig,
    rng: &mut SplitMix64,
    max_right: f64,
    texts: &mut Vec<(TextRegion, Tag)>,
) {
    let [page_w, page_h] = cfg.page_size;
    let count = rng.range_inclusive(
        cfg.distractor_regions_per_page[0] as u64,
        cfg.distractor_regions_per_page[1] as u64,
    ) as usize;
    let mut kinds = vec![
        LayoutClass::PageNumber,
        LayoutClass::Header,
        LayoutClass::BodyText,
        LayoutClass::Headline,
        LayoutClass::BodyText,
        LayoutClass::Note,
    ];
    rng.shuffle(&mut kinds);

    let col_x = (max_right + 30.0).max(SIDE_MARGIN);
    let col_w = page_w - 40.0 - col_x;
    let content_bottom = page_h - CONTENT_BOTTOM_MARGIN;
    let mut col_y = CONTENT_TOP + int_in(rng, 0.0, 200.0);

    for kind in kinds.into_iter().cycle().take(count) {
        let (b, text) = match kind {
            LayoutClass::PageNumber => {
                let label = format!("{}", rng.range_inclusive(1, 320));
                let w = text_width(&label);
                (
                    bbox((page_w - w) / 2.0, page_h - 50.0, w, TEXT_HEIGHT),
                    label,
                )
            }
            LayoutClass::Header => {
                let label = "ILLUSTRATED GUIDE".to_string();
                (
                    bbox(SIDE_MARGIN, 20.0, text_width(&label), TEXT_HEIGHT),
                    label,
                )
            }
            LayoutClass::Headline => {
                let label = "Famous Places".to_string();
                let w = text_width(&label);
                (
                    bbox((page_w - w).max(0.0) * 0.6, 20.0, w, TEXT_HEIGHT),
                    label,
                )
            }
            _ => {
                if col_w < 60.0 || col_y + 3.0 * TEXT_HEIGHT > content_bottom {
                    continue;
                }
                let label = rng.choose(BODY_SNIPPETS).to_string();
                let h = 3.0 * TEXT_HEIGHT;
                let b = bbox(col_x, col_y, col_w, h);
                col_y += h + int_in(rng, 20.0, 120.0);
                (b, label)
            }
        };
        if b.fits_within(page_w, page_h) {
            texts.push((
                TextRegion {
                    bbox: b,
                    text,
                    layout_class: kind,
                    confidence: 0.8,
                },
                Tag::Other,
            ));
        }
    }
}

/// Every planted fragment is strictly more than `margin` times closer to its
/// own illustration than to any other illustration on the page.
pub fn separation_holds(page: &PageAnnotation, plan: &PagePlan, margin: f64) -> bool {
    plan.captions.iter().all(|cap| {
        let own = &page.illustration_regions[cap.illustration_index].bbox;
        cap.fragment_indices.iter().all(|&fi| {
            let fb = &page.text_regions[fi].bbox;
            let d_own = rect_distance(fb, own, DistanceMetric::EdgeToEdge);
            page.illustration_regions
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != cap.illustration_index)
                .all(|(_, other)| {
                    rect_distance(fb, &other.bbox, DistanceMetric::EdgeToEdge) > margin * d_own
                })
        })
    })
}

/// Generates `cfg.n_pages` pages and their ground truth. Pages are assigned
/// to books from `meta_pool` in contiguous runs.
pub fn generate(
    cfg: &GenConfig,
    meta_pool: &[BookMetadata],
) -> Result<(Vec<PageAnnotation>, GroundTruth), SynthError> {
    cfg.validate()?;
    if cfg.n_pages > 0 && meta_pool.is_empty() {
        return Err(SynthError("meta_pool is empty".into()));
    }
    let mut pages = Vec::with_capacity(cfg.n_pages);
    let mut gt = GroundTruth::default();
    for i in 0..cfg.n_pages {
        let book = &meta_pool[i * meta_pool.len() / cfg.n_pages];
        let built = generate_page(cfg, i, book);
        gt.pages.insert(built.page.page_id.clone(), built.plan);
        gt.pairs.extend(built.pairs);
        pages.push(built.page);
    }
    Ok((pages, gt))
}

const NON_CAPTION: [LayoutClass; 7] = [
    LayoutClass::Headline,
    LayoutClass::BodyText,
    LayoutClass::PageNumber,
    LayoutClass::InFigureText,
    LayoutClass::Note,
    LayoutClass::Header,
    LayoutClass::Background,
];

/// Geometric and layout-class noise. Every box moves by an independent
/// uniform offset in `[-jitter_px, jitter_px]` per axis (clamped to the
/// page), and each caption region is relabeled as a random non-caption
/// class with probability `class_flip_prob`.
pub fn perturb(
    pages: &[PageAnnotation],
    seed: u64,
    jitter_px: f64,
    class_flip_prob: f64,
) -> Vec<PageAnnotation> {
    pages
        .iter()
        .enumerate()
        .map(|(pi, page)| {
            let mut rng = SplitMix64::substream(seed, pi as u64);
            let mut out = page.clone();
            let (pw, ph) = (page.width_px, page.height_px);
            let jitter = |b: &BBox, rng: &mut SplitMix64| -> BBox {
                if jitter_px <= 0.0 {
                    return *b;
                }
                let dx = rng.uniform(-jitter_px, jitter_px);
                let dy = rng.uniform(-jitter_px, jitter_px);
                let x = (b.x() + dx).clamp(0.0, (pw - b.w()).max(0.0));
                let y = (b.y() + dy).clamp(0.0, (ph - b.h()).max(0.0));
                b.with_origin(x, y).unwrap_or(*b)
            };
            for ill in &mut out.illustration_regions {
                ill.bbox = jitter(&ill.bbox, &mut rng);
            }
            for t in &mut out.text_regions {
                t.bbox = jitter(&t.bbox, &mut rng);
                if t.layout_class == LayoutClass::Caption
                    && class_flip_prob > 0.0
                    && rng.chance(class_flip_prob)
                {
                    t.layout_class = *rng.choose(&NON_CAPTION);
                }
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{load_page, page_to_json};
    use crate::model::caption_char_count;

    fn small(n: usize) -> GenConfig {
        GenConfig {
            n_pages: n,
            ..GenConfig::default()
        }
    }

    #[test]
    fn phrase_bank_fits_defaults() {
        let min = PipelineConfig::default().min_caption_chars;
        for p in PHRASE_BANK {
            assert!(caption_char_count(p) >= min, "{p}");
            assert!(text_width(p) + 20.0 <= MIN_ILL_WIDTH, "{p}");
        }
    }

    #[test]
    fn empty_corpus() {
        let (pages, gt) = generate(&small(0), &[]).unwrap();
        assert!(pages.is_empty());
        assert!(gt.pairs.is_empty());
        assert!(gt.pages.is_empty());
    }

    #[test]
    fn same_seed_same_bytes() {
        let books = synthetic_books(4, 42);
        let (a, _) = generate(&small(20), &books).unwrap();
        let (b, _) = generate(&small(20), &books).unwrap();
        let ser = |p: &[PageAnnotation]| p.iter().map(page_to_json).collect::<Vec<_>>().join("\n");
        assert_eq!(ser(&a), ser(&b));
        let other = GenConfig {
            seed: 43,
            ..small(20)
        };
        let (c, _) = generate(&other, &books).unwrap();
        assert_ne!(ser(&a), ser(&c));
    }

    #[test]
    fn pages_are_valid_and_canonical() {
        let books = synthetic_books(3, 1);
        let (pages, gt) = generate(&small(60), &books).unwrap();
        for p in &pages {
            let (back, notes) = load_page(page_to_json(p).as_bytes()).unwrap();
            assert_eq!(&back, p);
            assert!(notes.is_empty());
            assert_eq!(&p.clone().canonicalized(), p);
            assert!(separation_holds(p, &gt.pages[&p.page_id], 2.0));
        }
    }

    #[test]
    fn tables_are_dense_and_photos_are_not() {
        let cfg = PipelineConfig::default();
        let (pages, gt) = generate(&small(80), &synthetic_books(2, 5)).unwrap();
        let mut tables = 0;
        for p in &pages {
            let plan = &gt.pages[&p.page_id];
            for (i, ill) in p.illustration_regions.iter().enumerate() {
                let load = crate::pairing::interior_text_load(p, &ill.bbox);
                if plan.dense_illustrations.contains(&i) {
                    tables += 1;
                    assert!(load > 60, "table load {load}");
                    let cells = p
                        .text_regions
                        .iter()
                        .filter(|r| {
                            let (cx, cy) = r.bbox.center();
                            ill.bbox.contains_point(cx, cy)
                        })
                        .count();
                    assert!(cells >= 5);
                } else {
                    assert!(load <= cfg.text_density_max_chars, "photo load {load}");
                }
            }
        }
        assert!(tables > 0);
    }

    #[test]
    fn split_phrase_preserves_words() {
        let mut rng = SplitMix64::new(3);
        for n in 1..=5 {
            let parts = split_phrase("Mount Fuji from Hakone", n, &mut rng);
            assert_eq!(parts.len(), n.min(4));
            assert_eq!(parts.join(" "), "Mount Fuji from Hakone");
        }
        assert_eq!(split_phrase("浅草寺雷門", 3, &mut rng), vec!["浅草寺雷門"]);
    }

    #[test]
    fn impossible_packing_is_config_error() {
        let cfg = GenConfig {
            page_size: [1200.0, 600.0],
            ..small(1)
        };
        assert!(generate(&cfg, &synthetic_books(1, 0)).is_err());
        let narrow = GenConfig {
            page_size: [500.0, 1800.0],
            ..small(1)
        };
        assert!(narrow.validate().is_err());
        let margin = GenConfig {
            separation_margin: 1.0,
            ..small(1)
        };
        assert!(margin.validate().is_err());
        assert!(generate(&small(1), &[]).is_err());
    }

    #[test]
    fn perturb_identity_and_flip() {
        let (pages, _) = generate(&small(10), &synthetic_books(2, 0)).unwrap();
        assert_eq!(perturb(&pages, 9, 0.0, 0.0), pages);
        let flipped = perturb(&pages, 9, 0.0, 1.0);
        assert!(flipped
            .iter()
            .flat_map(|p| &p.text_regions)
            .all(|r| r.layout_class != LayoutClass::Caption));
        let jittered = perturb(&pages, 9, 3.0, 0.0);
        for (a, b) in pages.iter().zip(&jittered) {
            b.check_geometry().unwrap();
            for (ra, rb) in a.illustration_regions.iter().zip(&b.illustration_regions) {
                assert!((ra.bbox.x() - rb.bbox.x()).abs() <= 3.0);
                assert!((ra.bbox.y() - rb.bbox.y()).abs() <= 3.0);
                assert_eq!(ra.bbox.w(), rb.bbox.w());
            }
        }
        assert_eq!(perturb(&pages, 9, 3.0, 0.0), jittered);
    }
}
