//! Dataset manifest, crop list and exclusion sidecar serialization.
//!
//! All three are line-delimited JSON. The manifest starts with one header
//! record carrying the effective config and statistics, followed by one
//! pair per line.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BBox, ImageTextPair, PipelineConfig};
use crate::pairing::{FragmentDiscard, IllustrationExclusion, PageExtraction};

pub const MANIFEST_FORMAT: &str = "bookpair-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("duplicate pair_id {0:?}")]
    DuplicatePairId(String),
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("manifest is inconsistent: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestStats {
    pub n_pages: usize,
    pub n_pairs: usize,
    pub n_excluded_illustrations: BTreeMap<String, usize>,
    pub n_discarded_fragments: BTreeMap<String, usize>,
    /// label key -> label value -> number of pairs.
    pub label_histogram: BTreeMap<String, BTreeMap<String, usize>>,
}

impl ManifestStats {
    /// Stats with every known reason present at zero.
    pub fn zeroed() -> Self {
        Self {
            n_excluded_illustrations: IllustrationExclusion::ALL
                .iter()
                .map(|r| (r.as_str().to_string(), 0))
                .collect(),
            n_discarded_fragments: FragmentDiscard::ALL
                .iter()
                .map(|r| (r.as_str().to_string(), 0))
                .collect(),
            ..Default::default()
        }
    }

    fn count_labels(&mut self, pair: &ImageTextPair) {
        for (k, v) in &pair.labels {
            *self
                .label_histogram
                .entry(k.clone())
                .or_default()
                .entry(v.clone())
                .or_default() += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub config: PipelineConfig,
    pub pairs: Vec<ImageTextPair>,
    pub stats: ManifestStats,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: PipelineConfig,
    stats: ManifestStats,
}

/// Assembles the manifest from per-page extractions, ordered by page id.
pub fn build_manifest(
    extractions: &[(String, PageExtraction)],
    cfg: &PipelineConfig,
) -> Result<DatasetManifest, EmitError> {
    let mut ordered: Vec<&(String, PageExtraction)> = extractions.iter().collect();
    ordered.sort_by(|a, b| a.0.cmp(&b.0));

    let mut stats = ManifestStats::zeroed();
    stats.n_pages = ordered.len();
    let mut pairs = Vec::new();
    let mut seen = BTreeSet::new();
    for (_, ex) in ordered {
        for e in &ex.excluded_illustrations {
            *stats
                .n_excluded_illustrations
                .entry(e.reason.as_str().to_string())
                .or_default() += 1;
        }
        for d in &ex.discarded_fragments {
            *stats
                .n_discarded_fragments
                .entry(d.reason.as_str().to_string())
                .or_default() += 1;
        }
        for pair in &ex.pairs {
            if !seen.insert(pair.pair_id.as_str()) {
                return Err(EmitError::DuplicatePairId(pair.pair_id.clone()));
            }
            stats.count_labels(pair);
            pairs.push(pair.clone());
        }
    }
    stats.n_pairs = pairs.len();
    Ok(DatasetManifest {
        format_version: MANIFEST_VERSION,
        config: cfg.clone(),
        pairs,
        stats,
    })
}

impl DatasetManifest {
    /// Checks pair-id uniqueness and that the stats agree with the pairs.
    pub fn validate(&self) -> Result<(), EmitError> {
        let mut seen = BTreeSet::new();
        for p in &self.pairs {
            if !seen.insert(p.pair_id.as_str()) {
                return Err(EmitError::DuplicatePairId(p.pair_id.clone()));
            }
        }
        if self.stats.n_pairs != self.pairs.len() {
            return Err(EmitError::Inconsistent(format!(
                "header says {} pairs, found {}",
                self.stats.n_pairs,
                self.pairs.len()
            )));
        }
        let mut expect = ManifestStats::default();
        self.pairs.iter().for_each(|p| expect.count_labels(p));
        if expect.label_histogram != self.stats.label_histogram {
            return Err(EmitError::Inconsistent(
                "label histogram does not match pairs".into(),
            ));
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let header = Header {
            format: MANIFEST_FORMAT.to_string(),
            version: self.format_version,
            config: self.config.clone(),
            stats: self.stats.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for p in &self.pairs {
            out.push_str(&serde_json::to_string(p).expect("pair serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses a manifest. Errors carry the 1-based line number.
    pub fn parse(text: &str) -> Result<Self, EmitError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let err = |line: usize, message: String| EmitError::Parse {
            line: line + 1,
            message,
        };
        let (hl, header_line) = lines
            .next()
            .ok_or_else(|| err(0, "missing header record".into()))?;
        let header: Header =
            serde_json::from_str(header_line).map_err(|e| err(hl, e.to_string()))?;
        if header.format != MANIFEST_FORMAT {
            return Err(err(hl, format!("unexpected format {:?}", header.format)));
        }
        if header.version != MANIFEST_VERSION {
            return Err(err(hl, format!("unsupported version {}", header.version)));
        }
        let pairs = lines
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| err(i, e.to_string())))
            .collect::<Result<Vec<ImageTextPair>, _>>()?;
        Ok(Self {
            format_version: header.version,
            config: header.config,
            pairs,
            stats: header.stats,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropRecord {
    pub pair_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

pub const FLAG_NO_SOURCE_IMAGE: &str = "no_source_image";

/// One crop record per pair, in manifest order. `image_paths` maps page id
/// to the scanned image the page was annotated from.
pub fn write_crop_list(
    manifest: &DatasetManifest,
    image_paths: &BTreeMap<String, String>,
) -> Vec<CropRecord> {
    manifest
        .pairs
        .iter()
        .map(|p| {
            let image_path = image_paths.get(&p.page_id).cloned();
            let flag = image_path
                .is_none()
                .then(|| FLAG_NO_SOURCE_IMAGE.to_string());
            CropRecord {
                pair_id: p.pair_id.clone(),
                image_path,
                bbox: p.illustration_bbox,
                flag,
            }
        })
        .collect()
}

pub fn records_to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_jsonl<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, EmitError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EmitError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionKind {
    Illustration,
    Fragment,
}

/// One dropped illustration or caption fragment. Indices refer to the
/// page's regions in spatial page order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionRecord {
    pub page_id: String,
    pub kind: ExclusionKind,
    pub index: usize,
    pub bbox: BBox,
    pub reason: String,
}

/// Flattens the exclusions of every page, ordered by page id.
pub fn exclusion_records(extractions: &[(String, PageExtraction)]) -> Vec<ExclusionRecord> {
    let mut ordered: Vec<&(String, PageExtraction)> = extractions.iter().collect();
    ordered.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = Vec::new();
    for (page_id, ex) in ordered {
        out.extend(ex.excluded_illustrations.iter().map(|e| ExclusionRecord {
            page_id: page_id.clone(),
            kind: ExclusionKind::Illustration,
            index: e.index,
            bbox: e.region.bbox,
            reason: e.reason.as_str().to_string(),
        }));
        out.extend(ex.discarded_fragments.iter().map(|d| ExclusionRecord {
            page_id: page_id.clone(),
            kind: ExclusionKind::Fragment,
            index: d.fragment.source_index,
            bbox: d.fragment.bbox,
            reason: d.reason.as_str().to_string(),
        }));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Labels;

    fn pair(page: &str, ordinal: usize, pref: &str) -> ImageTextPair {
        let mut labels = Labels::new();
        labels.insert("prefecture".into(), pref.into());
        ImageTextPair {
            pair_id: format!("{page}#{ordinal}"),
            page_id: page.into(),
            book_id: "b1".into(),
            illustration_bbox: BBox::new(10., 10., 100., 80.).unwrap(),
            caption_text: "Osaka Castle".into(),
            fragment_bboxes: vec![BBox::new(10., 100., 90., 20.).unwrap()],
            labels,
        }
    }

    fn page_ex(pairs: Vec<ImageTextPair>) -> PageExtraction {
        PageExtraction {
            pairs,
            ..Default::default()
        }
    }

    #[test]
    fn empty_manifest_has_zeroed_stats() {
        let m = build_manifest(&[], &PipelineConfig::default()).unwrap();
        assert!(m.pairs.is_empty());
        assert_eq!(m.stats, ManifestStats::zeroed());
        assert!(m.stats.n_excluded_illustrations.values().all(|&v| v == 0));
        m.validate().unwrap();
    }

    #[test]
    fn histogram_counts_labels() {
        let ex = vec![
            ("p2".to_string(), page_ex(vec![pair("p2", 0, "Tokyo")])),
            ("p1".to_string(), page_ex(vec![pair("p1", 0, "Tokyo")])),
        ];
        let m = build_manifest(&ex, &PipelineConfig::default()).unwrap();
        assert_eq!(m.stats.label_histogram["prefecture"]["Tokyo"], 2);
        assert_eq!(m.stats.n_pages, 2);
        let ids: Vec<_> = m.pairs.iter().map(|p| p.pair_id.as_str()).collect();
        assert_eq!(ids, ["p1#0", "p2#0"]);
    }

    #[test]
    fn duplicate_pair_id_rejected() {
        let ex = vec![
            ("p1".to_string(), page_ex(vec![pair("p1", 0, "Tokyo")])),
            ("p1".to_string(), page_ex(vec![pair("p1", 0, "Kyoto")])),
        ];
        assert!(matches!(
            build_manifest(&ex, &PipelineConfig::default()),
            Err(EmitError::DuplicatePairId(_))
        ));
    }

    #[test]
    fn manifest_round_trip_and_header_shape() {
        let ex = vec![(
            "p1".to_string(),
            page_ex(vec![pair("p1", 0, "Nara"), pair("p1", 2, "Nara")]),
        )];
        let m = build_manifest(&ex, &PipelineConfig::default()).unwrap();
        let text = m.to_jsonl();
        let header: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(header["format"], "bookpair-manifest");
        assert_eq!(header["version"], 1);
        assert_eq!(header["config"]["min_caption_chars"], 4);
        assert_eq!(text.lines().count(), 3);
        let back = DatasetManifest::parse(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn parse_reports_line_numbers() {
        let ex = vec![("p1".to_string(), page_ex(vec![pair("p1", 0, "Nara")]))];
        let mut text = build_manifest(&ex, &PipelineConfig::default())
            .unwrap()
            .to_jsonl();
        text.push_str("{\"pair_id\": 3}\n");
        match DatasetManifest::parse(&text) {
            Err(EmitError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            DatasetManifest::parse(""),
            Err(EmitError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn validate_detects_stat_drift() {
        let ex = vec![("p1".to_string(), page_ex(vec![pair("p1", 0, "Nara")]))];
        let mut m = build_manifest(&ex, &PipelineConfig::default()).unwrap();
        m.pairs.pop();
        assert!(m.validate().is_err());
    }

    #[test]
    fn crop_list_flags_missing_images() {
        let ex = vec![
            ("p1".to_string(), page_ex(vec![pair("p1", 0, "Nara")])),
            (
                "p2".to_string(),
                page_ex(vec![pair("p2", 0, "Nara"), pair("p2", 1, "Nara")]),
            ),
        ];
        let m = build_manifest(&ex, &PipelineConfig::default()).unwrap();
        let mut paths = BTreeMap::new();
        paths.insert("p1".to_string(), "scans/p1.jpg".to_string());
        let crops = write_crop_list(&m, &paths);
        assert_eq!(crops.len(), 3);
        assert_eq!(crops[0].image_path.as_deref(), Some("scans/p1.jpg"));
        assert_eq!(crops[0].flag, None);
        assert_eq!(crops[0].bbox, m.pairs[0].illustration_bbox);
        assert_eq!(crops[1].flag.as_deref(), Some(FLAG_NO_SOURCE_IMAGE));
        let ids: Vec<_> = crops.iter().map(|c| c.pair_id.as_str()).collect();
        assert_eq!(ids, ["p1#0", "p2#0", "p2#1"]);
        let line = records_to_jsonl(&crops[1..2]);
        assert_eq!(
            line,
            "{\"pair_id\":\"p2#0\",\"bbox\":[10.0,10.0,100.0,80.0],\"flag\":\"no_source_image\"}\n"
        );
    }
}
