//! Loading and validation of page-annotation and book-metadata documents.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    BBox, BookMetadata, GeometryError, IllustrationRegion, LayoutClass, PageAnnotation, TextRegion,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("geometry error: {0}")]
    Geometry(#[from] GeometryError),
    #[error("duplicate book_id {0:?} in metadata")]
    DuplicateBook(String),
    #[error("duplicate page_id {0:?} in corpus")]
    DuplicatePage(String),
    #[error("no metadata for book_id {book_id:?} (page {page_id:?})")]
    MissingMetadata { page_id: String, book_id: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<IngestError>,
    },
}

impl IngestError {
    fn in_file(self, path: &Path) -> Self {
        IngestError::InFile {
            path: path.to_path_buf(),
            source: Box::new(self),
        }
    }

    /// The underlying error, with any file context stripped.
    pub fn root(&self) -> &IngestError {
        match self {
            IngestError::InFile { source, .. } => source.root(),
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strictness {
    /// Any malformed input aborts the load.
    #[default]
    Strict,
    /// Malformed files are skipped and reported.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Diagnostic {
    pub file: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub pages_loaded: usize,
    pub pages_skipped: usize,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone)]
pub struct CorpusSource {
    pub pages_dir: PathBuf,
    pub metadata_path: PathBuf,
    pub strictness: Strictness,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    /// Sorted ascending by `page_id`.
    pub pages: Vec<PageAnnotation>,
    pub metadata: BTreeMap<String, BookMetadata>,
    pub report: IngestReport,
}

// Wire-level shapes. Layout classes are read as free strings so unknown
// taxonomies can be mapped instead of rejected.

#[derive(Deserialize)]
struct RawPage {
    page_id: String,
    book_id: String,
    width_px: f64,
    height_px: f64,
    #[serde(default)]
    image_path: Option<String>,
    text_regions: Vec<RawTextRegion>,
    illustration_regions: Vec<RawIllustration>,
}

#[derive(Deserialize)]
struct RawTextRegion {
    bbox: [f64; 4],
    text: String,
    layout_class: String,
    confidence: f64,
}

#[derive(Deserialize)]
struct RawIllustration {
    bbox: [f64; 4],
    confidence: f64,
}

#[derive(Deserialize)]
struct RawMetadataDoc {
    books: Vec<BookMetadata>,
}

fn check_confidence(c: f64, what: &str, i: usize) -> Result<(), IngestError> {
    if (0.0..=1.0).contains(&c) {
        Ok(())
    } else {
        Err(IngestError::Schema(format!(
            "{what}[{i}].confidence {c} outside [0, 1]"
        )))
    }
}

/// Parses and validates one page-annotation document.
///
/// Returns the page together with non-fatal findings (unknown layout classes,
/// empty text on non-background regions).
pub fn load_page(bytes: &[u8]) -> Result<(PageAnnotation, Vec<String>), IngestError> {
    let raw: RawPage =
        serde_json::from_slice(bytes).map_err(|e| IngestError::Schema(e.to_string()))?;
    if raw.page_id.is_empty() {
        return Err(IngestError::Schema("page_id is empty".into()));
    }
    if raw.book_id.is_empty() {
        return Err(IngestError::Schema("book_id is empty".into()));
    }
    let mut notes = Vec::new();

    let mut text_regions = Vec::with_capacity(raw.text_regions.len());
    for (i, r) in raw.text_regions.into_iter().enumerate() {
        check_confidence(r.confidence, "text_regions", i)?;
        let bbox = BBox::try_from(r.bbox)?;
        let layout_class = LayoutClass::parse(&r.layout_class).unwrap_or_else(|| {
            notes.push(format!(
                "text_regions[{i}]: unknown layout_class {:?} mapped to background",
                r.layout_class
            ));
            LayoutClass::Background
        });
        if r.text.is_empty() && layout_class != LayoutClass::Background {
            notes.push(format!(
                "text_regions[{i}]: empty text on {layout_class} region"
            ));
        }
        text_regions.push(TextRegion {
            bbox,
            text: r.text,
            layout_class,
            confidence: r.confidence,
        });
    }

    let mut illustration_regions = Vec::with_capacity(raw.illustration_regions.len());
    for (i, r) in raw.illustration_regions.into_iter().enumerate() {
        check_confidence(r.confidence, "illustration_regions", i)?;
        illustration_regions.push(IllustrationRegion {
            bbox: BBox::try_from(r.bbox)?,
            confidence: r.confidence,
        });
    }

    let page = PageAnnotation {
        page_id: raw.page_id,
        book_id: raw.book_id,
        width_px: raw.width_px,
        height_px: raw.height_px,
        image_path: raw.image_path,
        text_regions,
        illustration_regions,
    };
    page.check_geometry()?;
    Ok((page, notes))
}

/// Serializes a page in the annotation document format.
pub fn page_to_json(page: &PageAnnotation) -> String {
    serde_json::to_string_pretty(page).expect("page serialization is infallible")
}

/// Parses a metadata document. Duplicate `book_id`s are an error in strict
/// mode; in lenient mode the first record wins and the rest are reported.
pub fn load_metadata(
    bytes: &[u8],
    strictness: Strictness,
) -> Result<(Vec<BookMetadata>, Vec<String>), IngestError> {
    let doc: RawMetadataDoc =
        serde_json::from_slice(bytes).map_err(|e| IngestError::Schema(e.to_string()))?;
    let mut seen = BTreeSet::new();
    let mut books = Vec::with_capacity(doc.books.len());
    let mut notes = Vec::new();
    for (i, book) in doc.books.into_iter().enumerate() {
        if book.book_id.is_empty() {
            return Err(IngestError::Schema(format!("books[{i}].book_id is empty")));
        }
        if !seen.insert(book.book_id.clone()) {
            match strictness {
                Strictness::Strict => return Err(IngestError::DuplicateBook(book.book_id)),
                Strictness::Lenient => {
                    notes.push(format!(
                        "books[{i}]: duplicate book_id {:?} ignored",
                        book.book_id
                    ));
                    continue;
                }
            }
        }
        books.push(book);
    }
    Ok((books, notes))
}

#[derive(Serialize)]
struct MetadataDocRef<'a> {
    books: &'a [BookMetadata],
}

pub fn metadata_to_json(books: &[BookMetadata]) -> String {
    serde_json::to_string_pretty(&MetadataDocRef { books })
        .expect("metadata serialization is infallible")
}

fn read(path: &Path) -> Result<Vec<u8>, IngestError> {
    fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Lists `*.json` files directly inside `dir`.
fn page_files(dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let io_err = |source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads every page under `pages_dir` and the metadata table.
///
/// The result does not depend on directory enumeration order: pages are
/// returned sorted by `page_id` and diagnostics sorted by file.
pub fn load_corpus(src: &CorpusSource) -> Result<Corpus, IngestError> {
    let strict = src.strictness == Strictness::Strict;
    let meta_bytes = read(&src.metadata_path)?;
    let (books, meta_notes) =
        load_metadata(&meta_bytes, src.strictness).map_err(|e| e.in_file(&src.metadata_path))?;
    let meta_file = src.metadata_path.display().to_string();
    let mut report = IngestReport::default();
    report
        .diagnostics
        .extend(meta_notes.into_iter().map(|reason| Diagnostic {
            file: meta_file.clone(),
            reason,
        }));
    let metadata: BTreeMap<String, BookMetadata> =
        books.into_iter().map(|b| (b.book_id.clone(), b)).collect();

    let mut pages: Vec<(PageAnnotation, String)> = Vec::new();
    for path in page_files(&src.pages_dir)? {
        let file = path.display().to_string();
        let parsed = read(&path).and_then(|bytes| load_page(&bytes));
        match parsed {
            Ok((page, notes)) => {
                report
                    .diagnostics
                    .extend(notes.into_iter().map(|reason| Diagnostic {
                        file: file.clone(),
                        reason,
                    }));
                pages.push((page, file));
            }
            Err(e) if strict => return Err(e.in_file(&path)),
            Err(e) => {
                report.pages_skipped += 1;
                report.diagnostics.push(Diagnostic {
                    file,
                    reason: e.to_string(),
                });
            }
        }
    }

    pages.sort_by(|a, b| a.0.page_id.cmp(&b.0.page_id).then_with(|| a.1.cmp(&b.1)));
    let mut out: Vec<PageAnnotation> = Vec::with_capacity(pages.len());
    for (page, file) in pages {
        if out.last().is_some_and(|p| p.page_id == page.page_id) {
            if strict {
                return Err(IngestError::DuplicatePage(page.page_id));
            }
            report.pages_skipped += 1;
            report.diagnostics.push(Diagnostic {
                file,
                reason: format!("duplicate page_id {:?}", page.page_id),
            });
            continue;
        }
        if !metadata.contains_key(&page.book_id) {
            if strict {
                return Err(IngestError::MissingMetadata {
                    page_id: page.page_id,
                    book_id: page.book_id,
                });
            }
            report.diagnostics.push(Diagnostic {
                file,
                reason: format!(
                    "no metadata for book_id {:?}; labels left empty",
                    page.book_id
                ),
            });
        }
        out.push(page);
    }
    report.pages_loaded = out.len();
    report.diagnostics.sort();

    Ok(Corpus {
        pages: out,
        metadata,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAGE: &str = r#"{
        "page_id": "p1", "book_id": "b1", "width_px": 1000, "height_px": 1500,
        "image_path": "img/p1.png",
        "text_regions": [
            {"bbox": [100, 420, 200, 24], "text": "KAMEIDO TENMANGU", "layout_class": "caption", "confidence": 0.9}
        ],
        "illustration_regions": [
            {"bbox": [100, 100, 400, 300], "confidence": 0.95}
        ]
    }"#;

    #[test]
    fn minimal_page_loads() {
        let (page, notes) = load_page(PAGE.as_bytes()).unwrap();
        assert_eq!(page.text_regions.len(), 1);
        assert_eq!(page.illustration_regions.len(), 1);
        assert_eq!(page.text_regions[0].layout_class, LayoutClass::Caption);
        assert_eq!(page.image_path.as_deref(), Some("img/p1.png"));
        assert!(notes.is_empty());
    }

    #[test]
    fn illustration_outside_page_is_geometry_error() {
        let doc = PAGE.replace("[100, 100, 400, 300]", "[700, 100, 400, 300]");
        let err = load_page(doc.as_bytes()).unwrap_err();
        assert!(matches!(
            err,
            IngestError::Geometry(GeometryError::OutOfPage { .. })
        ));
    }

    #[test]
    fn non_positive_extent_is_geometry_error() {
        let doc = PAGE.replace("[100, 100, 400, 300]", "[100, 100, 0, 300]");
        let err = load_page(doc.as_bytes()).unwrap_err();
        assert!(matches!(
            err,
            IngestError::Geometry(GeometryError::NonPositiveExtent { .. })
        ));
    }

    #[test]
    fn unknown_layout_class_degrades_to_background() {
        let doc = PAGE.replace("\"caption\"", "\"figure_note\"");
        let (page, notes) = load_page(doc.as_bytes()).unwrap();
        assert_eq!(page.text_regions.len(), 1);
        assert_eq!(page.text_regions[0].layout_class, LayoutClass::Background);
        assert_eq!(notes.len(), 1);
        assert!(notes[0].contains("figure_note"), "{notes:?}");
    }

    #[test]
    fn schema_errors() {
        let missing = PAGE.replace("\"book_id\": \"b1\",", "");
        assert!(matches!(
            load_page(missing.as_bytes()),
            Err(IngestError::Schema(_))
        ));
        let wrong_type = PAGE.replace("\"width_px\": 1000", "\"width_px\": \"wide\"");
        assert!(matches!(
            load_page(wrong_type.as_bytes()),
            Err(IngestError::Schema(_))
        ));
        let conf = PAGE.replace("0.95", "1.5");
        assert!(matches!(
            load_page(conf.as_bytes()),
            Err(IngestError::Schema(_))
        ));
        let empty_book = PAGE.replace("\"b1\"", "\"\"");
        assert!(matches!(
            load_page(empty_book.as_bytes()),
            Err(IngestError::Schema(_))
        ));
        assert!(matches!(
            load_page(b"not json"),
            Err(IngestError::Schema(_))
        ));
    }

    #[test]
    fn metadata_examples() {
        let one = br#"{"books": [{"book_id": "b1", "labels": {"prefecture": "Tokyo"}}]}"#;
        let (books, _) = load_metadata(one, Strictness::Strict).unwrap();
        assert_eq!(books.len(), 1);
        assert_eq!(books[0].book_id, "b1");
        assert_eq!(
            books[0].labels.get("prefecture").map(String::as_str),
            Some("Tokyo")
        );

        let (empty, _) = load_metadata(br#"{"books": []}"#, Strictness::Strict).unwrap();
        assert!(empty.is_empty());

        let dup = br#"{"books": [{"book_id": "b1", "labels": {}}, {"book_id": "b1", "labels": {"x": "y"}}]}"#;
        assert!(matches!(
            load_metadata(dup, Strictness::Strict),
            Err(IngestError::DuplicateBook(id)) if id == "b1"
        ));
        let (books, notes) = load_metadata(dup, Strictness::Lenient).unwrap();
        assert_eq!(books.len(), 1);
        assert!(books[0].labels.is_empty());
        assert_eq!(notes.len(), 1);
    }

    #[test]
    fn page_json_round_trip() {
        let (page, _) = load_page(PAGE.as_bytes()).unwrap();
        let (again, _) = load_page(page_to_json(&page).as_bytes()).unwrap();
        assert_eq!(page, again);
    }
}
