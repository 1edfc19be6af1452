use std::fs;
use std::path::Path;

use bookpair_core::ingest::{
    load_corpus, metadata_to_json, page_to_json, CorpusSource, IngestError, Strictness,
};
use bookpair_core::synthgen::{generate, synthetic_books, GenConfig};
use bookpair_core::PageAnnotation;

fn write_corpus(
    dir: &Path,
    pages: &[PageAnnotation],
    names: impl Fn(usize, &PageAnnotation) -> String,
) {
    let pages_dir = dir.join("pages");
    fs::create_dir_all(&pages_dir).unwrap();
    for (i, p) in pages.iter().enumerate() {
        fs::write(pages_dir.join(names(i, p)), page_to_json(p)).unwrap();
    }
}

fn fixture(n: usize) -> (Vec<PageAnnotation>, String) {
    let cfg = GenConfig {
        n_pages: n,
        ..GenConfig::default()
    };
    let books = synthetic_books(2, 42);
    let (pages, _) = generate(&cfg, &books).unwrap();
    (pages, metadata_to_json(&books))
}

fn source(dir: &Path, strictness: Strictness) -> CorpusSource {
    CorpusSource {
        pages_dir: dir.join("pages"),
        metadata_path: dir.join("metadata.json"),
        strictness,
    }
}

#[test]
fn well_formed_corpus_loads_fully() {
    let tmp = tempfile::tempdir().unwrap();
    let (pages, meta) = fixture(3);
    write_corpus(tmp.path(), &pages, |_, p| format!("{}.json", p.page_id));
    fs::write(tmp.path().join("metadata.json"), meta).unwrap();
    let corpus = load_corpus(&source(tmp.path(), Strictness::Strict)).unwrap();
    assert_eq!(corpus.pages, pages);
    assert_eq!(corpus.report.pages_loaded, 3);
    assert_eq!(corpus.report.pages_skipped, 0);
    assert_eq!(corpus.metadata.len(), 2);
}

#[test]
fn lenient_skips_malformed_and_strict_rejects() {
    let tmp = tempfile::tempdir().unwrap();
    let (pages, meta) = fixture(3);
    write_corpus(tmp.path(), &pages, |_, p| format!("{}.json", p.page_id));
    fs::write(
        tmp.path()
            .join("pages")
            .join(format!("{}.json", pages[1].page_id)),
        "{ broken",
    )
    .unwrap();
    fs::write(tmp.path().join("metadata.json"), meta).unwrap();

    let corpus = load_corpus(&source(tmp.path(), Strictness::Lenient)).unwrap();
    assert_eq!(corpus.report.pages_loaded, 2);
    assert_eq!(corpus.report.pages_skipped, 1);
    assert_eq!(corpus.report.diagnostics.len(), 1);
    assert!(corpus.report.diagnostics[0]
        .file
        .ends_with(&format!("{}.json", pages[1].page_id)));

    let err = load_corpus(&source(tmp.path(), Strictness::Strict)).unwrap_err();
    assert!(matches!(err.root(), IngestError::Schema(_)), "{err}");
}

#[test]
fn output_order_ignores_file_names() {
    let tmp = tempfile::tempdir().unwrap();
    let (pages, meta) = fixture(6);
    // File names sort in the reverse of page order.
    write_corpus(tmp.path(), &pages, |i, _| format!("{:02}.json", 99 - i));
    fs::write(tmp.path().join("metadata.json"), meta).unwrap();
    let corpus = load_corpus(&source(tmp.path(), Strictness::Strict)).unwrap();
    let ids: Vec<_> = corpus.pages.iter().map(|p| p.page_id.clone()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    assert_eq!(corpus.pages, pages);
}

#[test]
fn missing_metadata() {
    let tmp = tempfile::tempdir().unwrap();
    let (pages, _) = fixture(2);
    write_corpus(tmp.path(), &pages, |_, p| format!("{}.json", p.page_id));
    fs::write(tmp.path().join("metadata.json"), r#"{"books": []}"#).unwrap();
    let err = load_corpus(&source(tmp.path(), Strictness::Strict)).unwrap_err();
    assert!(matches!(err, IngestError::MissingMetadata { .. }));
    let corpus = load_corpus(&source(tmp.path(), Strictness::Lenient)).unwrap();
    assert_eq!(corpus.pages.len(), 2);
    assert_eq!(corpus.report.diagnostics.len(), 2);
}

#[test]
fn duplicate_page_ids() {
    let tmp = tempfile::tempdir().unwrap();
    let (pages, meta) = fixture(1);
    let twice = vec![pages[0].clone(), pages[0].clone()];
    write_corpus(tmp.path(), &twice, |i, _| format!("copy{i}.json"));
    fs::write(tmp.path().join("metadata.json"), meta).unwrap();
    assert!(matches!(
        load_corpus(&source(tmp.path(), Strictness::Strict)),
        Err(IngestError::DuplicatePage(_))
    ));
    let corpus = load_corpus(&source(tmp.path(), Strictness::Lenient)).unwrap();
    assert_eq!(
        (corpus.report.pages_loaded, corpus.report.pages_skipped),
        (1, 1)
    );
}

#[test]
fn missing_pages_dir_is_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("metadata.json"), r#"{"books": []}"#).unwrap();
    let err = load_corpus(&source(tmp.path(), Strictness::Strict)).unwrap_err();
    assert!(matches!(err, IngestError::Io { .. }));
}
