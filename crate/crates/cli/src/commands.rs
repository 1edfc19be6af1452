use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use bookpair_core::emit::{
    build_manifest, exclusion_records, records_to_jsonl, write_crop_list, DatasetManifest,
    ManifestStats,
};
use bookpair_core::eval::{
    eval_pairs as score_pairs, mean_recall_over_subsamples, recall_at_k, EmbeddingSet,
    PairEvalResult, RetrievalError, RetrievalResult,
};
use bookpair_core::ingest::{
    load_corpus, metadata_to_json, page_to_json, CorpusSource, IngestError, Strictness,
};
use bookpair_core::pairing::extract_page;
use bookpair_core::synthgen::{generate, synthetic_books, GenConfig};
use bookpair_core::{BookMetadata, PipelineConfig};

use crate::failure::{fail, CmdResult, Code, OrCode};
use crate::{EvalPairsArgs, EvalRetrievalArgs, ExtractArgs, Format, GenArgs, StatsArgs};

fn read_text(path: &Path) -> CmdResult<String> {
    fs::read_to_string(path)
        .or_code_with(Code::IoOrSchema, || format!("reading {}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).or_code_with(Code::IoOrSchema, || {
            format!("creating {}", parent.display())
        })?;
    }
    fs::write(path, contents)
        .or_code_with(Code::IoOrSchema, || format!("writing {}", path.display()))
}

/// Reads a JSON config file and returns `section` if present, else the whole
/// document.
fn config_section(path: &Path, section: &str) -> CmdResult<Value> {
    let text = read_text(path)?;
    let mut doc: Value = serde_json::from_str(&text)
        .or_code_with(Code::IoOrSchema, || format!("parsing {}", path.display()))?;
    if let Some(inner) = doc.get_mut(section) {
        return Ok(inner.take());
    }
    if doc.get("pipeline").is_some() || doc.get("generator").is_some() {
        return Ok(json!({}));
    }
    Ok(doc)
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "manifest".into());
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string(value).expect("output serializes")
    );
}

fn reason_line(counts: &BTreeMap<String, usize>) -> String {
    counts
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn print_stats(stats: &ManifestStats) {
    println!("pages:                  {}", stats.n_pages);
    println!("pairs:                  {}", stats.n_pairs);
    println!(
        "excluded illustrations: {}",
        reason_line(&stats.n_excluded_illustrations)
    );
    println!(
        "discarded fragments:    {}",
        reason_line(&stats.n_discarded_fragments)
    );
    for (key, values) in &stats.label_histogram {
        println!("label {key}:");
        for (value, n) in values {
            println!("  {value:<20} {n}");
        }
    }
}

fn ingest_code(err: &IngestError, metadata_path: &Path) -> Code {
    match err {
        IngestError::Io { .. } => Code::IoOrSchema,
        IngestError::InFile { path, .. } if path == metadata_path => Code::IoOrSchema,
        _ => Code::Validation,
    }
}

fn pipeline_config(args: &ExtractArgs) -> CmdResult<PipelineConfig> {
    let mut cfg: PipelineConfig = match &args.config {
        Some(path) => serde_json::from_value(config_section(path, "pipeline")?)
            .or_code_with(Code::IoOrSchema, || {
                format!("pipeline config in {}", path.display())
            })?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = args.text_density_max_chars {
        cfg.text_density_max_chars = v;
    }
    if let Some(v) = args.min_caption_chars {
        cfg.min_caption_chars = v;
    }
    if let Some(v) = &args.join_delimiter {
        cfg.join_delimiter = v.clone();
    }
    if let Some(v) = args.row_overlap_fraction {
        cfg.row_overlap_fraction = v;
    }
    if let Some(v) = args.distance_metric {
        cfg.distance_metric = v.into();
    }
    if let Some(v) = args.reading_order {
        cfg.reading_order = v.into();
    }
    cfg.validate().or_code(Code::Validation)?;
    Ok(cfg)
}

pub fn extract(args: ExtractArgs, format: Format) -> CmdResult {
    let cfg = pipeline_config(&args)?;
    if !args.pages.is_dir() {
        return fail(
            Code::IoOrSchema,
            format!("pages directory {} does not exist", args.pages.display()),
        );
    }
    let src = CorpusSource {
        pages_dir: args.pages.clone(),
        metadata_path: args.metadata.clone(),
        strictness: if args.strict {
            Strictness::Strict
        } else {
            Strictness::Lenient
        },
    };
    let corpus = load_corpus(&src).map_err(|e| crate::failure::Failure {
        code: ingest_code(&e, &args.metadata),
        error: e.into(),
    })?;
    for d in &corpus.report.diagnostics {
        eprintln!("warning: {}: {}", d.file, d.reason);
    }

    let mut extractions = Vec::with_capacity(corpus.pages.len());
    let mut image_paths = BTreeMap::new();
    for page in &corpus.pages {
        let meta = corpus
            .metadata
            .get(&page.book_id)
            .cloned()
            .unwrap_or_else(|| BookMetadata::unlabeled(page.book_id.clone()));
        let ex = extract_page(page, &meta, &cfg).or_code(Code::Internal)?;
        if let Some(path) = &page.image_path {
            image_paths.insert(page.page_id.clone(), path.clone());
        }
        extractions.push((page.page_id.clone(), ex));
    }
    let manifest = build_manifest(&extractions, &cfg).or_code(Code::Internal)?;

    let crops_path = args
        .crops
        .clone()
        .unwrap_or_else(|| sibling(&args.out, "crops.jsonl"));
    let excl_path = args
        .exclusions
        .clone()
        .unwrap_or_else(|| sibling(&args.out, "exclusions.jsonl"));
    write_file(&args.out, &manifest.to_jsonl())?;
    write_file(
        &crops_path,
        &records_to_jsonl(&write_crop_list(&manifest, &image_paths)),
    )?;
    write_file(
        &excl_path,
        &records_to_jsonl(&exclusion_records(&extractions)),
    )?;

    match format {
        Format::Json => print_json(&json!({
            "command": "extract",
            "manifest": args.out,
            "crops": crops_path,
            "exclusions": excl_path,
            "pages_loaded": corpus.report.pages_loaded,
            "pages_skipped": corpus.report.pages_skipped,
            "diagnostics": corpus.report.diagnostics.len(),
            "stats": manifest.stats,
        })),
        Format::Text => {
            print_stats(&manifest.stats);
            println!("pages skipped:          {}", corpus.report.pages_skipped);
            println!("manifest:               {}", args.out.display());
        }
    }
    Ok(())
}

fn gen_config(args: &GenArgs) -> CmdResult<GenConfig> {
    let mut cfg: GenConfig = match &args.config {
        Some(path) => serde_json::from_value(config_section(path, "generator")?)
            .or_code_with(Code::IoOrSchema, || {
                format!("generator config in {}", path.display())
            })?,
        None => GenConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.n_pages {
        cfg.n_pages = n;
    }
    cfg.validate().or_code(Code::Validation)?;
    Ok(cfg)
}

pub fn gen(args: GenArgs, format: Format) -> CmdResult {
    let cfg = gen_config(&args)?;
    let books = synthetic_books(cfg.n_books.max(1), cfg.seed);
    let (pages, gt) = generate(&cfg, &books).or_code(Code::Validation)?;

    let pages_dir = args.out.join("pages");
    fs::create_dir_all(&pages_dir).or_code_with(Code::IoOrSchema, || {
        format!("creating {}", pages_dir.display())
    })?;
    // Drop pages from an earlier, larger run so the tree matches this config.
    let stale = fs::read_dir(&pages_dir).or_code(Code::IoOrSchema)?;
    for entry in stale {
        let path = entry.or_code(Code::IoOrSchema)?.path();
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if name.starts_with("page-") && name.ends_with(".json") {
            fs::remove_file(&path).or_code(Code::IoOrSchema)?;
        }
    }
    for page in &pages {
        write_file(
            &pages_dir.join(format!("{}.json", page.page_id)),
            &page_to_json(page),
        )?;
    }
    write_file(&args.out.join("metadata.json"), &metadata_to_json(&books))?;
    let manifest = gt.manifest(&pages);
    write_file(&args.out.join("ground_truth.jsonl"), &manifest.to_jsonl())?;
    write_file(
        &args.out.join("ground_truth.exclusions.jsonl"),
        &records_to_jsonl(&gt.exclusion_records(&pages)),
    )?;
    let echo =
        serde_json::to_string_pretty(&json!({ "generator": cfg })).expect("config serializes");
    write_file(&args.out.join("gen_config.json"), &echo)?;

    match format {
        Format::Json => print_json(&json!({
            "command": "gen",
            "out": args.out,
            "seed": cfg.seed,
            "pages": pages.len(),
            "books": books.len(),
            "stats": manifest.stats,
        })),
        Format::Text => {
            println!(
                "generated {} pages from {} books (seed {})",
                pages.len(),
                books.len(),
                cfg.seed
            );
            print_stats(&manifest.stats);
            println!("output:                 {}", args.out.display());
        }
    }
    Ok(())
}

fn read_manifest(path: &Path) -> CmdResult<DatasetManifest> {
    let text = read_text(path)?;
    DatasetManifest::parse(&text).or_code_with(Code::IoOrSchema, || path.display().to_string())
}

fn print_pair_eval(r: &PairEvalResult) {
    println!("metric      value");
    println!("tp          {}", r.true_positives);
    println!("fp          {}", r.false_positives);
    println!("fn          {}", r.false_negatives);
    println!("precision   {:.3}", r.precision);
    println!("recall      {:.3}", r.recall);
    println!("f1          {:.3}", r.f1);
}

pub fn eval_pairs(args: EvalPairsArgs, format: Format) -> CmdResult {
    let predicted = read_manifest(&args.predicted)?;
    let truth = read_manifest(&args.truth)?;
    let r = score_pairs(
        &predicted.pairs,
        &truth.pairs,
        args.iou_threshold,
        args.text_match.into(),
    );
    if format == Format::Text {
        print_pair_eval(&r);
    }
    print_json(&r);
    Ok(())
}

fn read_embeddings(path: &Path) -> CmdResult<EmbeddingSet> {
    let text = read_text(path)?;
    EmbeddingSet::parse(&text).or_code_with(Code::IoOrSchema, || path.display().to_string())
}

fn retrieval_code(e: &RetrievalError) -> Code {
    match e {
        RetrievalError::Parse { .. }
        | RetrievalError::ZeroNormVector(_)
        | RetrievalError::DuplicateId(_) => Code::IoOrSchema,
        _ => Code::Validation,
    }
}

pub fn eval_retrieval(args: EvalRetrievalArgs, format: Format) -> CmdResult {
    let queries = read_embeddings(&args.queries)?;
    let gallery = read_embeddings(&args.gallery)?;
    let (result, repeats): (Result<RetrievalResult, RetrievalError>, usize) = match args.sample_n {
        Some(n) => (
            mean_recall_over_subsamples(&queries, &gallery, &args.ks, n, args.seed, args.repeats),
            args.repeats,
        ),
        None => (recall_at_k(&queries, &gallery, &args.ks), 1),
    };
    let result = result.map_err(|e| crate::failure::Failure {
        code: retrieval_code(&e),
        error: e.into(),
    })?;
    match format {
        Format::Json => print_json(&json!({
            "command": "eval-retrieval",
            "n_queries": result.n_queries,
            "repeats": repeats,
            "seed": args.seed,
            "recall_at": result.recall_at,
        })),
        Format::Text => {
            println!("queries per run: {}  runs: {}", result.n_queries, repeats);
            for (k, v) in &result.recall_at {
                println!("Recall@{k:<6} {v:.3}");
            }
        }
    }
    Ok(())
}

pub fn stats(args: StatsArgs, format: Format) -> CmdResult {
    let manifest = read_manifest(&args.manifest)?;
    manifest
        .validate()
        .or_code_with(Code::Validation, || args.manifest.display().to_string())?;
    match format {
        Format::Json => print_json(&json!({
            "command": "stats",
            "format_version": manifest.format_version,
            "config": manifest.config,
            "stats": manifest.stats,
        })),
        Format::Text => print_stats(&manifest.stats),
    }
    Ok(())
}
