//! `causal`: command-line front end for the extraction pipeline.
//!
//! Every command prints a JSON result on stdout and a short summary on
//! stderr. Exit codes: 0 success, 1 validation, contract or usage errors,
//! 2 file-system errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use causal_core::annotation::validate_guidelines;
use causal_core::corpus::{ingest_fmea, ingest_slide_boxes, merge_corpora, read_corpus, write_corpus, ColumnMap, SourceKind};
use causal_core::dataset::{aggregate_corpus, load_annotations, make_folds, Dataset, FoldPlan};
use causal_core::encoder::{
    build_pmi_vocab, pretrain_mlm, Encoder, MaskStrategy, PmiVocabulary, PretrainConfig, TinyConfig, TINY,
};
use causal_core::error::{read_json, write_file, write_json, Error};
use causal_core::eval::{
    mst_fold_counts, render_comparison, render_report, run_cv_with, sst_fold_counts, ExperimentConfig, MetricsReport,
    ModelKind,
};
use causal_core::graph::{extract, split_merged_cell, Tagger};
use causal_core::iaa::{iaa_report, IaaText};
use causal_core::seed::DEFAULT_SEED;
use causal_core::tokenize::resolve_tokenizer;
use causal_core::Result;

#[derive(Parser)]
#[command(name = "causal", version, about = "Causal information extraction from FMEA tables and slides")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn FMEA tables and slide box exports into a corpus directory.
    Ingest(IngestArgs),
    /// Check annotations against the annotation guidelines.
    Validate(AnnotatorArgs),
    /// Inter-annotator agreement table.
    Iaa(IaaArgs),
    /// Aggregate annotations, tokenize, and draw the fold plan.
    BuildDataset(BuildArgs),
    /// Collect high-PMI n-grams for span masking.
    PmiVocab(PmiArgs),
    /// Masked-LM adaptation of an encoder on corpus text.
    Pretrain(PretrainArgs),
    /// Cross-validated training into a run directory.
    Train(TrainArgs),
    /// Score a saved model on a dataset.
    Evaluate(EvaluateArgs),
    /// Build the causal graph of a corpus.
    Extract(ExtractArgs),
    /// Propose splits of merged FMEA cells.
    SplitCells(ExtractArgs),
    /// Render tables from run directories.
    Report(ReportArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// FMEA table (CSV).
    #[arg(long)]
    fmea: Vec<PathBuf>,
    /// Failure mode, effect and cause columns, by header name or index.
    #[arg(long, default_value = "failure_mode,effect,cause")]
    columns: String,
    /// Slide text-box export (JSON).
    #[arg(long)]
    slides: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnnotatorArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Comma-separated annotator directories.
    #[arg(long, default_value = "a,b")]
    annotators: String,
}

#[derive(Args)]
struct IaaArgs {
    #[command(flatten)]
    corpus: AnnotatorArgs,
    #[arg(long, default_value = "ws")]
    tokenizer: String,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    corpus: AnnotatorArgs,
    #[arg(long, default_value = "ws")]
    tokenizer: String,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Output directory for `dataset.json` and `folds.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PmiArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Tokenizer id, or an encoder checkpoint whose tokenizer to use.
    #[arg(long, default_value = "ws")]
    tokenizer: String,
    #[arg(long, default_value_t = 5)]
    n_max: usize,
    #[arg(long, default_value_t = 10)]
    min_count: u64,
    #[arg(long, default_value_t = 800)]
    top_k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// JSON settings; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `tiny` or a checkpoint directory; overrides the config.
    #[arg(long)]
    encoder: Option<String>,
    /// `um` or `pmi`; overrides the config.
    #[arg(long)]
    masking: Option<MaskStrategy>,
    /// PMI vocabulary from `pmi-vocab`.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output checkpoint directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    encoder: Option<String>,
    /// Dataset directory or file.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    folds: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Saved model directory.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Restrict to the plan's test set.
    #[arg(long)]
    folds: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory to render on its own.
    #[arg(long)]
    run: Option<PathBuf>,
    /// SST and MST run directories to render side by side.
    #[arg(long, requires = "mst")]
    sst: Option<PathBuf>,
    #[arg(long, requires = "sst")]
    mst: Option<PathBuf>,
    /// Model name for the side-by-side block.
    #[arg(long, default_value = "model")]
    title: String,
}

struct Outcome {
    result: Value,
    summary: String,
    ok: bool,
}

impl Outcome {
    fn ok(result: Value, summary: impl Into<String>) -> Self {
        Self {
            result,
            summary: summary.into(),
            ok: true,
        }
    }
}

fn annotators(spec: &str) -> Result<(String, String)> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    match parts[..] {
        [a, b] => Ok((a.to_string(), b.to_string())),
        _ => Err(Error::Config(format!("expected two annotators, got {spec:?}"))),
    }
}

fn dataset_file(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("dataset.json")
    } else {
        p.to_path_buf()
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn ingest(a: IngestArgs) -> Result<Outcome> {
    if a.fmea.is_empty() && a.slides.is_empty() {
        return Err(Error::Config("give at least one --fmea or --slides input".into()));
    }
    let map = ColumnMap::parse(&a.columns)?;
    let mut parts = Vec::new();
    let mut skipped = 0;
    for f in &a.fmea {
        let got = ingest_fmea(f, &map)?;
        skipped += got.summary.skipped_empty;
        parts.push(got.units);
    }
    for f in &a.slides {
        let got = ingest_slide_boxes(f)?;
        skipped += got.summary.skipped_empty;
        parts.push(got.units);
    }
    let units = merge_corpora(parts)?;
    write_corpus(&a.out, &units)?;
    let fmea = units.iter().filter(|u| u.source_kind == SourceKind::Fmea).count();
    Ok(Outcome::ok(
        json!({ "out": a.out, "units": units.len(), "fmea": fmea, "slides": units.len() - fmea, "skipped_empty": skipped }),
        format!("{} texts written to {} ({skipped} empty skipped)", units.len(), a.out.display()),
    ))
}

fn validate(a: AnnotatorArgs) -> Result<Outcome> {
    let (x, y) = annotators(&a.annotators)?;
    let units = read_corpus(&a.corpus)?;
    let texts = load_annotations(&a.corpus, units, &[&x, &y])?;
    let mut found = Vec::new();
    let mut checked = 0;
    for t in &texts {
        for (who, set) in &t.annotations {
            checked += 1;
            for v in validate_guidelines(set, &t.unit.text) {
                found.push(json!({ "text_id": t.unit.id, "annotator": who, "violation": v }));
            }
        }
    }
    let ok = found.is_empty();
    Ok(Outcome {
        summary: format!("{checked} annotation files checked, {} violations", found.len()),
        result: json!({ "checked": checked, "violations": found }),
        ok,
    })
}

fn iaa(a: IaaArgs) -> Result<Outcome> {
    let (x, y) = annotators(&a.corpus.annotators)?;
    let tokenizer = resolve_tokenizer(&a.tokenizer)?;
    let units = read_corpus(&a.corpus.corpus)?;
    let texts = load_annotations(&a.corpus.corpus, units, &[&x, &y])?;
    let pairs: Vec<IaaText> = texts
        .iter()
        .map(|t| IaaText {
            text_id: &t.unit.id,
            text: &t.unit.text,
            source_kind: t.unit.source_kind,
            first: t.annotations.get(&x),
            second: t.annotations.get(&y),
        })
        .collect();
    let report = iaa_report(&pairs, tokenizer.as_ref());
    Ok(Outcome::ok(
        json!({ "report": report, "records": report.records(), "table": report.render() }),
        report.render(),
    ))
}

fn build_dataset(a: BuildArgs) -> Result<Outcome> {
    let (x, y) = annotators(&a.corpus.annotators)?;
    let tokenizer = resolve_tokenizer(&a.tokenizer)?;
    let units = read_corpus(&a.corpus.corpus)?;
    let texts = load_annotations(&a.corpus.corpus, units, &[&x, &y])?;
    let gold = aggregate_corpus(&texts, (&x, &y))?;
    let dataset = Dataset::build(&gold, tokenizer.as_ref())?;
    let items: Vec<(String, SourceKind)> = dataset
        .records
        .iter()
        .map(|r| (r.text_id.clone(), r.source_kind))
        .collect();
    let plan = make_folds(&items, a.seed, a.test_fraction)?;
    create_dir(&a.out)?;
    dataset.write(&a.out.join("dataset.json"))?;
    plan.write(&a.out.join("folds.json"))?;
    Ok(Outcome::ok(
        json!({ "records": dataset.records.len(), "test": plan.test_ids.len(), "folds": plan.folds.iter().map(Vec::len).collect::<Vec<_>>(), "seed": a.seed }),
        format!(
            "{} records, {} held out for testing, folds in {}",
            dataset.records.len(),
            plan.test_ids.len(),
            a.out.join("folds.json").display()
        ),
    ))
}

fn corpus_tokens(corpus: &Path, tokenizer: &str) -> Result<Vec<causal_core::tokenize::TokenizedText>> {
    let tokenizer = resolve_tokenizer(tokenizer)?;
    Ok(read_corpus(corpus)?
        .iter()
        .map(|u| tokenizer.tokenize_text(&u.text))
        .collect())
}

fn tokenizer_id(name: &str) -> Result<String> {
    let p = Path::new(name);
    if p.is_dir() {
        Ok(Encoder::<f32>::from_checkpoint(p)?.tokenizer_id)
    } else {
        Ok(name.to_string())
    }
}

fn pmi_vocab(a: PmiArgs) -> Result<Outcome> {
    let id = tokenizer_id(&a.tokenizer)?;
    let lower = |s: &str| s.to_lowercase();
    let seqs: Vec<Vec<String>> = corpus_tokens(&a.corpus, &id)?
        .iter()
        .map(|t| t.tokens.iter().map(|tok| lower(&tok.text)).collect())
        .collect();
    let vocab = build_pmi_vocab(&seqs, a.n_max, a.min_count, a.top_k)?;
    write_json(&a.out, &vocab)?;
    Ok(Outcome::ok(
        json!({ "out": a.out, "entries": vocab.entries.len() }),
        format!("{} n-grams written to {}", vocab.entries.len(), a.out.display()),
    ))
}

fn pretrain(a: PretrainArgs) -> Result<Outcome> {
    let mut config: PretrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => PretrainConfig {
            seed: DEFAULT_SEED,
            ..PretrainConfig::default()
        },
    };
    if let Some(e) = a.encoder {
        config.encoder.name = e;
    }
    if let Some(m) = a.masking {
        config.masking.strategy = m;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    let tokenizer = if config.encoder.name == TINY {
        "ws".to_string()
    } else {
        tokenizer_id(&config.encoder.name)?
    };
    let corpus = corpus_tokens(&a.corpus, &tokenizer)?;
    let mut encoder = if config.encoder.name == TINY {
        let words = corpus.iter().flat_map(|t| t.tokens.iter().map(|x| x.text.as_str()));
        Encoder::<f32>::tiny(words, TinyConfig::default(), config.seed)?
    } else {
        Encoder::<f32>::from_checkpoint(Path::new(&config.encoder.name))?
    };
    let vocab = match &a.vocab {
        Some(p) => {
            let mut v: PmiVocabulary = read_json(p)?;
            v.reindex();
            Some(v)
        }
        None => None,
    };
    let log = pretrain_mlm(&mut encoder, &corpus, &config, vocab.as_ref())?;
    encoder.save(&a.out)?;
    write_json(&a.out.join("pretrain_log.json"), &log)?;
    let last = log.epochs.last().map_or(0.0, |e| e.loss);
    Ok(Outcome::ok(
        json!({ "out": a.out, "mask_fraction": log.mask_fraction(), "final_loss": last, "epochs": log.epochs }),
        format!(
            "{} epochs, masked fraction {:.3}, final loss {last:.4}; checkpoint in {}",
            log.epochs.len(),
            log.mask_fraction(),
            a.out.display()
        ),
    ))
}

fn train(a: TrainArgs) -> Result<Outcome> {
    let mut config: ExperimentConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = a.model {
        config.model = m;
    }
    if let Some(e) = a.encoder {
        config.encoder = e;
    }
    if let Some(d) = a.dataset {
        config.folds = d.join("folds.json");
        config.dataset = dataset_file(&d);
    }
    if let Some(f) = a.folds {
        config.folds = f;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(n) = a.max_epochs {
        config.sst.train.max_epochs = n;
        config.mst.train.max_epochs = n;
    }
    let dataset = Dataset::read(&config.dataset)?;
    let plan = FoldPlan::read(&config.folds)?;
    create_dir(&a.out)?;
    let run = run_cv_with::<f32>(&config, &dataset, &plan, Some(&a.out))?;
    let table = render_report(&run.report)?;
    Ok(Outcome::ok(
        json!({ "out": a.out, "report": run.report, "summary": causal_core::eval::summary(&run.report) }),
        table,
    ))
}

fn evaluate(a: EvaluateArgs) -> Result<Outcome> {
    let model = Tagger::<f32>::load(&a.model)?;
    let dataset = Dataset::read(&dataset_file(&a.dataset))?;
    let records = match &a.folds {
        Some(p) => dataset.select(&FoldPlan::read(p)?.test_ids)?,
        None => dataset.records.clone(),
    };
    let (kind, counts) = match &model {
        Tagger::Sst(m) => (ModelKind::Sst, sst_fold_counts(m, &records)?),
        Tagger::Mst(m) => (ModelKind::Mst, mst_fold_counts(m, &records)?),
    };
    let report = MetricsReport::from_fold_counts(&a.model.display().to_string(), kind, &[counts])?;
    Ok(Outcome::ok(
        json!({ "records": report.records(), "report": report }),
        render_report(&report)?,
    ))
}

fn extract_cmd(a: ExtractArgs) -> Result<Outcome> {
    let model = Tagger::<f32>::load(&a.model)?;
    let units = read_corpus(&a.corpus)?;
    let graph = extract(&units, &model)?;
    write_json(&a.out, &graph)?;
    Ok(Outcome::ok(
        json!({ "out": a.out, "texts": graph.texts.len(), "nodes": graph.node_count(), "edges": graph.edge_count() }),
        format!(
            "{} texts, {} nodes, {} edges written to {}",
            graph.texts.len(),
            graph.node_count(),
            graph.edge_count(),
            a.out.display()
        ),
    ))
}

fn split_cells(a: ExtractArgs) -> Result<Outcome> {
    let Tagger::Mst(model) = Tagger::<f32>::load(&a.model)? else {
        return Err(Error::Config("cell splitting needs an MST model".into()));
    };
    let tokenizer = resolve_tokenizer(&model.encoder.tokenizer_id)?;
    let mut lines = String::new();
    let mut cells = 0;
    let mut proposals = 0;
    for unit in read_corpus(&a.corpus)?.iter().filter(|u| u.source_kind == SourceKind::Fmea) {
        cells += 1;
        let prediction = model.predict(&tokenizer.tokenize_text(&unit.text))?;
        if let Some(p) = split_merged_cell(unit, &prediction) {
            proposals += 1;
            lines.push_str(&serde_json::to_string(&p).map_err(|e| Error::json(unit.id.clone(), e))?);
            lines.push('\n');
        }
    }
    write_file(&a.out, lines)?;
    Ok(Outcome::ok(
        json!({ "out": a.out, "cells": cells, "proposals": proposals }),
        format!("{proposals} of {cells} FMEA cells have split proposals; see {}", a.out.display()),
    ))
}

fn load_report(run: &Path) -> Result<MetricsReport> {
    read_json(&run.join("report.json"))
}

fn report(a: ReportArgs) -> Result<Outcome> {
    let table = match (&a.run, &a.sst, &a.mst) {
        (Some(run), None, None) => render_report(&load_report(run)?)?,
        (None, Some(s), Some(m)) => render_comparison(&a.title, &load_report(s)?, &load_report(m)?)?,
        _ => return Err(Error::Config("give either --run, or both --sst and --mst".into())),
    };
    Ok(Outcome::ok(json!({ "table": table }), table))
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Validate(a) => validate(a),
        Command::Iaa(a) => iaa(a),
        Command::BuildDataset(a) => build_dataset(a),
        Command::PmiVocab(a) => pmi_vocab(a),
        Command::Pretrain(a) => pretrain(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Extract(a) => extract_cmd(a),
        Command::SplitCells(a) => split_cells(a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(out) => {
            println!("{}", serde_json::to_string_pretty(&out.result).expect("json value"));
            eprintln!("{}", out.summary.trim_end());
            if out.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
