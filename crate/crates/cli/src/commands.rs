use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use ftmesh::corpus::{
    build_corpus as run_build, corpus_stats, emit_record, read_records, select_complete, stratified_split,
    ArticleRecord, BuildOptions, Split, SplitSpec,
};
use ftmesh::eval::{apply_thresholds, label_based, top_k, tune_thresholds, LabelSet, MetricsReport, ThresholdVector, TuneOptions};
use ftmesh::mesh::{MeshVocabulary, WordEmbeddings};
use ftmesh::model::{self, channel_texts, Lexicon, Model};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{Manifest, Staging};
use crate::run::{parse_ratios, require_inputs, RunConfig};
use crate::{BuildCorpusArgs, EvaluateArgs, PredictArgs, SplitArgs, StatsArgs, TrainArgs, TuneArgs};

pub const RECORDS: &str = "records.jsonl";
pub const STATS: &str = "stats.json";
pub const MODEL: &str = "model.ckpt";
pub const TRAIN_REPORT: &str = "train_report.json";
pub const PREDICTIONS: &str = "predictions.jsonl";
pub const SCORES: &str = "scores.jsonl";
pub const THRESHOLDS: &str = "thresholds.json";
pub const METRICS: &str = "metrics.json";

#[derive(Debug, Serialize, Deserialize)]
struct ScoreLine {
    pmid: String,
    scores: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictionLine {
    pmid: String,
    top_k: Vec<(String, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ThresholdFile {
    labels: Vec<String>,
    thresholds: Vec<f64>,
}

/// XML inputs in `dir`, sorted by name. Plain and gzipped files are accepted.
fn xml_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.with_context(|| format!("reading directory {}", dir.display()))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if path.is_file() && (name.ends_with(".xml") || name.ends_with(".gz")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn load_records(path: &Path) -> anyhow::Result<Vec<ArticleRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_records(BufReader::new(file)).with_context(|| format!("reading records from {}", path.display()))
}

fn load_vocab(path: &Path) -> anyhow::Result<MeshVocabulary> {
    MeshVocabulary::load(path).with_context(|| format!("reading descriptors from {}", path.display()))
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn read_scores(path: &Path, labels: usize) -> anyhow::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let lines: Vec<ScoreLine> = read_lines(path)?;
    ensure!(!lines.is_empty(), "{} holds no scored documents", path.display());
    let mut pmids = Vec::with_capacity(lines.len());
    let mut scores = Vec::with_capacity(lines.len());
    for line in lines {
        ensure!(
            line.scores.len() == labels,
            "{}: document {} has {} scores, the descriptor table has {labels} labels",
            path.display(),
            line.pmid,
            line.scores.len()
        );
        pmids.push(line.pmid);
        scores.push(line.scores);
    }
    Ok((pmids, scores))
}

/// Gold label sets for `pmids`, in that order.
fn gold_sets(path: &Path, pmids: &[String], vocab: &MeshVocabulary) -> anyhow::Result<Vec<LabelSet>> {
    let records = load_records(path)?;
    let by_pmid: HashMap<&str, &ArticleRecord> = records.iter().map(|r| (r.pmid.as_str(), r)).collect();
    pmids
        .iter()
        .map(|p| {
            let r = by_pmid
                .get(p.as_str())
                .with_context(|| format!("PMID {p} has no gold record in {}", path.display()))?;
            Ok(r.mesh.keys().filter_map(|ui| vocab.ordinal(ui)).collect())
        })
        .collect()
}

fn read_thresholds(path: &Path, vocab: &MeshVocabulary) -> anyhow::Result<ThresholdVector> {
    let text = std::fs::read_to_string(path).with_context(|| format!("opening {}", path.display()))?;
    let file: ThresholdFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    ensure!(
        file.labels.iter().map(String::as_str).eq(vocab.uis()),
        "{}: label list does not match the descriptor table",
        path.display()
    );
    Ok(ThresholdVector::new(file.thresholds)?)
}

fn label_names(set: &LabelSet, vocab: &MeshVocabulary) -> Vec<String> {
    set.iter().map(|&l| vocab.get(l).expect("ordinal in range").ui.clone()).collect()
}

fn print_table(rows: &[(String, f64)]) {
    let mut out = std::io::stdout().lock();
    for (name, value) in rows {
        let _ = writeln!(out, "{name:<8} {value:.4}");
    }
}

pub fn build_corpus(run: &RunConfig, a: BuildCorpusArgs) -> anyhow::Result<()> {
    require_inputs([a.bioc_dir.as_path(), a.medline_dir.as_path()])?;
    let bioc = xml_files(&a.bioc_dir)?;
    let medline = xml_files(&a.medline_dir)?;
    let mut staging = Staging::new(&run.output_dir)?;
    let mut options = BuildOptions::new(bioc.clone(), medline.clone(), staging.path(RECORDS));
    options.workers = run.workers;
    if let Some(mb) = a.memory_budget_mb {
        options.memory_budget_bytes = mb << 20;
    }
    if let Some(p) = a.partitions {
        options.partitions = p;
    }
    let settings = json!({
        "memory_budget_bytes": options.memory_budget_bytes,
        "partitions": options.partitions,
    });
    let mut manifest = Manifest::new("build-corpus", run.seed(), settings)?;
    for p in bioc.iter().chain(&medline) {
        manifest.input(p)?;
    }
    let report = run_build(&options)?;
    eprintln!(
        "parsed {} articles and {} citations; wrote {} records",
        report.articles_parsed, report.citations_parsed, report.records_written
    );
    manifest.summary = serde_json::to_value(&report)?;
    staging.commit(manifest)
}

pub fn stats(run: &RunConfig, a: StatsArgs) -> anyhow::Result<()> {
    require_inputs([a.records.as_path()])?;
    let records = load_records(&a.records)?;
    let stats = corpus_stats(&records);
    let mut manifest = Manifest::new("stats", run.seed(), json!({}))?;
    manifest.input(&a.records)?;
    manifest.summary = json!({ "documents": stats.documents });
    let mut staging = Staging::new(&run.output_dir)?;
    staging.write_json(STATS, &stats)?;
    staging.commit(manifest)?;
    let rows: Vec<(String, f64)> = stats
        .sections
        .iter()
        .map(|s| (format!("{} ({})", s.section, s.articles), s.average_length))
        .collect();
    print_table(&rows);
    Ok(())
}

pub fn split(run: &RunConfig, a: SplitArgs) -> anyhow::Result<()> {
    require_inputs([a.records.as_path()])?;
    let ratios = match &a.ratios {
        Some(r) => parse_ratios(r)?,
        None => run.split_ratios,
    };
    let spec = SplitSpec::new(ratios, run.seed())?;
    let mut records = load_records(&a.records)?;
    if a.complete_only {
        records = select_complete(records);
    }
    let split = stratified_split(records, &spec)?;

    let mut per_year: BTreeMap<i32, [usize; 3]> = BTreeMap::new();
    for (i, (_, part)) in split.parts().iter().enumerate() {
        for r in part.iter() {
            per_year.entry(r.year).or_default()[i] += 1;
        }
    }
    let mut manifest = Manifest::new("split", run.seed(), json!({ "ratios": ratios, "complete_only": a.complete_only }))?;
    manifest.input(&a.records)?;
    manifest.summary = json!({
        "train": split.train.len(),
        "validation": split.validation.len(),
        "test": split.test.len(),
        "per_year": per_year,
    });
    let mut staging = Staging::new(&run.output_dir)?;
    for (name, part) in split.parts() {
        staging.write(&format!("{name}.pmids"), Split::manifest(part).as_bytes())?;
        staging.write_with(&format!("{name}.jsonl"), |out| {
            for r in part {
                writeln!(out, "{}", emit_record(r))?;
            }
            Ok(())
        })?;
    }
    staging.commit(manifest)
}

pub fn train(run: &RunConfig, a: TrainArgs) -> anyhow::Result<()> {
    let mut inputs = vec![a.train.as_path(), a.descriptors.as_path()];
    inputs.extend(a.validation.as_deref());
    inputs.extend(a.embeddings.as_deref());
    require_inputs(inputs.iter().copied())?;

    let config = run.model.clone();
    let vocab = load_vocab(&a.descriptors)?;
    let embeddings = a
        .embeddings
        .as_deref()
        .map(|p| WordEmbeddings::load(p).with_context(|| format!("reading embeddings from {}", p.display())))
        .transpose()?;
    let train_records = load_records(&a.train)?;
    let validation_records = match &a.validation {
        Some(p) => load_records(p)?,
        None => Vec::new(),
    };
    let texts: Vec<String> = channel_texts(&train_records, &config).collect();
    let lexicon = Lexicon::build(texts.iter().map(String::as_str), config.min_word_freq);
    let mut model = Model::new(config.clone(), lexicon, &vocab, embeddings.as_ref())?;
    let encode = |records: &[ArticleRecord]| -> Vec<_> { records.iter().map(|r| model.encode(r, &vocab)).collect() };
    let train_docs = encode(&train_records);
    let validation_docs = encode(&validation_records);
    eprintln!(
        "training on {} documents ({} validation), {} labels, {} parameters",
        train_docs.len(),
        validation_docs.len(),
        vocab.len(),
        model.params.count()
    );
    let report = model::train(&mut model, &train_docs, &validation_docs)?;

    let mut manifest = Manifest::new("train", config.seed, &config)?;
    for p in inputs {
        manifest.input(p)?;
    }
    manifest.summary = json!({
        "epochs_run": report.epochs.len(),
        "best_epoch": report.best_epoch,
        "best_validation_micro_f": report.best_validation_micro_f,
        "stopped_early": report.stopped_early,
    });
    let mut staging = Staging::new(&run.output_dir)?;
    let mut bytes = Vec::new();
    model.write_to(&mut bytes)?;
    staging.write(MODEL, &bytes)?;
    staging.write_json(TRAIN_REPORT, &report)?;
    staging.commit(manifest)
}

pub fn predict(run: &RunConfig, a: PredictArgs) -> anyhow::Result<()> {
    let mut inputs = vec![a.model.as_path(), a.records.as_path(), a.descriptors.as_path()];
    inputs.extend(a.thresholds.as_deref());
    require_inputs(inputs.iter().copied())?;

    let model = Model::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let vocab = load_vocab(&a.descriptors)?;
    model.check_vocabulary(&vocab)?;
    let thresholds = a.thresholds.as_deref().map(|p| read_thresholds(p, &vocab)).transpose()?;
    let records = load_records(&a.records)?;
    let docs: Vec<_> = records.iter().map(|r| model.encode(r, &vocab)).collect();
    let scores = model.predict(&docs)?;
    let k = a.top_k.unwrap_or(run.top_k);
    let sets = thresholds.as_ref().map(|t| apply_thresholds(&scores, t)).transpose()?;

    let mut manifest = Manifest::new("predict", model.config.seed, json!({ "top_k": k, "full_scores": a.full_scores }))?;
    for p in inputs {
        manifest.input(p)?;
    }
    manifest.summary = json!({ "documents": docs.len(), "labels": vocab.len() });
    let mut staging = Staging::new(&run.output_dir)?;
    staging.write_with(PREDICTIONS, |out| {
        for (i, (doc, row)) in docs.iter().zip(&scores).enumerate() {
            let line = PredictionLine {
                pmid: doc.pmid.clone(),
                top_k: top_k(row, k).into_iter().map(|l| (model.label_uis[l].clone(), row[l])).collect(),
                labels: sets.as_ref().map(|s| label_names(&s[i], &vocab)),
            };
            serde_json::to_writer(&mut *out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    })?;
    if a.full_scores {
        staging.write_with(SCORES, |out| {
            for (doc, row) in docs.iter().zip(&scores) {
                serde_json::to_writer(&mut *out, &json!({ "pmid": doc.pmid, "scores": row }))?;
                out.write_all(b"\n")?;
            }
            Ok(())
        })?;
    }
    staging.commit(manifest)
}

pub fn tune(run: &RunConfig, a: TuneArgs) -> anyhow::Result<()> {
    require_inputs([a.scores.as_path(), a.gold.as_path(), a.descriptors.as_path()])?;
    let vocab = load_vocab(&a.descriptors)?;
    let (pmids, scores) = read_scores(&a.scores, vocab.len())?;
    let gold = gold_sets(&a.gold, &pmids, &vocab)?;
    let options = TuneOptions {
        max_sweeps: a.max_sweeps.unwrap_or(run.max_sweeps),
        ..TuneOptions::default()
    };
    let tuned = tune_thresholds(&scores, &gold, options)?;
    let micro_f = |t: &ThresholdVector| -> anyhow::Result<f64> {
        let pred = apply_thresholds(&scores, t)?;
        Ok(label_based(&gold, &pred, vocab.len())?.micro_f1)
    };
    let before = micro_f(&ThresholdVector::uniform(vocab.len(), options.fallback))?;
    let after = micro_f(&tuned)?;
    eprintln!("micro-F {before:.4} at a uniform {} threshold, {after:.4} tuned", options.fallback);

    let mut manifest = Manifest::new(
        "tune-thresholds",
        run.seed(),
        json!({ "max_sweeps": options.max_sweeps, "fallback": options.fallback }),
    )?;
    for p in [&a.scores, &a.gold, &a.descriptors] {
        manifest.input(p)?;
    }
    manifest.summary = json!({ "documents": pmids.len(), "micro_f_uniform": before, "micro_f_tuned": after });
    let file = ThresholdFile {
        labels: vocab.uis().map(String::from).collect(),
        thresholds: tuned.values().to_vec(),
    };
    let mut staging = Staging::new(&run.output_dir)?;
    staging.write_json(THRESHOLDS, &file)?;
    staging.commit(manifest)
}

pub fn evaluate(run: &RunConfig, a: EvaluateArgs) -> anyhow::Result<()> {
    let mut inputs = vec![a.gold.as_path(), a.descriptors.as_path()];
    inputs.extend(a.scores.as_deref());
    inputs.extend(a.predictions.as_deref());
    inputs.extend(a.thresholds.as_deref());
    require_inputs(inputs.iter().copied())?;
    let vocab = load_vocab(&a.descriptors)?;
    let labels = vocab.len();

    let report = match (&a.scores, &a.predictions) {
        (Some(path), None) => {
            let (pmids, scores) = read_scores(path, labels)?;
            let gold = gold_sets(&a.gold, &pmids, &vocab)?;
            let thresholds = match &a.thresholds {
                Some(p) => read_thresholds(p, &vocab)?,
                None => ThresholdVector::uniform(labels, 0.5),
            };
            let pred = apply_thresholds(&scores, &thresholds)?;
            MetricsReport::compute(&gold, &pred, Some(&scores), labels)?
        }
        (None, Some(path)) => {
            let lines: Vec<PredictionLine> = read_lines(path)?;
            let mut pmids = Vec::with_capacity(lines.len());
            let mut pred = Vec::with_capacity(lines.len());
            for line in lines {
                let Some(uis) = line.labels else {
                    bail!("{}: document {} has no label set; predict with --thresholds", path.display(), line.pmid);
                };
                let set = uis
                    .iter()
                    .map(|ui| vocab.ordinal(ui).with_context(|| format!("unknown descriptor {ui} in {}", path.display())))
                    .collect::<anyhow::Result<LabelSet>>()?;
                pmids.push(line.pmid);
                pred.push(set);
            }
            let gold = gold_sets(&a.gold, &pmids, &vocab)?;
            MetricsReport::compute(&gold, &pred, None, labels)?
        }
        _ => bail!("give exactly one of --scores and --predictions"),
    };

    let mut manifest = Manifest::new("evaluate", run.seed(), json!({ "thresholds": a.thresholds.is_some() }))?;
    for p in inputs {
        manifest.input(p)?;
    }
    manifest.summary = json!({ "documents": report.documents });
    let mut staging = Staging::new(&run.output_dir)?;
    staging.write_json(METRICS, &report)?;
    staging.commit(manifest)?;
    print_table(&report.entries());
    Ok(())
}
