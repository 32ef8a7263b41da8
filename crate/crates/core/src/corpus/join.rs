use std::collections::{BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    emit_record, open_input, parse_record, pmid_sort_key, ArticleRecord, BiocReader, CitationMetadata,
    CorpusError, FullTextSections, IndexingMode, MedlineReader,
};

/// Why a citation is kept or dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterOutcome {
    Keep,
    Language,
    IndexingMode,
    MissingYear,
}

impl FilterOutcome {
    pub fn classify(c: &CitationMetadata) -> Self {
        if c.language != "eng" {
            FilterOutcome::Language
        } else if c.indexing_mode != IndexingMode::Human {
            FilterOutcome::IndexingMode
        } else if c.year.is_none() {
            FilterOutcome::MissingYear
        } else {
            FilterOutcome::Keep
        }
    }
}

/// English, human-indexed citations only.
pub fn filter_citation(c: &CitationMetadata) -> bool {
    c.language == "eng" && c.indexing_mode == IndexingMode::Human
}

/// Inner join on PMID, ascending numeric PMID order. Citations without a year
/// cannot form a record and are skipped.
pub fn join_records(
    sections: HashMap<String, FullTextSections>,
    mut citations: HashMap<String, CitationMetadata>,
) -> Vec<ArticleRecord> {
    let mut out: Vec<ArticleRecord> = sections
        .into_iter()
        .filter_map(|(pmid, text)| citations.remove(&pmid).and_then(|c| ArticleRecord::from_parts(text, c)))
        .collect();
    out.sort_by(|a, b| pmid_sort_key(&a.pmid).cmp(&pmid_sort_key(&b.pmid)));
    out
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub bioc_inputs: Vec<PathBuf>,
    pub medline_inputs: Vec<PathBuf>,
    pub output: PathBuf,
    /// Parser threads; 0 lets rayon decide.
    pub workers: usize,
    /// Inputs larger than this in total are joined through on-disk partitions.
    pub memory_budget_bytes: u64,
    pub partitions: usize,
}

impl BuildOptions {
    pub fn new(bioc_inputs: Vec<PathBuf>, medline_inputs: Vec<PathBuf>, output: PathBuf) -> Self {
        BuildOptions {
            bioc_inputs,
            medline_inputs,
            output,
            workers: 0,
            memory_budget_bytes: 2 << 30,
            partitions: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JoinStrategy {
    Memory,
    Disk,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub join_strategy: Option<JoinStrategy>,
    pub articles_parsed: u64,
    pub articles_rejected: u64,
    pub duplicate_articles: u64,
    pub citations_parsed: u64,
    pub citations_rejected: u64,
    pub duplicate_citations: u64,
    pub dropped_language: u64,
    pub dropped_indexing_mode: u64,
    pub dropped_missing_year: u64,
    pub records_written: u64,
}

impl BuildReport {
    fn absorb(&mut self, other: &BuildReport) {
        self.articles_parsed += other.articles_parsed;
        self.articles_rejected += other.articles_rejected;
        self.duplicate_articles += other.duplicate_articles;
        self.citations_parsed += other.citations_parsed;
        self.citations_rejected += other.citations_rejected;
        self.duplicate_citations += other.duplicate_citations;
        self.dropped_language += other.dropped_language;
        self.dropped_indexing_mode += other.dropped_indexing_mode;
        self.dropped_missing_year += other.dropped_missing_year;
        self.records_written += other.records_written;
    }
}

/// Parsed items of one input file plus per-document schema rejections.
struct FileItems<T> {
    items: Vec<T>,
    rejected: u64,
}

fn parse_file<T, I>(path: &Path, reader: impl FnOnce(Box<dyn BufRead + Send>) -> I) -> Result<FileItems<T>, CorpusError>
where
    I: Iterator<Item = Result<T, CorpusError>>,
{
    let mut out = FileItems {
        items: Vec::new(),
        rejected: 0,
    };
    for item in reader(open_input(path)?) {
        match item {
            Ok(v) => out.items.push(v),
            Err(CorpusError::Schema(_)) => out.rejected += 1,
            Err(e) => return Err(e.in_file(path)),
        }
    }
    Ok(out)
}

fn parse_bioc_file(path: &Path) -> Result<FileItems<FullTextSections>, CorpusError> {
    parse_file(path, BiocReader::new)
}

fn parse_medline_file(path: &Path) -> Result<FileItems<CitationMetadata>, CorpusError> {
    parse_file(path, MedlineReader::new)
}

/// Joins one partition. Items arrive in input-file order; for a repeated PMID
/// the last occurrence wins (later baseline files carry revisions).
fn reduce(
    articles: impl IntoIterator<Item = FullTextSections>,
    citations: impl IntoIterator<Item = CitationMetadata>,
    report: &mut BuildReport,
) -> Vec<ArticleRecord> {
    let mut by_pmid: HashMap<String, CitationMetadata> = HashMap::new();
    for c in citations {
        if by_pmid.insert(c.pmid.clone(), c).is_some() {
            report.duplicate_citations += 1;
        }
    }
    by_pmid.retain(|_, c| match FilterOutcome::classify(c) {
        FilterOutcome::Keep => true,
        FilterOutcome::Language => {
            report.dropped_language += 1;
            false
        }
        FilterOutcome::IndexingMode => {
            report.dropped_indexing_mode += 1;
            false
        }
        FilterOutcome::MissingYear => {
            report.dropped_missing_year += 1;
            false
        }
    });
    let mut texts: HashMap<String, FullTextSections> = HashMap::new();
    for a in articles {
        if texts.insert(a.pmid.clone(), a).is_some() {
            report.duplicate_articles += 1;
        }
    }
    join_records(texts, by_pmid)
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool, CorpusError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CorpusError::Io(std::io::Error::other(e)))
}

fn total_bytes(paths: &[PathBuf]) -> Result<u64, CorpusError> {
    paths
        .iter()
        .map(|p| Ok(std::fs::metadata(p).map_err(|e| CorpusError::from(e).in_file(p))?.len()))
        .sum()
}

fn partition_of(pmid: &str, partitions: usize) -> usize {
    match pmid_sort_key(pmid) {
        (0, n, _) => (n % partitions as u64) as usize,
        _ => pmid.bytes().fold(0usize, |h, b| h.wrapping_mul(31).wrapping_add(b as usize)) % partitions,
    }
}

/// Parses, filters and joins the inputs and writes newline-delimited records
/// to `options.output` atomically. Output bytes do not depend on the worker
/// count or the join strategy.
pub fn build_corpus(options: &BuildOptions) -> Result<BuildReport, CorpusError> {
    let pool = thread_pool(options.workers)?;
    let bytes = total_bytes(&options.bioc_inputs)? + total_bytes(&options.medline_inputs)?;
    let dir = match options.output.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut out = tempfile::NamedTempFile::new_in(&dir)?;
    let report = {
        let mut writer = BufWriter::new(out.as_file_mut());
        let report = if bytes <= options.memory_budget_bytes {
            build_in_memory(options, &pool, &mut writer)?
        } else {
            build_on_disk(options, &pool, &mut writer)?
        };
        writer.flush()?;
        report
    };
    out.as_file().sync_all()?;
    out.persist(&options.output).map_err(|e| CorpusError::Io(e.error))?;
    Ok(report)
}

fn build_in_memory(options: &BuildOptions, pool: &rayon::ThreadPool, out: &mut impl Write) -> Result<BuildReport, CorpusError> {
    let (bioc, medline) = pool.install(|| {
        let bioc: Result<Vec<_>, _> = options.bioc_inputs.par_iter().map(|p| parse_bioc_file(p)).collect();
        let medline: Result<Vec<_>, _> = options.medline_inputs.par_iter().map(|p| parse_medline_file(p)).collect();
        (bioc, medline)
    });
    let (bioc, medline) = (bioc?, medline?);
    let mut report = BuildReport {
        join_strategy: Some(JoinStrategy::Memory),
        ..Default::default()
    };
    for f in &bioc {
        report.articles_parsed += f.items.len() as u64;
        report.articles_rejected += f.rejected;
    }
    for f in &medline {
        report.citations_parsed += f.items.len() as u64;
        report.citations_rejected += f.rejected;
    }
    let records = reduce(
        bioc.into_iter().flat_map(|f| f.items),
        medline.into_iter().flat_map(|f| f.items),
        &mut report,
    );
    for r in &records {
        writeln!(out, "{}", emit_record(r))?;
    }
    report.records_written = records.len() as u64;
    Ok(report)
}

/// Writes each parsed item to the bucket file of its PMID partition.
fn scatter<T: Serialize>(items: &[T], pmid: impl Fn(&T) -> &str, dir: &Path, tag: &str, partitions: usize) -> Result<(), CorpusError> {
    let mut writers: Vec<Option<BufWriter<File>>> = (0..partitions).map(|_| None).collect();
    for item in items {
        let p = partition_of(pmid(item), partitions);
        let w = match &mut writers[p] {
            Some(w) => w,
            slot @ None => slot.insert(BufWriter::new(File::create(dir.join(format!("{tag}.{p}")))?)),
        };
        serde_json::to_writer(&mut *w, item)?;
        w.write_all(b"\n")?;
    }
    for w in writers.into_iter().flatten() {
        w.into_inner().map_err(|e| CorpusError::Io(e.into_error()))?.sync_all()?;
    }
    Ok(())
}

fn gather<T: DeserializeOwned>(dir: &Path, tags: &[String], partition: usize) -> Result<Vec<T>, CorpusError> {
    let mut out = Vec::new();
    for tag in tags {
        let path = dir.join(format!("{tag}.{partition}"));
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
            Err(e) => return Err(e.into()),
        };
        for line in BufReader::new(file).lines() {
            out.push(serde_json::from_str(&line?)?);
        }
    }
    Ok(out)
}

fn build_on_disk(options: &BuildOptions, pool: &rayon::ThreadPool, out: &mut impl Write) -> Result<BuildReport, CorpusError> {
    let partitions = options.partitions.max(1);
    let scratch = tempfile::tempdir()?;
    let dir = scratch.path();
    let bioc_tags: Vec<String> = (0..options.bioc_inputs.len()).map(|i| format!("bioc{i}")).collect();
    let medline_tags: Vec<String> = (0..options.medline_inputs.len()).map(|i| format!("medline{i}")).collect();

    // Map: parse each file and scatter its items; memory is bounded by one file per worker.
    let scattered: Result<Vec<BuildReport>, CorpusError> = pool.install(|| {
        let bioc = options.bioc_inputs.par_iter().zip(&bioc_tags).map(|(path, tag)| {
            let f = parse_bioc_file(path)?;
            scatter(&f.items, |a| &a.pmid, dir, tag, partitions)?;
            Ok(BuildReport {
                articles_parsed: f.items.len() as u64,
                articles_rejected: f.rejected,
                ..Default::default()
            })
        });
        let medline = options.medline_inputs.par_iter().zip(&medline_tags).map(|(path, tag)| {
            let f = parse_medline_file(path)?;
            scatter(&f.items, |c| &c.pmid, dir, tag, partitions)?;
            Ok(BuildReport {
                citations_parsed: f.items.len() as u64,
                citations_rejected: f.rejected,
                ..Default::default()
            })
        });
        bioc.chain(medline).collect()
    });
    let mut report = BuildReport {
        join_strategy: Some(JoinStrategy::Disk),
        ..Default::default()
    };
    for r in scattered? {
        report.absorb(&r);
    }

    // Reduce: join each partition and write its sorted records to a run file.
    let reduced: Result<Vec<BuildReport>, CorpusError> = pool.install(|| {
        (0..partitions)
            .into_par_iter()
            .map(|p| {
                let mut part = BuildReport::default();
                let articles: Vec<FullTextSections> = gather(dir, &bioc_tags, p)?;
                let citations: Vec<CitationMetadata> = gather(dir, &medline_tags, p)?;
                let records = reduce(articles, citations, &mut part);
                let mut w = BufWriter::new(File::create(dir.join(format!("run.{p}")))?);
                for r in &records {
                    writeln!(w, "{}", emit_record(r))?;
                }
                w.flush()?;
                part.records_written = records.len() as u64;
                Ok(part)
            })
            .collect()
    });
    for r in reduced? {
        report.absorb(&r);
    }

    // Merge: runs are each sorted by PMID, so a k-way merge restores global order.
    let mut runs: Vec<std::io::Lines<BufReader<File>>> = (0..partitions)
        .map(|p| File::open(dir.join(format!("run.{p}"))).map(|f| BufReader::new(f).lines()))
        .collect::<Result<_, _>>()?;
    let mut heap = BinaryHeap::new();
    let push = |heap: &mut BinaryHeap<_>, runs: &mut Vec<std::io::Lines<BufReader<File>>>, p: usize| -> Result<(), CorpusError> {
        if let Some(line) = runs[p].next() {
            let line = line?;
            let pmid = parse_record(&line)?.pmid;
            let (class, n, s) = pmid_sort_key(&pmid);
            heap.push(Reverse((class, n, s.to_string(), p, line)));
        }
        Ok(())
    };
    for p in 0..partitions {
        push(&mut heap, &mut runs, p)?;
    }
    while let Some(Reverse((_, _, _, p, line))) = heap.pop() {
        writeln!(out, "{line}")?;
        push(&mut heap, &mut runs, p)?;
    }
    Ok(report)
}
