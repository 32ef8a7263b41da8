//! Corpus construction: BioC full text and MEDLINE citations are parsed,
//! filtered, joined by PMID and written as one JSON record per article.

mod bioc;
mod join;
mod medline;
mod record;
mod split;
mod stats;
mod xml;

pub use bioc::{parse_bioc_article, parse_bioc_collection, BiocReader};
pub use join::{build_corpus, filter_citation, join_records, BuildOptions, BuildReport, FilterOutcome, JoinStrategy};
pub use medline::{parse_medline_citation, parse_medline_set, MedlineReader};
pub use record::{emit_record, parse_record, read_records, ArticleRecord, NONE_MARKER};
pub use split::{select_complete, stratified_split, Split, SplitSpec};
pub use stats::{corpus_stats, SectionStat, SectionStats};

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed XML at byte {offset}: {message}")]
    Xml { offset: u64, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid record: {0}")]
    Record(String),
    #[error("invalid split ratios {0:?}")]
    SplitRatios([f64; 3]),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<CorpusError>,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CorpusError {
    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        CorpusError::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}

/// The eight normalized text sections of an article.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Section {
    Title,
    Abstract,
    Intro,
    Methods,
    Results,
    Discuss,
    FigCaptions,
    TableCaptions,
}

impl Section {
    pub const ALL: [Section; 8] = [
        Section::Title,
        Section::Abstract,
        Section::Intro,
        Section::Methods,
        Section::Results,
        Section::Discuss,
        Section::FigCaptions,
        Section::TableCaptions,
    ];

    /// Sections every article must have to enter model training.
    pub const CORE: [Section; 6] = [
        Section::Title,
        Section::Abstract,
        Section::Intro,
        Section::Methods,
        Section::Results,
        Section::Discuss,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Key used in the JSON record.
    pub fn json_key(self) -> &'static str {
        match self {
            Section::Title => "TITLE",
            Section::Abstract => "ABSTRACT",
            Section::Intro => "INTRO",
            Section::Methods => "METHODS",
            Section::Results => "RESULTS",
            Section::Discuss => "DISCUSS",
            Section::FigCaptions => "FIG_CAPTIONS",
            Section::TableCaptions => "TABLE_CAPTIONS",
        }
    }

    /// Row label used in the statistics report.
    pub fn display_name(self) -> &'static str {
        match self {
            Section::Title => "Title",
            Section::Abstract => "Abstract",
            Section::Intro => "Introduction",
            Section::Methods => "Methods",
            Section::Results => "Results",
            Section::Discuss => "Discuss",
            Section::FigCaptions => "Figure Captions",
            Section::TableCaptions => "Table Captions",
        }
    }

    /// Maps a BioC `section_type` infon. Unlisted types (REF, ACK, SUPPL, ...) are dropped.
    pub fn from_bioc_type(section_type: &str) -> Option<Section> {
        match section_type.trim() {
            "TITLE" => Some(Section::Title),
            "ABSTRACT" => Some(Section::Abstract),
            "INTRO" => Some(Section::Intro),
            "METHODS" => Some(Section::Methods),
            "RESULTS" => Some(Section::Results),
            "DISCUSS" => Some(Section::Discuss),
            "FIG" => Some(Section::FigCaptions),
            "TABLE" => Some(Section::TableCaptions),
            _ => None,
        }
    }
}

/// Optional normalized text per [`Section`]. `None` means the article lacks it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionTexts([Option<String>; 8]);

impl SectionTexts {
    pub fn get(&self, s: Section) -> Option<&str> {
        self.0[s.index()].as_deref()
    }

    pub fn set(&mut self, s: Section, text: Option<String>) {
        self.0[s.index()] = text;
    }

    pub fn has(&self, s: Section) -> bool {
        self.0[s.index()].is_some()
    }

    /// Appends a passage with a single separating space.
    pub(crate) fn append(&mut self, s: Section, passage: &str) {
        if passage.is_empty() {
            return;
        }
        match &mut self.0[s.index()] {
            Some(existing) => {
                existing.push(' ');
                existing.push_str(passage);
            }
            slot @ None => *slot = Some(passage.to_string()),
        }
    }
}

/// Sections parsed from one BioC document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FullTextSections {
    pub pmid: String,
    pub sections: SectionTexts,
}

impl FullTextSections {
    pub fn get(&self, s: Section) -> Option<&str> {
        self.sections.get(s)
    }
}

/// How MeSH terms were assigned to a citation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndexingMode {
    Human,
    Curated,
    Auto,
}

/// Metadata extracted from one MEDLINE citation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationMetadata {
    pub pmid: String,
    pub language: String,
    pub indexing_mode: IndexingMode,
    pub journal: String,
    /// Publication year; `None` when absent or outside `[1800, current year]`.
    pub year: Option<i32>,
    pub doi: Option<String>,
    /// `"ForeName,LastName"` per person, or the collective name.
    pub authors: Vec<String>,
    /// Descriptor UI → descriptor name.
    pub mesh: BTreeMap<String, String>,
    /// Empty when the citation has no chemical list.
    pub chemicals: Vec<String>,
    /// Empty when the citation has no supplementary concepts.
    pub suppl_mesh: Vec<String>,
}

/// Opens a file for reading, decompressing it when it starts with the gzip magic.
pub fn open_input(path: &Path) -> Result<Box<dyn BufRead + Send>, CorpusError> {
    let mut file = BufReader::new(File::open(path).map_err(|e| CorpusError::from(e).in_file(path))?);
    let gz = file.fill_buf().map_err(|e| CorpusError::from(e).in_file(path))?.starts_with(&[0x1f, 0x8b]);
    Ok(if gz {
        Box::new(BufReader::new(MultiGzDecoder::new(file)))
    } else {
        Box::new(file)
    })
}

/// Reads a whole input (gzip-aware) into a string.
pub fn read_input(path: &Path) -> Result<String, CorpusError> {
    let mut out = String::new();
    open_input(path)?
        .read_to_string(&mut out)
        .map_err(|e| CorpusError::from(e).in_file(path))?;
    Ok(out)
}

/// Collapses whitespace runs (control characters included) to single spaces
/// and trims the ends.
pub fn normalize_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for word in raw
        .split(|c: char| c.is_whitespace() || c.is_control())
        .filter(|w| !w.is_empty())
    {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Whitespace tokens of normalized text.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Ascending numeric PMID order; non-numeric identifiers sort after, lexically.
pub(crate) fn pmid_sort_key(pmid: &str) -> (u8, u64, &str) {
    match pmid.parse::<u64>() {
        Ok(n) => (0, n, ""),
        Err(_) => (1, 0, pmid),
    }
}

pub(crate) fn current_year() -> i32 {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    // days since 1970-01-01 to civil year (proleptic Gregorian)
    let days = (secs / 86_400) as i64 + 719_468;
    let era = days.div_euclid(146_097);
    let doe = days.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    (yoe + era * 400 + if month <= 2 { 1 } else { 0 }) as i32
}
